//! Fixtures shared by the benchmarks.

use meterprivacy::{
    anonymize, build_ground_truth, sample_reading_matrix, AnonymizedInstance, DistributionSpec,
};

/// An anonymized `n x t` instance with exponential(100) readings.
pub fn synthetic_instance(n: usize, t: usize, seed: u64) -> AnonymizedInstance {
    let spec = DistributionSpec::exponential(100.0).expect("valid mean");
    let matrix = sample_reading_matrix(n, t, &spec, &spec, seed).expect("valid shape");
    let gt = build_ground_truth(matrix).expect("small readings");
    anonymize(&gt, seed).0
}
