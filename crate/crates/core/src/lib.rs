//! Exact re-identification analysis for pseudonymized smart-meter readings.
//!
//! Given per-period readings published without meter identity and each
//! meter's billing total, this crate counts every assignment consistent with
//! a target meter's total ([`mcssp`]), solves the full multi-meter problem on
//! small instances ([`joint`]), and turns solution counts into per-period
//! Shannon entropy ([`metrics`]). [`stats`] and [`experiment`] generate
//! synthetic data and run seeded grid experiments; [`ingest`] reads and
//! writes the text formats.

pub mod example;
pub mod experiment;
pub mod ingest;
pub mod joint;
pub mod mcssp;
pub mod metrics;
pub mod model;
pub mod stats;

pub use experiment::{
    emit_table, reproduce_example, run_experiment, ExperimentConfig, ExperimentTable, Source,
    TableFormat,
};
pub use ingest::{
    parse_instance, parse_kwh_readings, parse_readings_csv, select_submatrix, write_instance,
};
pub use joint::{agreed_assignments, solve_joint, AgreedAssignment, JointSolutionSet};
pub use mcssp::{
    backward_counts, enumerate_solutions, forward_counts, marginal_counts, CountTable, Limits,
    MarginalCounts, Selection, SolveError,
};
pub use metrics::{
    entropy_report, marginal_probabilities, period_entropy, revealed_positions, EntropyReport,
    PeriodDistribution,
};
pub use model::{
    anonymize, build_ground_truth, AnonymizedInstance, GroundTruth, PermutationRecord,
    ReadingMatrix, Wh,
};
pub use stats::{
    cvm_statistic, fit_exponential, fit_normal, rank_distributions, sample_reading_matrix,
    DistributionSpec, FitResult,
};
