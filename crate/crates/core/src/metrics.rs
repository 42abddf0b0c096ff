//! Attacker probabilities and Shannon entropy over solution counts.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::mcssp::MarginalCounts;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no solutions: probabilities are undefined")]
    NoSolutions,
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
}

/// Fractional bits kept when dividing a count by the solution total
/// (about 38 significant decimal digits).
const RATIO_BITS: u64 = 128;

/// `num / den` as f64, through a 128-bit fixed-point quotient so that
/// totals far beyond f64 range still give full-precision ratios.
pub fn exact_ratio(num: &BigUint, den: &BigUint) -> f64 {
    assert!(!den.is_zero(), "ratio with zero denominator");
    if num.is_zero() {
        return 0.0;
    }
    let q: BigUint = (num << RATIO_BITS) / den;
    let shift = q.bits().saturating_sub(120);
    let mantissa = (q >> shift).to_f64().expect("fits after shift");
    mantissa * 2f64.powi(shift as i32 - RATIO_BITS as i32)
}

/// The attacker's distribution over positions at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodDistribution {
    /// 0-based period index.
    pub period: usize,
    pub probabilities: Vec<f64>,
}

/// Per-period entropies for one target meter.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub target_meter: usize,
    pub total_solutions: BigUint,
    pub entropies: Vec<f64>,
    pub average: f64,
    pub max: f64,
}

pub fn marginal_probabilities(
    mc: &MarginalCounts,
) -> Result<Vec<PeriodDistribution>, MetricsError> {
    if mc.total_solutions.is_zero() {
        return Err(MetricsError::NoSolutions);
    }
    Ok(mc
        .counts
        .iter()
        .enumerate()
        .map(|(period, row)| PeriodDistribution {
            period,
            probabilities: row
                .iter()
                .map(|c| exact_ratio(c, &mc.total_solutions))
                .collect(),
        })
        .collect())
}

/// Shannon entropy in bits; zero-probability terms contribute nothing.
pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    let h: f64 = probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    // -0.0 and tiny negative rounding on degenerate inputs
    h.max(0.0)
}

pub fn period_entropy(dist: &PeriodDistribution) -> f64 {
    entropy_bits(&dist.probabilities)
}

pub fn entropy_report(mc: &MarginalCounts) -> Result<EntropyReport, MetricsError> {
    let dists = marginal_probabilities(mc)?;
    let entropies: Vec<f64> = dists.iter().map(period_entropy).collect();
    let average = if entropies.is_empty() {
        0.0
    } else {
        entropies.iter().sum::<f64>() / entropies.len() as f64
    };
    Ok(EntropyReport {
        target_meter: mc.target_meter,
        total_solutions: mc.total_solutions.clone(),
        entropies,
        average,
        max: (mc.meters().max(1) as f64).log2(),
    })
}

/// A position the attacker can pin down with at least the given confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevealedPosition {
    pub period: usize,
    pub position: usize,
    pub probability: f64,
}

/// Positions with probability at or above `threshold`, in period order.
///
/// With threshold 1.0 these are the periods where every solution agrees.
pub fn revealed_positions(
    dists: &[PeriodDistribution],
    threshold: f64,
) -> Result<Vec<RevealedPosition>, MetricsError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricsError::Threshold(threshold));
    }
    let mut out: Vec<RevealedPosition> = dists
        .iter()
        .flat_map(|d| {
            d.probabilities
                .iter()
                .enumerate()
                .filter(move |(_, &p)| p >= threshold)
                .map(move |(position, &probability)| RevealedPosition {
                    period: d.period,
                    position,
                    probability,
                })
        })
        .collect();
    out.sort_by_key(|r| (r.period, r.position));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::mcssp::{enumerate_solutions, marginal_counts};
    use crate::model::{anonymize, build_ground_truth, ReadingMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mc_from(counts: Vec<Vec<u64>>) -> MarginalCounts {
        let total: u64 = counts[0].iter().sum();
        MarginalCounts {
            target_meter: 0,
            target_total: 0,
            total_solutions: BigUint::from(total),
            counts: counts
                .into_iter()
                .map(|r| r.into_iter().map(BigUint::from).collect())
                .collect(),
        }
    }

    #[test]
    fn reference_entropies() {
        let h1 = entropy_bits(&[21.0 / 22.0, 1.0 / 22.0]);
        assert!((h1 - 0.2668).abs() < 5e-4, "{h1}");
        let h4 = entropy_bits(&[7.0 / 22.0, 8.0 / 22.0, 7.0 / 22.0]);
        assert!((h4 - 1.582).abs() < 5e-4, "{h4}");
    }

    #[test]
    fn closed_forms() {
        assert_eq!(entropy_bits(&[0.125; 8]), 3.0);
        assert_eq!(entropy_bits(&[1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn example_distributions() {
        let mc = marginal_counts(&example::instance(), 0).unwrap();
        let d = marginal_probabilities(&mc).unwrap();
        assert_eq!(d[0].probabilities, vec![1.0 / 22.0, 0.0, 21.0 / 22.0]);
        assert_eq!(d[3].probabilities, vec![7.0 / 22.0, 8.0 / 22.0, 7.0 / 22.0]);

        let report = entropy_report(&mc).unwrap();
        assert!((report.entropies[0] - 0.2668).abs() < 5e-4);
        assert!((report.entropies[3] - 1.582).abs() < 5e-4);
        assert_eq!(report.max, 3f64.log2());

        let revealed = revealed_positions(&d, 0.95).unwrap();
        assert!(revealed
            .iter()
            .any(|r| r.period == 0 && r.position == 2 && r.probability == 21.0 / 22.0));
    }

    #[test]
    fn fully_determined_periods_match_reference() {
        // columns of the 22 reference rows that hold a single value
        let fixed: Vec<usize> = (0..9)
            .filter(|&j| {
                example::RELAXED_SOLUTIONS
                    .iter()
                    .all(|r| r[j] == example::RELAXED_SOLUTIONS[0][j])
            })
            .collect();
        let mc = marginal_counts(&example::instance(), 0).unwrap();
        let d = marginal_probabilities(&mc).unwrap();
        let revealed: Vec<usize> = revealed_positions(&d, 1.0)
            .unwrap()
            .iter()
            .map(|r| r.period)
            .collect();
        assert_eq!(revealed, fixed);
    }

    #[test]
    fn single_meter_is_fully_revealed() {
        let mc = mc_from(vec![vec![1]; 4]);
        let d = marginal_probabilities(&mc).unwrap();
        assert!(d.iter().all(|p| p.probabilities == vec![1.0]));
        let r = entropy_report(&mc).unwrap();
        assert_eq!(r.entropies, vec![0.0; 4]);
        assert_eq!(r.max, 0.0);
        assert_eq!(revealed_positions(&d, 1.0).unwrap().len(), 4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut mc = mc_from(vec![vec![1, 1]]);
        mc.total_solutions = BigUint::zero();
        assert_eq!(marginal_probabilities(&mc), Err(MetricsError::NoSolutions));
        assert_eq!(entropy_report(&mc), Err(MetricsError::NoSolutions));
        assert!(revealed_positions(&[], 0.0).is_err());
        assert!(revealed_positions(&[], 1.5).is_err());
    }

    #[test]
    fn huge_counts_keep_precision() {
        // 32^60 solutions split 1:3
        let n = BigUint::from(32u32).pow(60);
        let quarter = &n / 4u32;
        let p = exact_ratio(&quarter, &n);
        assert_eq!(p, 0.25);
        let third = &n / 3u32;
        assert!((exact_ratio(&third, &n) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let rows = (0..4)
                .map(|_| (0..6).map(|_| rng.gen_range(0..80)).collect())
                .collect();
            let gt = build_ground_truth(ReadingMatrix::from_rows(rows).unwrap()).unwrap();
            let (inst, _) = anonymize(&gt, rng.gen());
            let report = entropy_report(&marginal_counts(&inst, 0).unwrap()).unwrap();
            let sols = enumerate_solutions(&inst, 0, usize::MAX)
                .unwrap()
                .selections;
            let total = sols.len() as f64;
            let hs: Vec<f64> = (0..6)
                .map(|j| {
                    let p: Vec<f64> = (0..4)
                        .map(|k| sols.iter().filter(|s| s.0[j] == k).count() as f64 / total)
                        .collect();
                    entropy_bits(&p)
                })
                .collect();
            let avg = hs.iter().sum::<f64>() / 6.0;
            for (a, b) in hs.iter().zip(&report.entropies) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((avg - report.average).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bounds_and_invariances(
            row in proptest::collection::vec(0u64..50, 1..10),
            scale in 1u64..1000,
            rot in 0usize..10,
        ) {
            prop_assume!(row.iter().any(|&c| c > 0));
            let n = row.len();
            let mc = mc_from(vec![row.clone()]);
            let h = entropy_report(&mc).unwrap().entropies[0];
            let max = (n as f64).log2();
            prop_assert!(h >= 0.0 && h <= max + 1e-9);
            let total: u64 = row.iter().sum();
            if row.iter().all(|&c| c == row[0]) {
                prop_assert!((h - max).abs() < 1e-9);
            }
            if row.contains(&total) {
                prop_assert_eq!(h, 0.0);
            }

            let mut rotated = row.clone();
            rotated.rotate_left(rot % n);
            let hr = entropy_report(&mc_from(vec![rotated])).unwrap().entropies[0];
            prop_assert!((h - hr).abs() < 1e-12);

            let scaled: Vec<u64> = row.iter().map(|c| c * scale).collect();
            let ps = marginal_probabilities(&mc_from(vec![scaled])).unwrap();
            let p = marginal_probabilities(&mc).unwrap();
            for (a, b) in p[0].probabilities.iter().zip(&ps[0].probabilities) {
                prop_assert!((a - b).abs() < 1e-15);
            }
            let sum: f64 = p[0].probabilities.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
