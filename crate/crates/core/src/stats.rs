//! Synthetic readings and distribution fitting.
//!
//! Exponential draws use the inverse CDF `x = -mean * ln(1 - u)` on the
//! `f64` uniform stream of `ChaCha8Rng` (`rand`'s `Standard`, which yields
//! `u` in `[0, 1)`). Draws become readings by rounding half up to whole Wh,
//! with negative values clamped to 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};
use thiserror::Error;

use crate::model::{ReadingMatrix, Wh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("exponential mean must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("normal standard deviation must be positive and finite, got {0}")]
    BadStdDev(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("all samples are zero")]
    AllZero,
    #[error("negative or non-finite sample {0}")]
    BadSample(f64),
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("matrix needs at least one meter and one period")]
    EmptyShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    /// Mean in Wh (the inverse of the rate).
    Exponential {
        mean: f64,
    },
    Normal {
        mean: f64,
        std_dev: f64,
    },
}

impl DistributionSpec {
    pub fn exponential(mean: f64) -> Result<Self, StatsError> {
        let s = Self::Exponential { mean };
        s.validate()?;
        Ok(s)
    }

    pub fn normal(mean: f64, std_dev: f64) -> Result<Self, StatsError> {
        let s = Self::Normal { mean, std_dev };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        match *self {
            Self::Exponential { mean } if !(mean > 0.0 && mean.is_finite()) => {
                Err(StatsError::BadMean(mean))
            }
            Self::Normal { mean, .. } if !mean.is_finite() => Err(StatsError::BadMean(mean)),
            Self::Normal { std_dev, .. } if !(std_dev > 0.0 && std_dev.is_finite()) => {
                Err(StatsError::BadStdDev(std_dev))
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Normal { .. } => "normal",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / mean).exp_m1()
                }
            }
            Self::Normal { mean, std_dev } => NormalCdf::new(mean, std_dev)
                .expect("validated parameters")
                .cdf(x),
        }
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match *self {
            Self::Exponential { mean } => -mean * (-p).ln_1p(),
            Self::Normal { mean, std_dev } => NormalCdf::new(mean, std_dev)
                .expect("validated parameters")
                .inverse_cdf(p),
        }
    }

    /// One continuous draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { mean } => {
                let u: f64 = rng.gen();
                -mean * (-u).ln_1p()
            }
            Self::Normal { mean, std_dev } => Normal::new(mean, std_dev)
                .expect("validated parameters")
                .sample(rng),
        }
    }

    pub fn draws<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}

/// Round half up to whole Wh; negatives become 0.
pub fn to_reading(x: f64) -> Wh {
    if x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as Wh
    }
}

/// Meter 1 drawn from `target`, meters 2..n from `others`, one
/// `ChaCha8Rng` stream seeded by `seed`, filled meter by meter.
pub fn sample_reading_matrix(
    n: usize,
    t: usize,
    target: &DistributionSpec,
    others: &DistributionSpec,
    seed: u64,
) -> Result<ReadingMatrix, StatsError> {
    if n == 0 || t == 0 {
        return Err(StatsError::EmptyShape);
    }
    target.validate()?;
    others.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let spec = if i == 0 { target } else { others };
            (0..t).map(|_| to_reading(spec.draw(&mut rng))).collect()
        })
        .collect();
    Ok(ReadingMatrix::from_rows(rows).expect("non-empty rectangular"))
}

fn check_samples(samples: &[f64], needed: usize) -> Result<(), StatsError> {
    if samples.len() < needed {
        return Err(StatsError::TooFewSamples {
            needed,
            got: samples.len(),
        });
    }
    if let Some(&bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(StatsError::BadSample(bad));
    }
    Ok(())
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// UMVUE of the exponential mean: the sample mean.
pub fn fit_exponential(samples: &[f64]) -> Result<DistributionSpec, StatsError> {
    check_samples(samples, 2)?;
    if let Some(&neg) = samples.iter().find(|&&x| x < 0.0) {
        return Err(StatsError::BadSample(neg));
    }
    if samples.iter().all(|&x| x == 0.0) {
        return Err(StatsError::AllZero);
    }
    Ok(DistributionSpec::Exponential {
        mean: mean(samples),
    })
}

/// Unbiased rate estimate `(m - 1) / (m * mean)`, companion to
/// [`fit_exponential`].
pub fn unbiased_rate(samples: &[f64]) -> Result<f64, StatsError> {
    let DistributionSpec::Exponential { mean } = fit_exponential(samples)? else {
        unreachable!()
    };
    let m = samples.len() as f64;
    Ok((m - 1.0) / (m * mean))
}

/// Sample mean and unbiased sample variance.
pub fn fit_normal(samples: &[f64]) -> Result<DistributionSpec, StatsError> {
    check_samples(samples, 2)?;
    let mu = mean(samples);
    let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(DistributionSpec::Normal {
        mean: mu,
        std_dev: var.sqrt(),
    })
}

/// One-sample Cramér–von Mises statistic
/// `W² = 1/(12m) + Σ ((2i-1)/(2m) - F(x_(i)))²`.
pub fn cvm_statistic(samples: &[f64], spec: &DistributionSpec) -> Result<f64, StatsError> {
    spec.validate()?;
    check_samples(samples, 1)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| ((2 * i + 1) as f64 / (2.0 * m) - spec.cdf(x)).powi(2))
        .sum();
    Ok(1.0 / (12.0 * m) + sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: DistributionSpec,
    pub cvm: f64,
    pub sample_size: usize,
}

/// Fit each candidate family and order by W², best first. Works on the
/// sorted sample so the result does not depend on input order.
pub fn rank_distributions(samples: &[f64]) -> Result<Vec<FitResult>, StatsError> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let samples = &sorted[..];
    let fits = [fit_exponential(samples)?, fit_normal(samples)?];
    let mut out = fits
        .into_iter()
        .map(|spec| {
            Ok(FitResult {
                cvm: cvm_statistic(samples, &spec)?,
                spec,
                sample_size: samples.len(),
            })
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    out.sort_by(|a, b| a.cvm.total_cmp(&b.cvm));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp(mean: f64) -> DistributionSpec {
        DistributionSpec::exponential(mean).unwrap()
    }

    #[test]
    fn sampled_means() {
        let m = sample_reading_matrix(2, 10_000, &exp(100.0), &exp(100.0), 5).unwrap();
        for row in m.rows() {
            let mean = row.iter().sum::<u64>() as f64 / row.len() as f64;
            assert!((95.0..=105.0).contains(&mean), "{mean}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_reading_matrix(3, 20, &exp(500.0), &exp(100.0), 9).unwrap();
        let b = sample_reading_matrix(3, 20, &exp(500.0), &exp(100.0), 9).unwrap();
        assert_eq!(a, b);
        let c = sample_reading_matrix(3, 20, &exp(500.0), &exp(100.0), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_rejects_bad_specs() {
        assert!(sample_reading_matrix(
            2,
            2,
            &DistributionSpec::Exponential { mean: 0.0 },
            &exp(1.0),
            0
        )
        .is_err());
        assert!(DistributionSpec::normal(10.0, 0.0).is_err());
        assert_eq!(
            sample_reading_matrix(0, 2, &exp(1.0), &exp(1.0), 0),
            Err(StatsError::EmptyShape)
        );
    }

    #[test]
    fn narrow_normal_gives_near_constant_rows() {
        let spec = DistributionSpec::normal(200.0, 0.01).unwrap();
        let m = sample_reading_matrix(2, 50, &spec, &spec, 1).unwrap();
        assert!(m.rows().flatten().all(|&v| v == 200));
    }

    #[test]
    fn rounding() {
        assert_eq!(to_reading(-3.2), 0);
        assert_eq!(to_reading(2.5), 3);
        assert_eq!(to_reading(2.4999), 2);
    }

    #[test]
    fn exponential_fit() {
        assert_eq!(
            fit_exponential(&[100.0; 4]).unwrap(),
            DistributionSpec::Exponential { mean: 100.0 }
        );
        assert_eq!(
            fit_exponential(&[50.0, 150.0]).unwrap(),
            DistributionSpec::Exponential { mean: 100.0 }
        );
        assert_eq!(fit_exponential(&[0.0, 0.0]), Err(StatsError::AllZero));
        assert!(matches!(
            fit_exponential(&[1.0]),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert_eq!(unbiased_rate(&[50.0, 150.0]).unwrap(), 1.0 / 200.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = exp(200.0).draws(&mut rng, 10_000);
        let DistributionSpec::Exponential { mean } = fit_exponential(&xs).unwrap() else {
            panic!()
        };
        assert!((190.0..=210.0).contains(&mean), "{mean}");
    }

    #[test]
    fn normal_fit() {
        assert_eq!(
            fit_normal(&[1.0, 3.0]).unwrap(),
            DistributionSpec::Normal {
                mean: 2.0,
                std_dev: 2f64.sqrt()
            }
        );
        assert_eq!(fit_normal(&[5.0; 3]), Err(StatsError::ZeroVariance));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = DistributionSpec::normal(100.0, 20.0)
            .unwrap()
            .draws(&mut rng, 10_000);
        let DistributionSpec::Normal { mean, std_dev } = fit_normal(&xs).unwrap() else {
            panic!()
        };
        assert!((98.0..=102.0).contains(&mean));
        assert!((19.0..=21.0).contains(&std_dev));
    }

    #[test]
    fn cvm_floor_on_quantile_grid() {
        for m in [1usize, 2, 7, 100] {
            let spec = exp(100.0);
            let grid: Vec<f64> = (0..m)
                .map(|i| spec.inverse_cdf((2 * i + 1) as f64 / (2 * m) as f64))
                .collect();
            let w = cvm_statistic(&grid, &spec).unwrap();
            assert!((w - 1.0 / (12.0 * m as f64)).abs() < 1e-12, "m={m} w={w}");
        }
        let median = exp(100.0).inverse_cdf(0.5);
        let w = cvm_statistic(&[median], &exp(100.0)).unwrap();
        assert!((w - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn cvm_matches_direct_sum() {
        let xs = [12.0, 250.0, 71.0, 3.0, 140.0];
        // sorted: 3, 12, 71, 140, 250
        let direct = 1.0 / 60.0
            + (0.1 - (1.0 - (-0.03f64).exp())).powi(2)
            + (0.3 - (1.0 - (-0.12f64).exp())).powi(2)
            + (0.5 - (1.0 - (-0.71f64).exp())).powi(2)
            + (0.7 - (1.0 - (-1.40f64).exp())).powi(2)
            + (0.9 - (1.0 - (-2.50f64).exp())).powi(2);
        let w = cvm_statistic(&xs, &exp(100.0)).unwrap();
        assert!((w - direct).abs() < 1e-12);
    }

    #[test]
    fn ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs = exp(100.0).draws(&mut rng, 10_000);
        let r = rank_distributions(&xs).unwrap();
        assert_eq!(r[0].spec.family(), "exponential");
        assert!(r[0].cvm <= r[1].cvm);

        let normal = DistributionSpec::normal(500.0, 50.0).unwrap();
        let ys: Vec<f64> = normal
            .draws(&mut rng, 10_000)
            .into_iter()
            .map(|y| y.max(0.0))
            .collect();
        let r = rank_distributions(&ys).unwrap();
        assert_eq!(r[0].spec.family(), "normal");

        let mut rev = xs.clone();
        rev.reverse();
        assert_eq!(
            rank_distributions(&rev).unwrap(),
            rank_distributions(&xs).unwrap()
        );
    }

    proptest! {
        #[test]
        fn cvm_permutation_invariant_and_floored(
            xs in proptest::collection::vec(0.0f64..1000.0, 1..60),
            rot in 0usize..60,
        ) {
            let spec = exp(100.0);
            let w = cvm_statistic(&xs, &spec).unwrap();
            prop_assert!(w >= 1.0 / (12.0 * xs.len() as f64) - 1e-12);
            let mut ys = xs.clone();
            ys.rotate_left(rot % xs.len());
            prop_assert_eq!(cvm_statistic(&ys, &spec).unwrap(), w);
        }

        #[test]
        fn exponential_fit_scales(
            xs in proptest::collection::vec(0.0f64..1000.0, 2..40),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(xs.iter().any(|&x| x > 0.0));
            let DistributionSpec::Exponential { mean: a } = fit_exponential(&xs).unwrap() else { unreachable!() };
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let DistributionSpec::Exponential { mean: b } = fit_exponential(&scaled).unwrap() else { unreachable!() };
            prop_assert!((b - a * c).abs() <= 1e-9 * (a * c).max(1.0));
        }
    }
}
