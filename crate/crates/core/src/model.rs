//! Ground-truth readings, the attacker's pseudonymized view, and the shuffle
//! that turns one into the other.
//!
//! All readings are exact non-negative integers in watt-hours. Meters and
//! periods are indexed from 0 internally; reports add 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A reading (or a sum of readings) in Wh.
pub type Wh = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("matrix must have at least one meter and one period")]
    Empty,
    #[error("row {row} has {found} periods, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("negative reading {value} at meter {meter}, period {period}")]
    NegativeReading {
        meter: usize,
        period: usize,
        value: i64,
    },
    #[error("period {period} lists {found} values, expected {expected}")]
    PeriodArity {
        period: usize,
        found: usize,
        expected: usize,
    },
    #[error("expected {expected} totals, found {found}")]
    TotalsArity { found: usize, expected: usize },
    #[error("sum of period values ({values}) differs from sum of totals ({totals})")]
    Conservation { values: u128, totals: u128 },
    #[error("reading sum overflows")]
    Overflow,
}

/// Ground-truth readings of `n` meters over `t` periods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadingMatrix {
    meters: usize,
    periods: usize,
    // row-major, meter i period j at i * periods + j
    cells: Vec<Wh>,
}

impl ReadingMatrix {
    pub fn from_rows(rows: Vec<Vec<Wh>>) -> Result<Self, ModelError> {
        let meters = rows.len();
        let periods = rows.first().map_or(0, Vec::len);
        if meters == 0 || periods == 0 {
            return Err(ModelError::Empty);
        }
        let mut cells = Vec::with_capacity(meters * periods);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != periods {
                return Err(ModelError::RaggedRow {
                    row: row + 1,
                    found: r.len(),
                    expected: periods,
                });
            }
            cells.extend(r);
        }
        Ok(Self {
            meters,
            periods,
            cells,
        })
    }

    /// Signed constructor for callers that have not yet checked the sign of
    /// their data.
    pub fn from_signed_rows(rows: Vec<Vec<i64>>) -> Result<Self, ModelError> {
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (j, v) in row.into_iter().enumerate() {
                if v < 0 {
                    return Err(ModelError::NegativeReading {
                        meter: i + 1,
                        period: j + 1,
                        value: v,
                    });
                }
                r.push(v as Wh);
            }
            out.push(r);
        }
        Self::from_rows(out)
    }

    pub fn meters(&self) -> usize {
        self.meters
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn get(&self, meter: usize, period: usize) -> Wh {
        self.cells[meter * self.periods + period]
    }

    pub fn row(&self, meter: usize) -> &[Wh] {
        &self.cells[meter * self.periods..(meter + 1) * self.periods]
    }

    pub fn column(&self, period: usize) -> Vec<Wh> {
        (0..self.meters).map(|i| self.get(i, period)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Wh]> {
        self.cells.chunks(self.periods)
    }
}

/// Readings together with each meter's billing total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub matrix: ReadingMatrix,
    pub totals: Vec<Wh>,
}

/// Row sums of the matrix: the per-meter billing totals.
pub fn build_ground_truth(matrix: ReadingMatrix) -> Result<GroundTruth, ModelError> {
    let totals = matrix
        .rows()
        .map(|r| {
            r.iter()
                .try_fold(0 as Wh, |acc, &v| acc.checked_add(v))
                .ok_or(ModelError::Overflow)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroundTruth { matrix, totals })
}

/// What the energy supplier sees: per-period readings with the meter identity
/// stripped, and per-meter totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymizedInstance {
    meters: usize,
    periods: Vec<Vec<Wh>>,
    totals: Vec<Wh>,
}

impl AnonymizedInstance {
    /// Validates arity and conservation of the total sum.
    pub fn new(periods: Vec<Vec<Wh>>, totals: Vec<Wh>) -> Result<Self, ModelError> {
        let meters = totals.len();
        if meters == 0 {
            return Err(ModelError::Empty);
        }
        for (j, p) in periods.iter().enumerate() {
            if p.len() != meters {
                return Err(ModelError::PeriodArity {
                    period: j + 1,
                    found: p.len(),
                    expected: meters,
                });
            }
        }
        let values: u128 = periods.iter().flatten().map(|&v| v as u128).sum();
        let total_sum: u128 = totals.iter().map(|&v| v as u128).sum();
        if values != total_sum {
            return Err(ModelError::Conservation {
                values,
                totals: total_sum,
            });
        }
        Ok(Self {
            meters,
            periods,
            totals,
        })
    }

    pub fn meters(&self) -> usize {
        self.meters
    }

    pub fn period_count(&self) -> usize {
        self.periods.len()
    }

    pub fn period(&self, j: usize) -> &[Wh] {
        &self.periods[j]
    }

    pub fn periods(&self) -> &[Vec<Wh>] {
        &self.periods
    }

    pub fn totals(&self) -> &[Wh] {
        &self.totals
    }

    pub fn total(&self, meter: usize) -> Wh {
        self.totals[meter]
    }
}

/// The secret per-period shuffles. `perms[j][i]` is the position in period `j`
/// of meter `i`'s reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationRecord {
    pub perms: Vec<Vec<usize>>,
}

impl PermutationRecord {
    /// Position of `meter`'s reading in each period.
    pub fn selection_for(&self, meter: usize) -> Vec<usize> {
        self.perms.iter().map(|p| p[meter]).collect()
    }

    /// Undo the shuffle.
    pub fn deanonymize(&self, inst: &AnonymizedInstance) -> ReadingMatrix {
        let rows = (0..inst.meters())
            .map(|i| {
                self.perms
                    .iter()
                    .enumerate()
                    .map(|(j, p)| inst.period(j)[p[i]])
                    .collect()
            })
            .collect();
        ReadingMatrix::from_rows(rows).expect("record and instance have matching shape")
    }
}

/// Publishes every period in a seeded random order.
///
/// Each period's permutation is a Fisher-Yates shuffle (`rand`'s
/// `SliceRandom::shuffle`) of `0..n` driven by a `ChaCha8Rng` seeded with
/// `seed`; periods are shuffled in order 1..t from the same stream.
pub fn anonymize(gt: &GroundTruth, seed: u64) -> (AnonymizedInstance, PermutationRecord) {
    let n = gt.matrix.meters();
    let t = gt.matrix.periods();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut periods = Vec::with_capacity(t);
    let mut perms = Vec::with_capacity(t);
    for j in 0..t {
        let mut pi: Vec<usize> = (0..n).collect();
        pi.shuffle(&mut rng);
        let mut values = vec![0; n];
        for (i, &pos) in pi.iter().enumerate() {
            values[pos] = gt.matrix.get(i, j);
        }
        periods.push(values);
        perms.push(pi);
    }
    let inst = AnonymizedInstance {
        meters: n,
        periods,
        totals: gt.totals.clone(),
    };
    (inst, PermutationRecord { perms })
}
