//! Exact counting of single-meter re-identification solutions.
//!
//! A solution for meter `i` picks one position per period such that the
//! picked readings sum to `E_i`. This is a multiple-choice subset-sum
//! problem; we count every solution with a forward and a backward dynamic
//! program over partial sums, using arbitrary-precision counts since the
//! number of solutions grows like `n^t`.
//!
//! Per-position marginals combine the two passes:
//!
//! ```text
//! counts[j][k] = sum_s forward[j](s) * backward[j+1](E - s - v_jk)
//! ```
//!
//! where `forward[j]` counts ways for periods `0..j` to reach `s` and
//! `backward[j+1]` counts ways for periods `j+1..t` to reach the rest.

use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{AnonymizedInstance, Wh};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("meter {meter} out of range (instance has {meters} meters)")]
    InvalidMeter { meter: usize, meters: usize },
    #[error("no selection reaches the target total {target}: instance is inconsistent")]
    NoSolutions { target: Wh },
    #[error("{0}")]
    Guard(#[from] GuardExceeded),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GuardExceeded {
    #[error("count tables need an estimated {estimated} bytes, budget is {budget}")]
    Memory { estimated: u64, budget: u64 },
    #[error("time budget exhausted")]
    Time,
}

/// Resource guards for one solve. The default is unlimited.
#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    pub max_table_bytes: Option<u64>,
    pub deadline: Option<Instant>,
}

impl Limits {
    pub fn unlimited() -> Self {
        Self::default()
    }

    fn check_time(&self) -> Result<(), GuardExceeded> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(GuardExceeded::Time),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Sparse map from partial sum to number of ways, sorted by key, without
/// zero entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stage {
    entries: Vec<(Wh, BigUint)>,
}

impl Stage {
    fn unit() -> Self {
        Self {
            entries: vec![(0, BigUint::one())],
        }
    }

    pub fn get(&self, key: Wh) -> Option<&BigUint> {
        self.entries
            .binary_search_by_key(&key, |(k, _)| *k)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Wh, &BigUint)> {
        self.entries.iter().map(|(k, c)| (*k, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-stage partial-sum counts for one target total.
///
/// Forward stage `j` (0..=t) covers periods `1..=j`; stage 0 is `{0 -> 1}`.
/// Backward stage `j` (1..=t+1) covers periods `j..=t`; stage `t+1` is
/// `{0 -> 1}`. Keys never exceed the target and are pruned to sums that the
/// remaining periods can still complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    direction: Direction,
    target: Wh,
    stages: Vec<Stage>,
}

impl CountTable {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn target(&self) -> Wh {
        self.target
    }

    /// Stage by its documented number.
    pub fn stage(&self, number: usize) -> &Stage {
        match self.direction {
            Direction::Forward => &self.stages[number],
            Direction::Backward => &self.stages[number - 1],
        }
    }

    /// Count at `key` in stage `number`, zero when absent.
    pub fn count(&self, number: usize, key: Wh) -> BigUint {
        self.stage(number).get(key).cloned().unwrap_or_default()
    }

    /// Number of selections over all periods reaching the target.
    pub fn solutions(&self) -> BigUint {
        let full = match self.direction {
            Direction::Forward => self.stages.len() - 1,
            Direction::Backward => 1,
        };
        self.count(full, self.target)
    }
}

/// Distinct values of one period with their multiplicity, ascending.
fn distinct_values(values: &[Wh]) -> Vec<(Wh, u32)> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(Wh, u32)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((w, m)) if *w == v => *m += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Inclusive key window that can still reach `target`, given the min and
/// max sum of the periods not yet covered. `None` when empty.
fn window(target: Wh, covered_max: u128, rest_min: u128, rest_max: u128) -> Option<(Wh, Wh)> {
    let target = target as u128;
    if rest_min > target {
        return None;
    }
    let lo = target.saturating_sub(rest_max);
    let hi = (target - rest_min).min(covered_max);
    (lo <= hi).then_some((lo as Wh, hi as Wh))
}

struct Bounds {
    // prefix_min[j] = sum of per-period minima over periods 0..j
    prefix_min: Vec<u128>,
    prefix_max: Vec<u128>,
}

impl Bounds {
    fn new(inst: &AnonymizedInstance) -> Self {
        let t = inst.period_count();
        let mut prefix_min = vec![0u128; t + 1];
        let mut prefix_max = vec![0u128; t + 1];
        for (j, p) in inst.periods().iter().enumerate() {
            let lo = p.iter().copied().min().unwrap_or(0) as u128;
            let hi = p.iter().copied().max().unwrap_or(0) as u128;
            prefix_min[j + 1] = prefix_min[j] + lo;
            prefix_max[j + 1] = prefix_max[j] + hi;
        }
        Self {
            prefix_min,
            prefix_max,
        }
    }

    fn t(&self) -> usize {
        self.prefix_min.len() - 1
    }

    fn range_min(&self, from: usize, to: usize) -> u128 {
        self.prefix_min[to] - self.prefix_min[from]
    }

    fn range_max(&self, from: usize, to: usize) -> u128 {
        self.prefix_max[to] - self.prefix_max[from]
    }

    /// Key window for forward stage `j` (periods `0..j` covered).
    fn forward_window(&self, target: Wh, j: usize) -> Option<(Wh, Wh)> {
        let t = self.t();
        window(
            target,
            self.range_max(0, j),
            self.range_min(j, t),
            self.range_max(j, t),
        )
    }

    /// Key window for the backward stage covering periods `j..t`.
    fn backward_window(&self, target: Wh, j: usize) -> Option<(Wh, Wh)> {
        let t = self.t();
        window(
            target,
            self.range_max(j, t),
            self.range_min(0, j),
            self.range_max(0, j),
        )
    }
}

/// Upper bound on the bytes both count tables can occupy.
pub fn estimate_table_bytes(inst: &AnonymizedInstance, target: Wh) -> u64 {
    let bounds = Bounds::new(inst);
    let t = bounds.t();
    let keys: u128 = (0..=t)
        .map(|j| {
            let f = bounds
                .forward_window(target, j)
                .map_or(0, |(lo, hi)| (hi - lo) as u128 + 1);
            let b = bounds
                .backward_window(target, j)
                .map_or(0, |(lo, hi)| (hi - lo) as u128 + 1);
            f + b
        })
        .sum();
    // count bits are at most log2(prod n) = t * log2(n)
    let bits = (t as f64 * (inst.meters().max(1) as f64).log2()).ceil() as u128 + 1;
    let limbs = bits.div_ceil(64);
    let per_entry = 8 + std::mem::size_of::<BigUint>() as u128 + 8 * limbs;
    (keys * per_entry).min(u64::MAX as u128) as u64
}

fn check_memory(
    inst: &AnonymizedInstance,
    target: Wh,
    limits: &Limits,
) -> Result<(), GuardExceeded> {
    if let Some(budget) = limits.max_table_bytes {
        let estimated = estimate_table_bytes(inst, target);
        if estimated > budget {
            return Err(GuardExceeded::Memory { estimated, budget });
        }
    }
    Ok(())
}

/// Extend `prev` (keys in some window) by one period into `window`.
fn extend(
    prev: &Stage,
    values: &[(Wh, u32)],
    window: Option<(Wh, Wh)>,
    limits: &Limits,
) -> Result<Stage, GuardExceeded> {
    let Some((lo, hi)) = window else {
        return Ok(Stage::default());
    };
    let mut dense: Vec<BigUint> = vec![BigUint::zero(); (hi - lo) as usize + 1];
    for (step, (s, c)) in prev.iter().enumerate() {
        if step % 4096 == 0 {
            limits.check_time()?;
        }
        for &(v, mult) in values {
            let key = s + v;
            if key < lo {
                continue;
            }
            if key > hi {
                break;
            }
            let slot = &mut dense[(key - lo) as usize];
            if mult == 1 {
                *slot += c;
            } else {
                *slot += c * mult;
            }
        }
    }
    let entries = dense
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| (lo + i as Wh, c))
        .collect();
    Ok(Stage { entries })
}

fn forward_table(
    inst: &AnonymizedInstance,
    target: Wh,
    limits: &Limits,
) -> Result<CountTable, GuardExceeded> {
    let bounds = Bounds::new(inst);
    let t = inst.period_count();
    let mut stages = Vec::with_capacity(t + 1);
    let mut first = Stage::unit();
    if bounds.forward_window(target, 0).is_none() {
        first = Stage::default();
    }
    stages.push(first);
    for j in 0..t {
        limits.check_time()?;
        let values = distinct_values(inst.period(j));
        let next = extend(
            &stages[j],
            &values,
            bounds.forward_window(target, j + 1),
            limits,
        )?;
        stages.push(next);
    }
    Ok(CountTable {
        direction: Direction::Forward,
        target,
        stages,
    })
}

fn backward_table(
    inst: &AnonymizedInstance,
    target: Wh,
    limits: &Limits,
) -> Result<CountTable, GuardExceeded> {
    let bounds = Bounds::new(inst);
    let t = inst.period_count();
    // built from the end, reversed at the end
    let mut rev = Vec::with_capacity(t + 1);
    let mut last = Stage::unit();
    if bounds.backward_window(target, t).is_none() {
        last = Stage::default();
    }
    rev.push(last);
    for j in (0..t).rev() {
        limits.check_time()?;
        let values = distinct_values(inst.period(j));
        let prev = rev.last().expect("non-empty");
        let next = extend(prev, &values, bounds.backward_window(target, j), limits)?;
        rev.push(next);
    }
    rev.reverse();
    Ok(CountTable {
        direction: Direction::Backward,
        target,
        stages: rev,
    })
}

/// Forward pass over periods `1..=t`. Infeasible targets give zero solutions.
pub fn forward_counts(inst: &AnonymizedInstance, target_total: Wh) -> CountTable {
    forward_table(inst, target_total, &Limits::unlimited()).expect("no limits")
}

/// Backward pass over periods `t..=1`.
pub fn backward_counts(inst: &AnonymizedInstance, target_total: Wh) -> CountTable {
    backward_table(inst, target_total, &Limits::unlimited()).expect("no limits")
}

pub fn forward_counts_with(
    inst: &AnonymizedInstance,
    target_total: Wh,
    limits: &Limits,
) -> Result<CountTable, SolveError> {
    check_memory(inst, target_total, limits)?;
    Ok(forward_table(inst, target_total, limits)?)
}

pub fn backward_counts_with(
    inst: &AnonymizedInstance,
    target_total: Wh,
    limits: &Limits,
) -> Result<CountTable, SolveError> {
    check_memory(inst, target_total, limits)?;
    Ok(backward_table(inst, target_total, limits)?)
}

/// Per-period, per-position solution counts for one target meter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalCounts {
    /// 0-based meter index.
    pub target_meter: usize,
    pub target_total: Wh,
    pub total_solutions: BigUint,
    /// `counts[j][k]`: solutions selecting position `k` at period `j`.
    pub counts: Vec<Vec<BigUint>>,
}

impl MarginalCounts {
    pub fn period_count(&self) -> usize {
        self.counts.len()
    }

    pub fn meters(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }
}

/// Exact marginals for `target_meter` (0-based), without resource guards.
pub fn marginal_counts(
    inst: &AnonymizedInstance,
    target_meter: usize,
) -> Result<MarginalCounts, SolveError> {
    marginal_counts_with(inst, target_meter, &Limits::unlimited())
}

pub fn marginal_counts_with(
    inst: &AnonymizedInstance,
    target_meter: usize,
    limits: &Limits,
) -> Result<MarginalCounts, SolveError> {
    if target_meter >= inst.meters() {
        return Err(SolveError::InvalidMeter {
            meter: target_meter + 1,
            meters: inst.meters(),
        });
    }
    let target = inst.total(target_meter);
    check_memory(inst, target, limits)?;
    let (fwd, bwd) = rayon::join(
        || forward_table(inst, target, limits),
        || backward_table(inst, target, limits),
    );
    let (fwd, bwd) = (fwd?, bwd?);
    let total = fwd.solutions();
    if total.is_zero() {
        return Err(SolveError::NoSolutions { target });
    }
    debug_assert_eq!(total, bwd.solutions());

    let counts = (0..inst.period_count())
        .into_par_iter()
        .map(|j| {
            limits.check_time()?;
            let before = &fwd.stages[j];
            let after = &bwd.stages[j + 1];
            let mut by_value: Vec<(Wh, BigUint)> = Vec::new();
            let row = inst
                .period(j)
                .iter()
                .map(|&v| {
                    if let Some((_, c)) = by_value.iter().find(|(w, _)| *w == v) {
                        return c.clone();
                    }
                    let mut acc = BigUint::zero();
                    if let Some(need) = target.checked_sub(v) {
                        for (s, f) in before.iter() {
                            if s > need {
                                break;
                            }
                            if let Some(b) = after.get(need - s) {
                                acc += f * b;
                            }
                        }
                    }
                    by_value.push((v, acc.clone()));
                    acc
                })
                .collect::<Vec<_>>();
            Ok(row)
        })
        .collect::<Result<Vec<_>, GuardExceeded>>()?;

    Ok(MarginalCounts {
        target_meter,
        target_total: target,
        total_solutions: total,
        counts,
    })
}

/// One position per period (0-based positions).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selection(pub Vec<usize>);

impl Selection {
    pub fn values(&self, inst: &AnonymizedInstance) -> Vec<Wh> {
        self.0
            .iter()
            .enumerate()
            .map(|(j, &k)| inst.period(j)[k])
            .collect()
    }
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| (k + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub selections: Vec<Selection>,
    /// More solutions exist than were emitted.
    pub truncated: bool,
}

/// Lists solutions for `target_meter` in lexicographic order of position
/// vectors (period 1 first, lower positions first), stopping after `limit`.
pub fn enumerate_solutions(
    inst: &AnonymizedInstance,
    target_meter: usize,
    limit: usize,
) -> Result<Enumeration, SolveError> {
    if target_meter >= inst.meters() {
        return Err(SolveError::InvalidMeter {
            meter: target_meter + 1,
            meters: inst.meters(),
        });
    }
    let limit = limit.max(1);
    let target = inst.total(target_meter);
    let bwd = backward_counts(inst, target);
    let mut out = Enumeration {
        selections: Vec::new(),
        truncated: false,
    };
    let mut path = Vec::with_capacity(inst.period_count());
    descend(inst, &bwd, 0, target, &mut path, limit, &mut out);
    Ok(out)
}

fn descend(
    inst: &AnonymizedInstance,
    bwd: &CountTable,
    j: usize,
    remaining: Wh,
    path: &mut Vec<usize>,
    limit: usize,
    out: &mut Enumeration,
) -> bool {
    if j == inst.period_count() {
        if out.selections.len() == limit {
            out.truncated = true;
            return false;
        }
        out.selections.push(Selection(path.clone()));
        return true;
    }
    for (k, &v) in inst.period(j).iter().enumerate() {
        let Some(rest) = remaining.checked_sub(v) else {
            continue;
        };
        // backward stage j+2 (1-based) covers periods after j
        if bwd.stage(j + 2).get(rest).is_none() {
            continue;
        }
        path.push(k);
        let go_on = descend(inst, bwd, j + 1, rest, path, limit, out);
        path.pop();
        if !go_on {
            return false;
        }
    }
    true
}
