//! Exhaustive search for per-period permutations consistent with every
//! meter's billing total at once.
//!
//! The search space is `(n!)^t`, so this is only usable on small instances.
//! Solutions are kept once per distinct value assignment; permutations that
//! differ only by swapping equal readings within a period are counted in
//! `raw_permutations` but not listed separately.

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::model::{AnonymizedInstance, Wh};

pub const DEFAULT_WORK_LIMIT: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JointError {
    #[error("solution set is incomplete (work limit reached); agreement is undefined")]
    Incomplete,
    #[error("solution set is empty")]
    Empty,
}

/// One consistent assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSolution {
    /// `perms[j][i]`: position of meter `i`'s reading in period `j`. Among
    /// equal readings the lowest free position is used.
    pub perms: Vec<Vec<usize>>,
    /// `values[i][j]`: meter `i`'s reading in period `j`.
    pub values: Vec<Vec<Wh>>,
}

#[derive(Debug, Clone)]
pub struct JointSolutionSet<'a> {
    pub instance: &'a AnonymizedInstance,
    /// Value-distinct solutions, sorted by their value matrix.
    pub solutions: Vec<JointSolution>,
    /// True when the search finished; false when the work limit cut it short.
    pub exhausted: bool,
    /// Solutions counted as permutation tuples, before deduplication.
    pub raw_permutations: BigUint,
    /// Search-tree nodes expanded.
    pub nodes: u64,
}

impl JointSolutionSet<'_> {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Whether some solution assigns exactly these values (`values[i][j]`).
    pub fn contains_values(&self, values: &[Vec<Wh>]) -> bool {
        self.solutions.iter().any(|s| s.values == values)
    }
}

/// A reading every solution agrees on. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgreedAssignment {
    pub meter: usize,
    pub period: usize,
    pub value: Wh,
}

struct Search<'a> {
    inst: &'a AnonymizedInstance,
    // search order over periods
    order: Vec<usize>,
    // distinct values (ascending) and multiplicities, per search step
    groups: Vec<Vec<(Wh, usize)>>,
    // rest_min[d]/rest_max[d]: bounds of one meter's sum over steps d..
    rest_min: Vec<Wh>,
    rest_max: Vec<Wh>,
    sums: Vec<Wh>,
    // assigned[d][i]: value given to meter i at step d
    assigned: Vec<Vec<Wh>>,
    found: Vec<Vec<Vec<Wh>>>,
    nodes: u64,
    limit: u64,
    cut: bool,
}

impl Search<'_> {
    fn period_step(&mut self, d: usize) {
        if d == self.order.len() {
            if self.sums == self.inst.totals() {
                self.found.push(self.assigned.clone());
            }
            return;
        }
        let mut left = self.groups[d].clone();
        self.meter_step(d, 0, &mut left);
    }

    fn meter_step(&mut self, d: usize, meter: usize, left: &mut [(Wh, usize)]) {
        let n = self.inst.meters();
        if meter == n {
            self.period_step(d + 1);
            return;
        }
        let total = self.inst.total(meter);
        for g in 0..left.len() {
            if self.cut {
                return;
            }
            let (v, m) = left[g];
            if m == 0 {
                continue;
            }
            let s = self.sums[meter] + v;
            if s + self.rest_min[d + 1] > total || s + self.rest_max[d + 1] < total {
                continue;
            }
            if self.nodes >= self.limit {
                self.cut = true;
                return;
            }
            self.nodes += 1;
            left[g].1 -= 1;
            self.sums[meter] = s;
            self.assigned[d][meter] = v;
            self.meter_step(d, meter + 1, left);
            self.sums[meter] -= v;
            left[g].1 += 1;
        }
    }
}

fn groups_of(values: &[Wh]) -> Vec<(Wh, usize)> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(Wh, usize)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((w, m)) if *w == v => *m += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

fn factorial(k: usize) -> BigUint {
    (1..=k as u64).fold(BigUint::one(), |acc, x| acc * x)
}

/// Permutation tuple matching `values` (meter-major), lowest positions first
/// among equal readings.
fn positions_for(inst: &AnonymizedInstance, values: &[Vec<Wh>]) -> Vec<Vec<usize>> {
    (0..inst.period_count())
        .map(|j| {
            let period = inst.period(j);
            let mut used = vec![false; period.len()];
            values
                .iter()
                .map(|row| {
                    let k = (0..period.len())
                        .find(|&k| !used[k] && period[k] == row[j])
                        .expect("solution values come from the period");
                    used[k] = true;
                    k
                })
                .collect()
        })
        .collect()
}

/// Depth-first search over full per-period assignments, expanding at most
/// `work_limit` nodes (one node per meter-to-value choice).
pub fn solve_joint(inst: &AnonymizedInstance, work_limit: u64) -> JointSolutionSet<'_> {
    let n = inst.meters();
    let t = inst.period_count();

    // fewest repeated readings first
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by_key(|&j| n - groups_of(inst.period(j)).len());

    let groups: Vec<Vec<(Wh, usize)>> = order.iter().map(|&j| groups_of(inst.period(j))).collect();
    let mut rest_min = vec![0; t + 1];
    let mut rest_max = vec![0; t + 1];
    for d in (0..t).rev() {
        rest_min[d] = rest_min[d + 1] + groups[d].first().map_or(0, |g| g.0);
        rest_max[d] = rest_max[d + 1] + groups[d].last().map_or(0, |g| g.0);
    }

    let mut search = Search {
        inst,
        order,
        groups,
        rest_min,
        rest_max,
        sums: vec![0; n],
        assigned: vec![vec![0; n]; t],
        found: Vec::new(),
        nodes: 0,
        limit: work_limit.max(1),
        cut: false,
    };
    search.period_step(0);

    let mut solutions: Vec<JointSolution> = search
        .found
        .iter()
        .map(|by_step| {
            let mut values = vec![vec![0; t]; n];
            for (d, &j) in search.order.iter().enumerate() {
                for i in 0..n {
                    values[i][j] = by_step[d][i];
                }
            }
            JointSolution {
                perms: positions_for(inst, &values),
                values,
            }
        })
        .collect();
    solutions.sort_by(|a, b| a.values.cmp(&b.values));

    let per_solution = search
        .groups
        .iter()
        .flatten()
        .fold(BigUint::one(), |acc, &(_, m)| acc * factorial(m));
    JointSolutionSet {
        instance: inst,
        raw_permutations: per_solution * solutions.len(),
        solutions,
        exhausted: !search.cut,
        nodes: search.nodes,
    }
}

/// `(meter, period)` cells on which every solution agrees, ordered by meter
/// then period.
pub fn agreed_assignments(
    sols: &JointSolutionSet<'_>,
) -> Result<Vec<AgreedAssignment>, JointError> {
    if !sols.exhausted {
        return Err(JointError::Incomplete);
    }
    let (first, rest) = sols.solutions.split_first().ok_or(JointError::Empty)?;
    let mut out = Vec::new();
    for (meter, row) in first.values.iter().enumerate() {
        for (period, &value) in row.iter().enumerate() {
            if rest.iter().all(|s| s.values[meter][period] == value) {
                out.push(AgreedAssignment {
                    meter,
                    period,
                    value,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::model::{anonymize, build_ground_truth, ReadingMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for at in 0..n {
                let mut q = p.clone();
                q.insert(at, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Every permutation tuple, filtered, then collapsed to value matrices.
    fn brute_force(inst: &AnonymizedInstance) -> (Vec<Vec<Vec<Wh>>>, usize) {
        let n = inst.meters();
        let t = inst.period_count();
        let perms = permutations(n);
        let mut idx = vec![0usize; t];
        let mut raw = 0;
        let mut out: Vec<Vec<Vec<Wh>>> = Vec::new();
        'outer: loop {
            let values: Vec<Vec<Wh>> = (0..n)
                .map(|i| (0..t).map(|j| inst.period(j)[perms[idx[j]][i]]).collect())
                .collect();
            if values
                .iter()
                .zip(inst.totals())
                .all(|(r, &e)| r.iter().sum::<Wh>() == e)
            {
                raw += 1;
                if !out.contains(&values) {
                    out.push(values);
                }
            }
            let mut d = t;
            loop {
                if d == 0 {
                    break 'outer;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < perms.len() {
                    break;
                }
                idx[d] = 0;
            }
        }
        out.sort();
        (out, raw)
    }

    #[test]
    fn example_has_three_solutions() {
        let inst = example::instance();
        let sols = solve_joint(&inst, DEFAULT_WORK_LIMIT);
        assert!(sols.exhausted);
        assert_eq!(sols.len(), 3);
        for expected in example::JOINT_SOLUTIONS {
            let values: Vec<Vec<Wh>> = expected.iter().map(|r| r.to_vec()).collect();
            assert!(sols.contains_values(&values));
        }
        for s in &sols.solutions {
            for (i, &e) in inst.totals().iter().enumerate() {
                let sum: Wh = (0..9).map(|j| inst.period(j)[s.perms[j][i]]).sum();
                assert_eq!(sum, e);
            }
        }
    }

    #[test]
    fn example_agreement() {
        let inst = example::instance();
        let sols = solve_joint(&inst, DEFAULT_WORK_LIMIT);
        let agreed = agreed_assignments(&sols).unwrap();
        let for_meter = |m: usize| -> Vec<(usize, Wh)> {
            agreed
                .iter()
                .filter(|a| a.meter == m)
                .map(|a| (a.period + 1, a.value))
                .collect()
        };
        assert_eq!(for_meter(0), vec![(1, 362), (5, 140), (6, 36), (8, 83)]);
        assert_eq!(
            for_meter(1),
            vec![(1, 117), (2, 50), (3, 25), (5, 49), (7, 42), (8, 24)]
        );
        assert_eq!(for_meter(2), vec![(1, 104), (4, 149), (5, 86), (8, 92)]);
    }

    #[test]
    fn one_meter() {
        let inst = AnonymizedInstance::new(vec![vec![4], vec![6]], vec![10]).unwrap();
        let sols = solve_joint(&inst, 10);
        assert!(sols.exhausted);
        assert_eq!(sols.len(), 1);
        assert_eq!(sols.solutions[0].perms, vec![vec![0], vec![0]]);
        let agreed = agreed_assignments(&sols).unwrap();
        assert_eq!(agreed.len(), 2);
    }

    #[test]
    fn work_limit_marks_incomplete() {
        let inst = example::instance();
        let sols = solve_joint(&inst, 5);
        assert!(!sols.exhausted);
        assert_eq!(sols.nodes, 5);
        assert_eq!(agreed_assignments(&sols), Err(JointError::Incomplete));
    }

    #[test]
    fn duplicates_collapse() {
        // both meters read 5 in period 1: two permutations, one value assignment
        let inst = AnonymizedInstance::new(vec![vec![5, 5], vec![1, 2]], vec![6, 7]).unwrap();
        let sols = solve_joint(&inst, 100);
        assert_eq!(sols.len(), 1);
        assert_eq!(sols.raw_permutations, BigUint::from(2u32));
        assert_eq!(sols.solutions[0].perms, vec![vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..60 {
            let (n, t) = if round % 2 == 0 { (2, 4) } else { (3, 4) };
            let rows = (0..n)
                .map(|_| (0..t).map(|_| rng.gen_range(0..8)).collect())
                .collect();
            let gt = build_ground_truth(ReadingMatrix::from_rows(rows).unwrap()).unwrap();
            let (inst, rec) = anonymize(&gt, rng.gen());
            let sols = solve_joint(&inst, DEFAULT_WORK_LIMIT);
            let (want, raw) = brute_force(&inst);
            let got: Vec<Vec<Vec<Wh>>> = sols.solutions.iter().map(|s| s.values.clone()).collect();
            assert_eq!(got, want);
            assert_eq!(sols.raw_permutations, BigUint::from(raw));
            let truth: Vec<Vec<Wh>> = rec.deanonymize(&inst).rows().map(|r| r.to_vec()).collect();
            assert!(sols.contains_values(&truth));
        }
    }
}
