//! Grid experiments: average entropy per `(t, n)` cell over seeded
//! repetitions, and the worked-example report.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::example;
use crate::ingest::select_submatrix;
use crate::joint::{agreed_assignments, solve_joint, DEFAULT_WORK_LIMIT};
use crate::mcssp::{
    enumerate_solutions, marginal_counts, marginal_counts_with, GuardExceeded, Limits, SolveError,
};
use crate::metrics::{entropy_report, marginal_probabilities, revealed_positions};
use crate::model::{anonymize, build_ground_truth, ReadingMatrix};
use crate::stats::{sample_reading_matrix, DistributionSpec};

pub const DEFAULT_REPS: usize = 20;
pub const DEFAULT_MEM_BUDGET: u64 = 4 << 30;
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(600);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0} list is empty")]
    EmptyList(&'static str),
    #[error("{what} must be at least 1, got {value}")]
    NotPositive { what: &'static str, value: usize },
    #[error("{what} must be positive, got {value}")]
    BadMean { what: &'static str, value: f64 },
    #[error("target meter {meter} exceeds smallest n {n}")]
    TargetMeter { meter: usize, n: usize },
    #[error("input matrix is {meters}x{periods}, experiment needs {need_n}x{need_t}")]
    InputTooSmall {
        meters: usize,
        periods: usize,
        need_n: usize,
        need_t: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Target meter with the given mean, the others with `others_mean`,
    /// all exponential.
    Synthetic { target_mean: f64, others_mean: f64 },
    /// Random meter subsets and period windows of a loaded matrix.
    Readings(ReadingMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: Source,
    pub n_values: Vec<usize>,
    pub t_values: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// 0-based.
    pub target_meter: usize,
    /// Worker threads; 0 means rayon's default.
    pub workers: usize,
    pub mem_budget: u64,
    pub time_budget: Duration,
}

impl ExperimentConfig {
    pub fn synthetic(target_mean: f64, others_mean: f64) -> Self {
        Self {
            source: Source::Synthetic {
                target_mean,
                others_mean,
            },
            n_values: vec![2, 4, 8, 16, 32],
            t_values: vec![15, 30, 60],
            reps: DEFAULT_REPS,
            seed: 1,
            target_meter: 0,
            workers: 0,
            mem_budget: DEFAULT_MEM_BUDGET,
            time_budget: DEFAULT_TIME_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_values.is_empty() {
            return Err(ConfigError::EmptyList("n"));
        }
        if self.t_values.is_empty() {
            return Err(ConfigError::EmptyList("t"));
        }
        for (what, vs) in [("n", &self.n_values), ("t", &self.t_values)] {
            if let Some(&v) = vs.iter().find(|&&v| v == 0) {
                return Err(ConfigError::NotPositive { what, value: v });
            }
        }
        if self.reps == 0 {
            return Err(ConfigError::NotPositive {
                what: "reps",
                value: 0,
            });
        }
        let min_n = *self.n_values.iter().min().expect("non-empty");
        if self.target_meter >= min_n {
            return Err(ConfigError::TargetMeter {
                meter: self.target_meter + 1,
                n: min_n,
            });
        }
        match &self.source {
            Source::Synthetic {
                target_mean,
                others_mean,
            } => {
                for (what, value) in [("target_mean", *target_mean), ("others_mean", *others_mean)]
                {
                    if !(value > 0.0 && value.is_finite()) {
                        return Err(ConfigError::BadMean { what, value });
                    }
                }
            }
            Source::Readings(m) => {
                let need_n = *self.n_values.iter().max().expect("non-empty");
                let need_t = *self.t_values.iter().max().expect("non-empty");
                if m.meters() < need_n || m.periods() < need_t {
                    return Err(ConfigError::InputTooSmall {
                        meters: m.meters(),
                        periods: m.periods(),
                        need_n,
                        need_t,
                    });
                }
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for repetition `rep` of cell `(n, t)`; depends on nothing else.
pub fn derive_seed(master: u64, n: usize, t: usize, rep: usize) -> u64 {
    [n as u64, t as u64, rep as u64]
        .into_iter()
        .fold(mix(master), |acc, x| mix(acc ^ mix(x)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepOutcome {
    Solved {
        average_entropy: f64,
        solution_bits: u64,
    },
    Guarded(GuardExceeded),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub rep: usize,
    pub seed: u64,
    pub outcome: RepOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub t: usize,
    pub reps: Vec<Repetition>,
}

impl Cell {
    fn solved(&self) -> impl Iterator<Item = f64> + '_ {
        self.reps.iter().filter_map(|r| match r.outcome {
            RepOutcome::Solved {
                average_entropy, ..
            } => Some(average_entropy),
            RepOutcome::Guarded(_) => None,
        })
    }

    pub fn completed(&self) -> usize {
        self.solved().count()
    }

    pub fn guarded(&self) -> usize {
        self.reps.len() - self.completed()
    }

    /// Mean over solved repetitions; `None` when every repetition hit a guard.
    pub fn mean(&self) -> Option<f64> {
        let k = self.completed();
        (k > 0).then(|| self.solved().sum::<f64>() / k as f64)
    }

    /// Sample standard deviation over solved repetitions (0 for one).
    pub fn std_dev(&self) -> Option<f64> {
        let mean = self.mean()?;
        let k = self.completed();
        if k < 2 {
            return Some(0.0);
        }
        let ss: f64 = self.solved().map(|x| (x - mean).powi(2)).sum();
        Some((ss / (k - 1) as f64).sqrt())
    }

    pub fn max_entropy(&self) -> f64 {
        (self.n as f64).log2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub n_values: Vec<usize>,
    pub t_values: Vec<usize>,
    /// Row-major by `t_values`, then `n_values`.
    pub cells: Vec<Cell>,
}

impl ExperimentTable {
    pub fn cell(&self, n: usize, t: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.n == n && c.t == t)
    }

    pub fn any_guarded(&self) -> bool {
        self.cells.iter().any(|c| c.guarded() > 0)
    }
}

fn run_one(config: &ExperimentConfig, n: usize, t: usize, rep: usize) -> Repetition {
    let seed = derive_seed(config.seed, n, t, rep);
    let matrix = match &config.source {
        Source::Synthetic {
            target_mean,
            others_mean,
        } => sample_reading_matrix(
            n,
            t,
            &DistributionSpec::Exponential { mean: *target_mean },
            &DistributionSpec::Exponential { mean: *others_mean },
            seed,
        )
        .expect("validated config"),
        Source::Readings(m) => select_submatrix(m, n, t, seed).expect("validated config"),
    };
    let gt = build_ground_truth(matrix).expect("sampled readings fit in u64");
    let (inst, _) = anonymize(&gt, mix(seed));
    let limits = Limits {
        max_table_bytes: Some(config.mem_budget),
        deadline: Some(Instant::now() + config.time_budget),
    };
    let outcome = match marginal_counts_with(&inst, config.target_meter, &limits) {
        Ok(mc) => {
            let report = entropy_report(&mc).expect("ground truth is a solution");
            RepOutcome::Solved {
                average_entropy: report.average,
                solution_bits: mc.total_solutions.bits(),
            }
        }
        Err(SolveError::Guard(g)) => RepOutcome::Guarded(g),
        Err(e) => unreachable!("anonymized ground truth always solves: {e}"),
    };
    Repetition { rep, seed, outcome }
}

/// Runs every `(n, t, rep)` job; the result depends only on the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable, ConfigError> {
    config.validate()?;
    let jobs: Vec<(usize, usize, usize)> = config
        .t_values
        .iter()
        .flat_map(|&t| {
            config
                .n_values
                .iter()
                .flat_map(move |&n| (0..config.reps).map(move |r| (n, t, r)))
        })
        .collect();
    let run = || {
        jobs.par_iter()
            .map(|&(n, t, r)| run_one(config, n, t, r))
            .collect::<Vec<_>>()
    };
    let results = if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("thread pool")
            .install(run)
    } else {
        run()
    };

    let mut results = results.into_iter();
    let mut cells = Vec::new();
    for &t in &config.t_values {
        for &n in &config.n_values {
            cells.push(Cell {
                n,
                t,
                reps: results.by_ref().take(config.reps).collect(),
            });
        }
    }
    Ok(ExperimentTable {
        n_values: config.n_values.clone(),
        t_values: config.t_values.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// CSV (`t,n,avg_entropy,max_entropy,reps,stddev`) or a markdown grid.
/// Cells where every repetition hit a guard show `infeasible`.
pub fn emit_table(table: &ExperimentTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = String::from("t,n,avg_entropy,max_entropy,reps,stddev\n");
            for c in &table.cells {
                let (avg, sd) = match (c.mean(), c.std_dev()) {
                    (Some(m), Some(s)) => (format!("{m:.4}"), format!("{s:.4}")),
                    _ => ("infeasible".to_string(), String::new()),
                };
                writeln!(
                    out,
                    "{},{},{},{:.4},{},{}",
                    c.t,
                    c.n,
                    avg,
                    c.max_entropy(),
                    c.completed(),
                    sd
                )
                .unwrap();
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = String::from("|              |");
            for n in &table.n_values {
                write!(out, " n={n:>2} |").unwrap();
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(table.n_values.len()));
            out.push_str("\n| Max. entropy |");
            for &n in &table.n_values {
                write!(out, " {:.4} |", (n as f64).log2()).unwrap();
            }
            out.push('\n');
            for &t in &table.t_values {
                write!(out, "| t = {t:<8} |").unwrap();
                for &n in &table.n_values {
                    let text = table
                        .cell(n, t)
                        .and_then(Cell::mean)
                        .map_or("infeasible".to_string(), |m| format!("{m:.4}"));
                    write!(out, " {text} |").unwrap();
                }
                out.push('\n');
            }
            out
        }
    }
}

/// One line per repetition: `t,n,rep,seed,avg_entropy,solution_bits,status`.
pub fn emit_repetitions(table: &ExperimentTable) -> String {
    let mut out = String::from("t,n,rep,seed,avg_entropy,solution_bits,status\n");
    for c in &table.cells {
        for r in &c.reps {
            match &r.outcome {
                RepOutcome::Solved {
                    average_entropy,
                    solution_bits,
                } => writeln!(
                    out,
                    "{},{},{},{},{},{},ok",
                    c.t,
                    c.n,
                    r.rep + 1,
                    r.seed,
                    average_entropy,
                    solution_bits
                ),
                RepOutcome::Guarded(g) => {
                    let status = match g {
                        GuardExceeded::Memory { .. } => "memory_guard",
                        GuardExceeded::Time => "time_guard",
                    };
                    writeln!(out, "{},{},{},{},,,{status}", c.t, c.n, r.rep + 1, r.seed)
                }
            }
            .unwrap();
        }
    }
    out
}

/// Full text walk-through of the embedded three-meter example.
pub fn reproduce_example() -> String {
    let inst = example::instance();
    let mut out = String::new();
    writeln!(out, "# Worked example: 3 meters, 9 periods").unwrap();
    writeln!(out, "totals: E1 = 991, E2 = 473, E3 = 926").unwrap();
    for (j, p) in inst.periods().iter().enumerate() {
        writeln!(out, "period {}: {:?}", j + 1, p).unwrap();
    }

    let joint = solve_joint(&inst, DEFAULT_WORK_LIMIT);
    writeln!(out, "\n## Joint solutions: {}", joint.len()).unwrap();
    for (s, sol) in joint.solutions.iter().enumerate() {
        writeln!(out, "solution {}:", s + 1).unwrap();
        for (i, row) in sol.values.iter().enumerate() {
            let terms: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "  meter {}: {} = {}",
                i + 1,
                terms.join(" + "),
                inst.total(i)
            )
            .unwrap();
        }
    }
    writeln!(out, "\n## Agreed assignments").unwrap();
    let agreed = agreed_assignments(&joint).expect("example search completes");
    for meter in 0..inst.meters() {
        let cells: Vec<String> = agreed
            .iter()
            .filter(|a| a.meter == meter)
            .map(|a| format!("e[{},{}]={}", meter + 1, a.period + 1, a.value))
            .collect();
        writeln!(out, "meter {}: {}", meter + 1, cells.join(", ")).unwrap();
    }

    let relaxed = enumerate_solutions(&inst, 0, 1000).expect("meter 1 exists");
    let mc = marginal_counts(&inst, 0).expect("example is consistent");
    writeln!(
        out,
        "\n## Relaxed problem for meter 1: N = {}",
        mc.total_solutions
    )
    .unwrap();
    for sel in &relaxed.selections {
        let terms: Vec<String> = sel.values(&inst).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{} = {}", terms.join(" + "), inst.total(0)).unwrap();
    }

    writeln!(out, "\n## Per-period entropy for meter 1").unwrap();
    let dists = marginal_probabilities(&mc).expect("N >= 1");
    let report = entropy_report(&mc).expect("N >= 1");
    for (j, h) in report.entropies.iter().enumerate() {
        let counts: Vec<String> = mc.counts[j]
            .iter()
            .map(|c| format!("{c}/{}", mc.total_solutions))
            .collect();
        writeln!(
            out,
            "period {}: H = {h:.4} bits  P = ({})",
            j + 1,
            counts.join(", ")
        )
        .unwrap();
    }
    writeln!(
        out,
        "average entropy: {:.4} bits (max {:.4})",
        report.average, report.max
    )
    .unwrap();
    let revealed = revealed_positions(&dists, 1.0).expect("valid threshold");
    let fixed: Vec<String> = revealed
        .iter()
        .map(|r| {
            format!(
                "period {} = {}",
                r.period + 1,
                inst.period(r.period)[r.position]
            )
        })
        .collect();
    writeln!(out, "fully determined: {}", fixed.join(", ")).unwrap();
    out
}
