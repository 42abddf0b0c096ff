use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use meterprivacy::experiment::{emit_repetitions, DEFAULT_MEM_BUDGET, DEFAULT_TIME_BUDGET};
use meterprivacy::ingest::{parse_any_readings, write_readings_csv};
use meterprivacy::joint::DEFAULT_WORK_LIMIT;
use meterprivacy::mcssp::marginal_counts_with;
use meterprivacy::{
    agreed_assignments, anonymize, build_ground_truth, emit_table, entropy_report,
    enumerate_solutions, marginal_probabilities, parse_instance, rank_distributions,
    reproduce_example, revealed_positions, run_experiment, sample_reading_matrix, select_submatrix,
    solve_joint, write_instance, DistributionSpec, ExperimentConfig, Limits, SolveError, Source,
    TableFormat,
};

mod config;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_GUARD: u8 = 3;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Guard(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "meterprivacy",
    version,
    about = "Re-identification entropy for pseudonymized smart-meter readings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Walk through the built-in three-meter example.
    Example,
    /// Per-period entropy for one meter of an instance file.
    Solve(SolveArgs),
    /// All joint solutions of a (small) instance and the readings they agree on.
    Joint(JointArgs),
    /// Generate a synthetic readings CSV (or anonymized instance).
    Synth(SynthArgs),
    /// Rank exponential and normal fits of a sample by Cramér–von Mises W².
    Fit(FitArgs),
    /// Turn a readings CSV into an anonymized instance file.
    Ingest(IngestArgs),
    /// Run an average-entropy grid experiment.
    Experiment(Box<ExperimentArgs>),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Markdown => TableFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Target meter (1-based).
    #[arg(long, default_value_t = 1)]
    meter: usize,
    #[arg(long, value_enum, default_value_t = Format::Markdown)]
    format: Format,
    /// Also list up to this many solutions.
    #[arg(long)]
    enumerate: Option<usize>,
    /// Report positions whose probability reaches this value.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// Count-table budget in bytes (suffixes K, M, G allowed).
    #[arg(long)]
    mem_budget: Option<String>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
}

#[derive(Args)]
struct JointArgs {
    instance: PathBuf,
    /// Maximum search-tree node expansions.
    #[arg(long, default_value_t = DEFAULT_WORK_LIMIT)]
    work_limit: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = 100.0)]
    target_mean: f64,
    #[arg(long, default_value_t = 100.0)]
    others_mean: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Emit an anonymized instance instead of the readings CSV.
    #[arg(long)]
    instance: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Numbers separated by whitespace, commas or newlines.
    samples: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    csv: PathBuf,
    /// Random subset of this many meters.
    #[arg(long)]
    n: Option<usize>,
    /// Random window of this many consecutive periods.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Default)]
pub struct ExperimentArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    t_list: Option<String>,
    #[arg(long)]
    target_mean: Option<String>,
    #[arg(long)]
    others_mean: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    target_meter: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    mem_budget: Option<String>,
    #[arg(long)]
    time_budget: Option<String>,
    #[arg(long)]
    input_file: Option<String>,
    /// Write per-repetition results (CSV) here.
    #[arg(long)]
    detail: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve(args: SolveArgs) -> Outcome {
    let inst = parse_instance(&read(&args.instance)?)
        .with_context(|| format!("parsing {}", args.instance.display()))?;
    if args.meter == 0 || args.meter > inst.meters() {
        return Err(Failure::Usage(format!(
            "--meter must be in 1..={}",
            inst.meters()
        )));
    }
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(Failure::Usage("--threshold must be in (0, 1]".into()));
    }
    let mem = match &args.mem_budget {
        Some(s) => config::parse_bytes(s).map_err(Failure::Usage)?,
        None => DEFAULT_MEM_BUDGET,
    };
    let time = args
        .time_budget
        .map(Duration::from_secs_f64)
        .unwrap_or(DEFAULT_TIME_BUDGET);
    let limits = Limits {
        max_table_bytes: Some(mem),
        deadline: Some(Instant::now() + time),
    };
    let meter = args.meter - 1;
    let mc = match marginal_counts_with(&inst, meter, &limits) {
        Ok(mc) => mc,
        Err(SolveError::Guard(g)) => return Err(Failure::Guard(g.to_string())),
        Err(e) => return Err(Failure::Data(e.into())),
    };
    let report = entropy_report(&mc).map_err(anyhow::Error::from)?;
    let dists = marginal_probabilities(&mc).map_err(anyhow::Error::from)?;

    let mut out = String::new();
    match args.format {
        Format::Csv => {
            out.push_str("period,entropy");
            for k in 1..=inst.meters() {
                out.push_str(&format!(",p{k}"));
            }
            out.push('\n');
            for (d, h) in dists.iter().zip(&report.entropies) {
                out.push_str(&format!("{},{}", d.period + 1, h));
                for p in &d.probabilities {
                    out.push_str(&format!(",{p}"));
                }
                out.push('\n');
            }
        }
        Format::Markdown => {
            out.push_str(&format!(
                "meter {} (total {} Wh): N = {} solutions\n\n",
                args.meter, mc.target_total, mc.total_solutions
            ));
            out.push_str("| period | entropy (bits) |\n|---|---|\n");
            for (j, h) in report.entropies.iter().enumerate() {
                out.push_str(&format!("| {} | {h:.4} |\n", j + 1));
            }
            out.push_str(&format!(
                "\naverage entropy: {:.4} bits (max {:.4})\n",
                report.average, report.max
            ));
            let revealed =
                revealed_positions(&dists, args.threshold).map_err(anyhow::Error::from)?;
            out.push_str(&format!(
                "positions with probability >= {}:\n",
                args.threshold
            ));
            for r in revealed {
                out.push_str(&format!(
                    "  period {} position {} value {} (p = {:.4})\n",
                    r.period + 1,
                    r.position + 1,
                    inst.period(r.period)[r.position],
                    r.probability
                ));
            }
        }
    }
    if let Some(limit) = args.enumerate {
        if limit == 0 {
            return Err(Failure::Usage("--enumerate must be at least 1".into()));
        }
        let e = enumerate_solutions(&inst, meter, limit).map_err(anyhow::Error::from)?;
        out.push_str(&format!(
            "\nsolutions ({} shown{}):\n",
            e.selections.len(),
            if e.truncated { ", truncated" } else { "" }
        ));
        for s in &e.selections {
            let values: Vec<String> = s.values(&inst).iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{s} {}\n", values.join(" + ")));
        }
    }
    print!("{out}");
    Ok(())
}

fn joint(args: JointArgs) -> Outcome {
    let inst = parse_instance(&read(&args.instance)?)
        .with_context(|| format!("parsing {}", args.instance.display()))?;
    let sols = solve_joint(&inst, args.work_limit);
    println!(
        "{} value-distinct solutions ({} permutation tuples), {} nodes",
        sols.len(),
        sols.raw_permutations,
        sols.nodes
    );
    for (s, sol) in sols.solutions.iter().enumerate() {
        println!("solution {}:", s + 1);
        for (i, row) in sol.values.iter().enumerate() {
            let terms: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            println!(
                "  meter {}: {} = {}",
                i + 1,
                terms.join(" + "),
                inst.total(i)
            );
        }
    }
    if !sols.exhausted {
        return Err(Failure::Guard(format!(
            "work limit {} reached; solution list is incomplete",
            args.work_limit
        )));
    }
    match agreed_assignments(&sols) {
        Ok(agreed) => {
            println!("agreed assignments:");
            for a in agreed {
                println!(
                    "  meter {} period {} = {}",
                    a.meter + 1,
                    a.period + 1,
                    a.value
                );
            }
        }
        Err(e) => println!("agreed assignments: none ({e})"),
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Outcome {
    if args.n == 0 || args.t == 0 {
        return Err(Failure::Usage("--n and --t must be at least 1".into()));
    }
    let target = DistributionSpec::exponential(args.target_mean)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let others = DistributionSpec::exponential(args.others_mean)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let m = sample_reading_matrix(args.n, args.t, &target, &others, args.seed)
        .map_err(anyhow::Error::from)?;
    let text = if args.instance {
        let gt = build_ground_truth(m).map_err(anyhow::Error::from)?;
        write_instance(&anonymize(&gt, args.seed).0)
    } else {
        write_readings_csv(&m)
    };
    write_out(args.output.as_deref(), &text)?;
    Ok(())
}

fn fit(args: FitArgs) -> Outcome {
    let text = read(&args.samples)?;
    let samples = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| anyhow!("bad sample `{s}`")))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let ranked = rank_distributions(&samples).map_err(anyhow::Error::from)?;
    println!("rank,family,parameters,cvm_w2,m");
    for (i, f) in ranked.iter().enumerate() {
        let params = match f.spec {
            DistributionSpec::Exponential { mean } => format!("mean={mean}"),
            DistributionSpec::Normal { mean, std_dev } => format!("mean={mean};sd={std_dev}"),
        };
        println!(
            "{},{},{},{},{}",
            i + 1,
            f.spec.family(),
            params,
            f.cvm,
            f.sample_size
        );
    }
    Ok(())
}

fn ingest(args: IngestArgs) -> Outcome {
    let matrix = parse_any_readings(&read(&args.csv)?)
        .with_context(|| format!("parsing {}", args.csv.display()))?;
    let n = args.n.unwrap_or(matrix.meters());
    let t = args.t.unwrap_or(matrix.periods());
    if n == 0 || t == 0 {
        return Err(Failure::Usage("--n and --t must be at least 1".into()));
    }
    let sub = select_submatrix(&matrix, n, t, args.seed).map_err(anyhow::Error::from)?;
    let gt = build_ground_truth(sub).map_err(anyhow::Error::from)?;
    let (inst, _) = anonymize(&gt, args.seed);
    write_out(args.output.as_deref(), &write_instance(&inst))?;
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Outcome {
    let settings = config::Settings::load(&args).map_err(Failure::Usage)?;
    let source = match settings.mode.as_str() {
        "synthetic" => Source::Synthetic {
            target_mean: settings.target_mean,
            others_mean: settings.others_mean,
        },
        "real-file" => {
            let path = settings
                .input_file
                .as_ref()
                .ok_or_else(|| Failure::Usage("real-file mode needs input_file".into()))?;
            let m = parse_any_readings(&read(Path::new(path))?)
                .with_context(|| format!("parsing {path}"))?;
            Source::Readings(m)
        }
        other => return Err(Failure::Usage(format!("unknown mode `{other}`"))),
    };
    let cfg = ExperimentConfig {
        source,
        n_values: settings.n_list,
        t_values: settings.t_list,
        reps: settings.reps,
        seed: settings.seed,
        target_meter: settings
            .target_meter
            .checked_sub(1)
            .ok_or_else(|| Failure::Usage("target_meter is 1-based".into()))?,
        workers: settings.workers,
        mem_budget: settings.mem_budget,
        time_budget: settings.time_budget,
    };
    if let Err(e) = cfg.validate() {
        return Err(match (&cfg.source, e) {
            (
                Source::Readings(_),
                e @ meterprivacy::experiment::ConfigError::InputTooSmall { .. },
            ) => Failure::Data(e.into()),
            (_, e) => Failure::Usage(e.to_string()),
        });
    }
    let table = run_experiment(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    write_out(args.output.as_deref(), &emit_table(&table, settings.format))?;
    if let Some(p) = &args.detail {
        write_out(Some(p), &emit_repetitions(&table))?;
    }
    if table.any_guarded() {
        let guarded: usize = table.cells.iter().map(|c| c.guarded()).sum();
        return Err(Failure::Guard(format!(
            "{guarded} repetition(s) exceeded the solver guards"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Example => {
            print!("{}", reproduce_example());
            Ok(())
        }
        Command::Solve(a) => solve(a),
        Command::Joint(a) => joint(a),
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Ingest(a) => ingest(a),
        Command::Experiment(a) => experiment(*a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Guard(msg)) => {
            eprintln!("guard exceeded: {msg}");
            ExitCode::from(EXIT_GUARD)
        }
    }
}
