//! `experiment` settings: a flat `key=value` file (`#` comments) overlaid by
//! command-line flags.

use std::collections::HashMap;
use std::fs;
use std::time::Duration;

use meterprivacy::experiment::{DEFAULT_MEM_BUDGET, DEFAULT_REPS, DEFAULT_TIME_BUDGET};
use meterprivacy::TableFormat;

use crate::ExperimentArgs;

const KEYS: [&str; 13] = [
    "mode",
    "n_list",
    "t_list",
    "target_mean",
    "others_mean",
    "reps",
    "seed",
    "target_meter",
    "format",
    "workers",
    "mem_budget",
    "time_budget",
    "input_file",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub mode: String,
    pub n_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub target_mean: f64,
    pub others_mean: f64,
    pub reps: usize,
    pub seed: u64,
    /// 1-based.
    pub target_meter: usize,
    pub format: TableFormat,
    pub workers: usize,
    pub mem_budget: u64,
    pub time_budget: Duration,
    pub input_file: Option<String>,
}

pub fn parse_kv(text: &str) -> Result<HashMap<String, String>, String> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(format!("config line {}: unknown key `{k}`", i + 1));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Byte count with optional K/M/G (binary) suffix.
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, mult) = match s.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&s[..s.len() - 1], 1u64 << 10),
        Some('M') => (&s[..s.len() - 1], 1 << 20),
        Some('G') => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    digits
        .trim()
        .parse::<u64>()
        .ok()
        .and_then(|v| v.checked_mul(mult))
        .ok_or_else(|| format!("bad byte count `{s}`"))
}

fn list(key: &str, s: &str) -> Result<Vec<usize>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| format!("{key}: bad integer `{p}`")))
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("{key}: bad value `{s}`"))
}

impl Settings {
    pub fn from_map(kv: &HashMap<String, String>) -> Result<Self, String> {
        let get = |k: &str| kv.get(k).map(String::as_str);
        let format = match get("format").unwrap_or("markdown") {
            "csv" => TableFormat::Csv,
            "markdown" => TableFormat::Markdown,
            other => return Err(format!("format: expected csv or markdown, got `{other}`")),
        };
        let time_budget = match get("time_budget") {
            Some(s) => {
                let secs: f64 = num("time_budget", s)?;
                if !(secs > 0.0 && secs.is_finite()) {
                    return Err("time_budget must be positive".into());
                }
                Duration::from_secs_f64(secs)
            }
            None => DEFAULT_TIME_BUDGET,
        };
        Ok(Self {
            mode: get("mode").unwrap_or("synthetic").to_string(),
            n_list: get("n_list").map_or(Ok(vec![2, 4, 8, 16, 32]), |s| list("n_list", s))?,
            t_list: get("t_list").map_or(Ok(vec![15, 30, 60]), |s| list("t_list", s))?,
            target_mean: get("target_mean").map_or(Ok(100.0), |s| num("target_mean", s))?,
            others_mean: get("others_mean").map_or(Ok(100.0), |s| num("others_mean", s))?,
            reps: get("reps").map_or(Ok(DEFAULT_REPS), |s| num("reps", s))?,
            seed: get("seed").map_or(Ok(1), |s| num("seed", s))?,
            target_meter: get("target_meter").map_or(Ok(1), |s| num("target_meter", s))?,
            format,
            workers: get("workers").map_or(Ok(0), |s| num("workers", s))?,
            mem_budget: get("mem_budget").map_or(Ok(DEFAULT_MEM_BUDGET), parse_bytes)?,
            time_budget,
            input_file: get("input_file").map(str::to_string),
        })
    }

    pub fn load(args: &ExperimentArgs) -> Result<Self, String> {
        let mut kv = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                parse_kv(&text)?
            }
            None => HashMap::new(),
        };
        let flags = [
            ("mode", &args.mode),
            ("n_list", &args.n_list),
            ("t_list", &args.t_list),
            ("target_mean", &args.target_mean),
            ("others_mean", &args.others_mean),
            ("reps", &args.reps),
            ("seed", &args.seed),
            ("target_meter", &args.target_meter),
            ("format", &args.format),
            ("workers", &args.workers),
            ("mem_budget", &args.mem_budget),
            ("time_budget", &args.time_budget),
            ("input_file", &args.input_file),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                kv.insert(k.to_string(), v.clone());
            }
        }
        Self::from_map(&kv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = Settings::from_map(&HashMap::new()).unwrap();
        assert_eq!(s.mode, "synthetic");
        assert_eq!(s.n_list, vec![2, 4, 8, 16, 32]);
        assert_eq!(s.t_list, vec![15, 30, 60]);
        assert_eq!(s.reps, 20);
        assert_eq!(s.others_mean, 100.0);
        assert_eq!(s.target_meter, 1);
        assert_eq!(s.mem_budget, 4 << 30);
        assert_eq!(s.time_budget, Duration::from_secs(600));
    }

    #[test]
    fn file_then_flags() {
        let kv = parse_kv("# grid\nn_list = 2, 4\nreps=3\nseed=9 # trailing\n").unwrap();
        let s = Settings::from_map(&kv).unwrap();
        assert_eq!(s.n_list, vec![2, 4]);
        assert_eq!(s.reps, 3);
        assert_eq!(s.seed, 9);

        let args = ExperimentArgs {
            reps: Some("5".into()),
            ..Default::default()
        };
        let mut merged = kv.clone();
        merged.insert("reps".into(), args.reps.clone().unwrap());
        assert_eq!(Settings::from_map(&merged).unwrap().reps, 5);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_kv("nonsense\n").is_err());
        assert!(parse_kv("colour=red\n").is_err());
        let mut kv = HashMap::new();
        kv.insert("format".to_string(), "xml".to_string());
        assert!(Settings::from_map(&kv).is_err());
    }

    #[test]
    fn byte_suffixes() {
        assert_eq!(parse_bytes("4G"), Ok(4 << 30));
        assert_eq!(parse_bytes("512k"), Ok(512 << 10));
        assert_eq!(parse_bytes("100"), Ok(100));
        assert!(parse_bytes("lots").is_err());
    }
}
