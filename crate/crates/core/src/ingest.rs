//! Text formats: reading CSVs and the instance file.
//!
//! Readings CSV: header `meter_id,period,wh` (integer Wh) or
//! `meter_id,period,kwh` (decimal kWh, at most three decimals), one record
//! per line. Meters keep their first-appearance order; periods are sorted and
//! renumbered 1..t.
//!
//! Instance file:
//!
//! ```text
//! meters 3
//! periods 9
//! totals 991 473 926
//! period 1 117 104 362
//! ...
//! ```

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{AnonymizedInstance, ModelError, ReadingMatrix, Wh};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: duplicate reading for meter `{meter}`, period {period}")]
    Duplicate {
        line: u64,
        meter: String,
        period: u64,
    },
    #[error("missing reading for meter `{meter}`, period {period}")]
    Missing { meter: String, period: u64 },
    #[error("line {line}: `{value}` has more than three decimals")]
    Precision { line: u64, value: String },
    #[error("line {line}: negative reading `{value}`")]
    Negative { line: u64, value: String },
    #[error("no readings")]
    Empty,
    #[error("requested {requested} {what} but source has {available}")]
    TooLarge {
        what: &'static str,
        requested: usize,
        available: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Wh,
    KWh,
}

impl Unit {
    fn column(self) -> &'static str {
        match self {
            Unit::Wh => "wh",
            Unit::KWh => "kwh",
        }
    }
}

/// One parsed CSV record before normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReadingRecord {
    pub meter_id: String,
    pub period: u64,
    pub wh: Wh,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum KwhError {
    #[error("negative reading")]
    Negative,
    #[error("more than three decimals")]
    Precision,
    #[error("not a decimal number")]
    Invalid,
    #[error("out of range")]
    Overflow,
}

/// Exact kWh decimal string to Wh: "0.362" -> 362, "1.2" -> 1200.
pub fn kwh_to_wh(text: &str) -> Result<Wh, KwhError> {
    let text = text.trim();
    if text.starts_with('-') {
        return Err(KwhError::Negative);
    }
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if (whole.is_empty() && frac.is_empty()) || !digits(whole) || !digits(frac) {
        return Err(KwhError::Invalid);
    }
    if frac.len() > 3 {
        return Err(KwhError::Precision);
    }
    let whole: Wh = if whole.is_empty() {
        0
    } else {
        whole.parse().map_err(|_| KwhError::Overflow)?
    };
    let milli: Wh = frac
        .bytes()
        .zip([100, 10, 1])
        .map(|(b, place)| (b - b'0') as Wh * place)
        .sum();
    whole
        .checked_mul(1000)
        .and_then(|w| w.checked_add(milli))
        .ok_or(KwhError::Overflow)
}

fn read_records(text: &str, unit: Unit) -> Result<Vec<(u64, RawReadingRecord)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let expected = format!("meter_id,period,{}", unit.column());
    let header = reader
        .headers()
        .map_err(|e| IngestError::Malformed {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != expected {
        return Err(IngestError::Header {
            expected,
            found: header,
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IngestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| IngestError::Malformed { line, msg };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let meter_id = rec[0].to_string();
        if meter_id.is_empty() {
            return Err(bad("empty meter_id".into()));
        }
        let period: u64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad period `{}`", &rec[1])))?;
        let value = &rec[2];
        if value.starts_with('-') {
            return Err(IngestError::Negative {
                line,
                value: value.to_string(),
            });
        }
        let wh = match unit {
            Unit::Wh => value
                .parse::<Wh>()
                .map_err(|_| bad(format!("bad Wh reading `{value}`")))?,
            Unit::KWh => kwh_to_wh(value).map_err(|e| match e {
                KwhError::Precision => IngestError::Precision {
                    line,
                    value: value.to_string(),
                },
                _ => bad(format!("bad kWh reading `{value}`: {e}")),
            })?,
        };
        out.push((
            line,
            RawReadingRecord {
                meter_id,
                period,
                wh,
            },
        ));
    }
    Ok(out)
}

fn assemble(records: Vec<(u64, RawReadingRecord)>) -> Result<ReadingMatrix, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut meters: Vec<String> = Vec::new();
    let mut meter_index: HashMap<String, usize> = HashMap::new();
    let mut periods: Vec<u64> = records.iter().map(|(_, r)| r.period).collect();
    periods.sort_unstable();
    periods.dedup();
    let mut cells: HashMap<(usize, u64), Wh> = HashMap::new();
    for (line, r) in records {
        let i = *meter_index.entry(r.meter_id.clone()).or_insert_with(|| {
            meters.push(r.meter_id.clone());
            meters.len() - 1
        });
        if cells.insert((i, r.period), r.wh).is_some() {
            return Err(IngestError::Duplicate {
                line,
                meter: r.meter_id,
                period: r.period,
            });
        }
    }
    let rows = meters
        .iter()
        .enumerate()
        .map(|(i, id)| {
            periods
                .iter()
                .map(|&p| {
                    cells
                        .get(&(i, p))
                        .copied()
                        .ok_or_else(|| IngestError::Missing {
                            meter: id.clone(),
                            period: p,
                        })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReadingMatrix::from_rows(rows)?)
}

/// `meter_id,period,wh` with integer Wh readings.
pub fn parse_readings_csv(text: &str) -> Result<ReadingMatrix, IngestError> {
    assemble(read_records(text, Unit::Wh)?)
}

/// `meter_id,period,kwh` with up to three decimals, converted exactly to Wh.
pub fn parse_kwh_readings(text: &str) -> Result<ReadingMatrix, IngestError> {
    assemble(read_records(text, Unit::KWh)?)
}

/// Dispatch on the header's last column.
pub fn parse_any_readings(text: &str) -> Result<ReadingMatrix, IngestError> {
    let header = text.lines().next().unwrap_or("").trim();
    if header.ends_with(",kwh") {
        parse_kwh_readings(text)
    } else {
        parse_readings_csv(text)
    }
}

/// Integer-Wh CSV with meter ids `m1..mn` and periods `1..t`.
pub fn write_readings_csv(matrix: &ReadingMatrix) -> String {
    let mut out = String::from("meter_id,period,wh\n");
    for (i, row) in matrix.rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out.push_str(&format!("m{},{},{}\n", i + 1, j + 1, v));
        }
    }
    out
}

/// Random meters (uniform subset, in sampled order) over a random window of
/// consecutive periods.
pub fn select_submatrix(
    matrix: &ReadingMatrix,
    n_sub: usize,
    t_sub: usize,
    seed: u64,
) -> Result<ReadingMatrix, IngestError> {
    if n_sub > matrix.meters() {
        return Err(IngestError::TooLarge {
            what: "meters",
            requested: n_sub,
            available: matrix.meters(),
        });
    }
    if t_sub > matrix.periods() {
        return Err(IngestError::TooLarge {
            what: "periods",
            requested: t_sub,
            available: matrix.periods(),
        });
    }
    if n_sub == matrix.meters() && t_sub == matrix.periods() {
        return Ok(matrix.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meters = sample(&mut rng, matrix.meters(), n_sub);
    let start = rng.gen_range(0..=matrix.periods() - t_sub);
    let rows = meters
        .iter()
        .map(|i| matrix.row(i)[start..start + t_sub].to_vec())
        .collect();
    Ok(ReadingMatrix::from_rows(rows)?)
}

pub fn write_instance(inst: &AnonymizedInstance) -> String {
    let join = |vs: &[Wh]| {
        vs.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = format!(
        "meters {}\nperiods {}\ntotals {}\n",
        inst.meters(),
        inst.period_count(),
        join(inst.totals())
    );
    for (j, p) in inst.periods().iter().enumerate() {
        out.push_str(&format!("period {} {}\n", j + 1, join(p)));
    }
    out
}

pub fn parse_instance(text: &str) -> Result<AnonymizedInstance, IngestError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
    let mut next = |key: &str| -> Result<(u64, Vec<&str>), IngestError> {
        let (line, l) = lines.next().ok_or_else(|| IngestError::Malformed {
            line: 0,
            msg: format!("missing `{key}` line"),
        })?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((line, parts.collect())),
            other => Err(IngestError::Malformed {
                line,
                msg: format!("expected `{key}`, found `{}`", other.unwrap_or("")),
            }),
        }
    };
    let num = |line: u64, s: &str| -> Result<u64, IngestError> {
        s.parse().map_err(|_| IngestError::Malformed {
            line,
            msg: format!("bad number `{s}`"),
        })
    };
    let single = |line: u64, parts: Vec<&str>| -> Result<u64, IngestError> {
        match parts.as_slice() {
            [v] => num(line, v),
            _ => Err(IngestError::Malformed {
                line,
                msg: "expected one number".into(),
            }),
        }
    };

    let (line, parts) = next("meters")?;
    let n = single(line, parts)? as usize;
    let (line, parts) = next("periods")?;
    let t = single(line, parts)? as usize;
    let (line, parts) = next("totals")?;
    if parts.len() != n {
        return Err(IngestError::Malformed {
            line,
            msg: format!("totals has {} values, expected {n}", parts.len()),
        });
    }
    let totals = parts
        .iter()
        .map(|s| num(line, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut periods = Vec::with_capacity(t);
    for j in 1..=t {
        let (line, parts) = next("period")?;
        let (idx, values) = parts.split_first().ok_or(IngestError::Malformed {
            line,
            msg: "missing period number".into(),
        })?;
        if num(line, idx)? != j as u64 {
            return Err(IngestError::Malformed {
                line,
                msg: format!("expected period {j}, found {idx}"),
            });
        }
        if values.len() != n {
            return Err(IngestError::Malformed {
                line,
                msg: format!("period {j} has {} values, expected {n}", values.len()),
            });
        }
        periods.push(
            values
                .iter()
                .map(|s| num(line, s))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    if let Some((line, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(IngestError::Malformed {
            line,
            msg: format!("unexpected trailing content `{l}`"),
        });
    }
    Ok(AnonymizedInstance::new(periods, totals)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use crate::model::build_ground_truth;
    use proptest::prelude::*;

    fn example_csv() -> String {
        write_readings_csv(&example::ground_truth_matrix())
    }

    #[test]
    fn example_csv_totals() {
        let m = parse_readings_csv(&example_csv()).unwrap();
        assert_eq!(m.meters(), 3);
        assert_eq!(m.periods(), 9);
        assert_eq!(build_ground_truth(m).unwrap().totals, vec![991, 473, 926]);
    }

    #[test]
    fn single_record() {
        let m = parse_readings_csv("meter_id,period,wh\nabc,17,5\n").unwrap();
        assert_eq!(m, ReadingMatrix::from_rows(vec![vec![5]]).unwrap());
    }

    #[test]
    fn meter_order_and_period_renumbering() {
        let text = "meter_id,period,wh\nb,30,1\na,10,2\nb,10,3\na,30,4\n";
        let m = parse_readings_csv(text).unwrap();
        assert_eq!(
            m,
            ReadingMatrix::from_rows(vec![vec![3, 1], vec![2, 4]]).unwrap()
        );
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            parse_readings_csv("meter_id,period,wh\na,1,5\na,1,6\n"),
            Err(IngestError::Duplicate {
                line: 3,
                meter: "a".into(),
                period: 1
            })
        );
        assert_eq!(
            parse_readings_csv("meter_id,period,wh\na,1,5\nb,2,6\n"),
            Err(IngestError::Missing {
                meter: "a".into(),
                period: 2
            })
        );
        assert!(matches!(
            parse_readings_csv("meter_id,period,wh\na,1,-5\n"),
            Err(IngestError::Negative { line: 2, .. })
        ));
        assert!(matches!(
            parse_readings_csv("meter_id,period,wh\na,1,5\na,x,5\n"),
            Err(IngestError::Malformed { line: 3, .. })
        ));
        assert!(matches!(
            parse_readings_csv("meter,period,wh\na,1,5\n"),
            Err(IngestError::Header { .. })
        ));
        assert_eq!(
            parse_readings_csv("meter_id,period,wh\n"),
            Err(IngestError::Empty)
        );
    }

    #[test]
    fn kwh() {
        assert_eq!(kwh_to_wh("0.362"), Ok(362));
        assert_eq!(kwh_to_wh("0.000"), Ok(0));
        assert_eq!(kwh_to_wh("1.2"), Ok(1200));
        assert_eq!(kwh_to_wh("12"), Ok(12000));
        assert_eq!(kwh_to_wh(".5"), Ok(500));
        assert!(kwh_to_wh("1.2345").is_err());
        assert!(kwh_to_wh("1e3").is_err());
        assert!(kwh_to_wh(".").is_err());
        let m = parse_kwh_readings("meter_id,period,kwh\na,1,0.362\n").unwrap();
        assert_eq!(m.get(0, 0), 362);
        assert!(matches!(
            parse_kwh_readings("meter_id,period,kwh\na,1,1.2345\n"),
            Err(IngestError::Precision { line: 2, .. })
        ));
        assert_eq!(
            parse_any_readings("meter_id,period,kwh\na,1,0.5\n")
                .unwrap()
                .get(0, 0),
            500
        );
    }

    #[test]
    fn submatrix() {
        let rows: Vec<Vec<Wh>> = (0..5)
            .map(|i| (0..10).map(|j| (i * 100 + j) as Wh).collect())
            .collect();
        let m = ReadingMatrix::from_rows(rows).unwrap();
        assert_eq!(select_submatrix(&m, 5, 10, 1).unwrap(), m);
        for seed in 0..20 {
            let s = select_submatrix(&m, 2, 3, seed).unwrap();
            assert_eq!((s.meters(), s.periods()), (2, 3));
            assert_eq!(s, select_submatrix(&m, 2, 3, seed).unwrap());
            let mut origins = Vec::new();
            for row in s.rows() {
                let i = (0..5)
                    .find(|&i| m.row(i).windows(3).any(|w| w == row))
                    .unwrap();
                let start = (row[0] % 100) as usize;
                assert_eq!(row, &m.row(i)[start..start + 3]);
                origins.push((i, start));
            }
            assert_ne!(origins[0].0, origins[1].0);
            assert_eq!(origins[0].1, origins[1].1);
        }
        assert!(matches!(
            select_submatrix(&m, 6, 3, 0),
            Err(IngestError::TooLarge { what: "meters", .. })
        ));
    }

    #[test]
    fn example_instance_file() {
        let text = write_instance(&example::instance());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "meters 3");
        assert_eq!(lines[1], "periods 9");
        assert_eq!(lines[2], "totals 991 473 926");
        assert_eq!(lines[3], "period 1 117 104 362");
        assert_eq!(parse_instance(&text).unwrap(), example::instance());
    }

    #[test]
    fn instance_errors() {
        assert!(matches!(
            parse_instance("meters 2\nperiods 1\ntotals 1\nperiod 1 0 1\n"),
            Err(IngestError::Malformed { line: 3, .. })
        ));
        assert!(matches!(
            parse_instance("meters 2\nperiods 1\ntotal 1 0\nperiod 1 0 1\n"),
            Err(IngestError::Malformed { line: 3, .. })
        ));
        assert!(matches!(
            parse_instance("meters 2\nperiods 1\ntotals 1 0\nperiod 1 0\n"),
            Err(IngestError::Malformed { line: 4, .. })
        ));
        assert!(matches!(
            parse_instance("meters 2\nperiods 1\ntotals 1 1\nperiod 1 0 1\n"),
            Err(IngestError::Model(ModelError::Conservation { .. }))
        ));
    }

    proptest! {
        #[test]
        fn kwh_conversion_exact(whole in 0u64..1_000_000, frac in 0u64..1000, places in 0usize..=3) {
            let scaled = frac / 10u64.pow(3 - places as u32);
            let text = if places == 0 {
                whole.to_string()
            } else {
                format!("{whole}.{scaled:0places$}")
            };
            let expect = whole * 1000 + scaled * 10u64.pow(3 - places as u32);
            prop_assert_eq!(kwh_to_wh(&text), Ok(expect));
        }

        #[test]
        fn formats_round_trip(
            rows in (1usize..5, 1usize..6).prop_flat_map(|(n, t)| {
                proptest::collection::vec(proptest::collection::vec(0u64..10_000, t), n)
            }),
            seed in any::<u64>(),
        ) {
            let m = ReadingMatrix::from_rows(rows).unwrap();
            prop_assert_eq!(parse_readings_csv(&write_readings_csv(&m)).unwrap(), m.clone());
            let (inst, _) = crate::model::anonymize(&build_ground_truth(m).unwrap(), seed);
            let text = write_instance(&inst);
            prop_assert_eq!(parse_instance(&text).unwrap(), inst.clone());
            prop_assert_eq!(write_instance(&parse_instance(&text).unwrap()), text);
        }
    }
}
