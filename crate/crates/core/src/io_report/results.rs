use std::fmt::Write as _;
use std::path::Path;

use crate::datagen::Condition;
use crate::error::{Error, Result};
use crate::mlm::{CsMode, DdfMethod};
use crate::simengine::{Bradley, CellResult, Method, RunConfig};

pub const RESULT_COLUMNS: [&str; 13] = [
    "condition",
    "m",
    "n",
    "method",
    "rejection_rate",
    "mc_se",
    "bradley",
    "failures",
    "replications",
    "alpha",
    "ddf_method",
    "cs_mode",
    "master_seed",
];

/// One `(condition, m, n, method)` line of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub condition: Condition,
    pub m: usize,
    pub n: usize,
    pub method: Method,
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub bradley: Option<Bradley>,
    pub failures: u64,
    pub replications: usize,
    pub alpha: f64,
    pub ddf_method: DdfMethod,
    pub cs_mode: CsMode,
    pub master_seed: u64,
}

/// Flattens cell results into rows sorted by `(condition, m, n, method)`.
pub fn results_table(results: &[CellResult], cfg: &RunConfig) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = results
        .iter()
        .flat_map(|cell| {
            cell.rates.iter().map(move |r| ResultRow {
                condition: cell.condition.condition,
                m: cell.condition.m,
                n: cell.condition.n,
                method: r.method,
                rejection_rate: r.rate,
                mc_se: r.mc_se,
                bradley: r.bradley,
                failures: r.failures,
                replications: cell.replications,
                alpha: cfg.alpha,
                ddf_method: cfg.ddf,
                cs_mode: cfg.cs_mode,
                master_seed: cfg.master_seed,
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.condition, r.m, r.n, r.method));
    rows
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn render(rows: &[ResultRow]) -> String {
    let mut out = RESULT_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.condition.label(),
            r.m,
            r.n,
            r.method.label(),
            format_sig(r.rejection_rate, 6),
            format_sig(r.mc_se, 6),
            r.bradley.map_or("NA", Bradley::label),
            r.failures,
            r.replications,
            format_sig(r.alpha, 6),
            r.ddf_method.label(),
            r.cs_mode.label(),
            r.master_seed,
        )
        .unwrap();
    }
    out
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::MissingData("no results to write".into()));
    }
    super::write_atomic(path, render(rows).as_bytes())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let invalid = |message: String| Error::Validation {
        path: path.to_path_buf(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(&bytes[..]);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let mut idx = [0usize; RESULT_COLUMNS.len()];
    for (slot, name) in idx.iter_mut().zip(RESULT_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("results file lacks the '{name}' column")))?;
    }

    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let field = |c: usize| rec.get(idx[c]).unwrap_or_default();
        macro_rules! parse {
            ($c:expr, $t:ty) => {
                field($c).parse::<$t>().map_err(|e| {
                    invalid(format!("row {line}, column '{}': {e}", RESULT_COLUMNS[$c]))
                })?
            };
        }
        let bradley = match field(6) {
            "conservative" => Some(Bradley::Conservative),
            "acceptable" => Some(Bradley::Acceptable),
            "liberal" => Some(Bradley::Liberal),
            _ => None,
        };
        rows.push(ResultRow {
            condition: parse!(0, Condition),
            m: parse!(1, usize),
            n: parse!(2, usize),
            method: parse!(3, Method),
            rejection_rate: parse!(4, f64),
            mc_se: parse!(5, f64),
            bradley,
            failures: parse!(7, u64),
            replications: parse!(8, usize),
            alpha: parse!(9, f64),
            ddf_method: parse!(10, DdfMethod),
            cs_mode: parse!(11, CsMode),
            master_seed: parse!(12, u64),
        });
    }
    Ok(rows)
}

/// Condition × method table of rates; `L`/`C` mark Bradley-liberal / -conservative cells.
pub fn summary_table(rows: &[ResultRow]) -> String {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut out = format!("{:<14} {:>2} {:>4}", "condition", "m", "n");
    for m in &methods {
        write!(out, " {:>11}", m.label()).unwrap();
    }
    out.push('\n');
    let mut keys: Vec<(Condition, usize, usize)> =
        rows.iter().map(|r| (r.condition, r.m, r.n)).collect();
    keys.dedup();
    for (c, m, n) in keys {
        write!(out, "{:<14} {:>2} {:>4}", c.label(), m, n).unwrap();
        for method in &methods {
            let cell = rows
                .iter()
                .find(|r| r.condition == c && r.m == m && r.n == n && r.method == *method);
            let text = match cell {
                Some(r) => {
                    let flag = match r.bradley {
                        Some(Bradley::Liberal) => "L",
                        Some(Bradley::Conservative) => "C",
                        Some(Bradley::Acceptable) => " ",
                        None => "?",
                    };
                    format!("{:.4}{flag}", r.rejection_rate)
                }
                None => "-".into(),
            };
            write!(out, " {text:>11}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.2272, 6), "0.2272");
        assert_eq!(format_sig(0.05, 6), "0.05");
        assert_eq!(format_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(format_sig(0.00593452178, 6), "0.00593452");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(1.0, 6), "1");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e6");
        assert_eq!(format_sig(3.2e-7, 6), "3.2e-7");
        assert_eq!(format_sig(f64::NAN, 6), "NaN");
    }

    #[test]
    fn empty_results_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        assert!(write_results(&[], &p).is_err());
        assert!(!p.exists());
    }
}
