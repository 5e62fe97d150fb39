use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::datagen::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// `subject,t1,...,tm`, one row per subject.
    Wide,
    /// `subject,occasion,value`, one row per observation.
    Long,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wide" => Ok(DataFormat::Wide),
            "long" => Ok(DataFormat::Long),
            other => Err(format!("unknown format '{other}' (expected wide or long)")),
        }
    }
}

fn invalid(path: &Path, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => Error::Parse {
            path: path.to_path_buf(),
            message: format!(
                "row {}: expected {expected_len} fields, found {len}",
                pos.map_or_else(|| "?".to_string(), |p| p.line().to_string())
            ),
        },
        csv::ErrorKind::Utf8 { pos, .. } => Error::Parse {
            path: path.to_path_buf(),
            message: format!(
                "row {}: invalid UTF-8",
                pos.map_or_else(|| "?".to_string(), |p| p.line().to_string())
            ),
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{kind:?}"),
        },
    }
}

pub fn read_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(&bytes[..]);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, e))?;
    match format {
        DataFormat::Wide => from_wide(path, &header, &records),
        DataFormat::Long => from_long(path, &header, &records),
    }
}

fn parse_cell(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    if cell.is_empty() {
        return Err(invalid(
            path,
            format!("row {line}: missing value in column '{column}'"),
        ));
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(invalid(
            path,
            format!("row {line}: non-numeric value '{cell}' in column '{column}'"),
        )),
    }
}

fn from_wide(path: &Path, header: &[String], records: &[csv::StringRecord]) -> Result<Dataset> {
    if header.len() < 3 {
        return Err(invalid(
            path,
            "wide format needs a subject column and at least 2 occasion columns",
        ));
    }
    let m = header.len() - 1;
    let mut ids = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len() * m);
    for (k, rec) in records.iter().enumerate() {
        // data rows start on line 2
        let line = k + 2;
        let id = rec.get(0).unwrap_or_default();
        if id.is_empty() {
            return Err(invalid(
                path,
                format!("row {line}: missing subject identifier"),
            ));
        }
        for (j, col) in header.iter().enumerate().skip(1) {
            values.push(parse_cell(path, line, col, rec.get(j).unwrap_or_default())?);
        }
        ids.push(id.to_string());
    }
    if records.len() < 2 {
        return Err(invalid(
            path,
            format!("need at least 2 subjects, found {}", records.len()),
        ));
    }
    Dataset::new(ids.len(), m, values)
        .and_then(|d| d.with_subject_ids(ids))
        .map_err(|e| invalid(path, e.to_string()))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| invalid(path, format!("long format needs a '{name}' column")))
}

fn from_long(path: &Path, header: &[String], records: &[csv::StringRecord]) -> Result<Dataset> {
    let c_subject = column(path, header, "subject")?;
    let c_occasion = column(path, header, "occasion")?;
    let c_value = column(path, header, "value")?;

    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, HashMap<usize, f64>> = HashMap::new();
    let mut max_occasion = 0;
    for (k, rec) in records.iter().enumerate() {
        let line = k + 2;
        let subject = rec.get(c_subject).unwrap_or_default();
        if subject.is_empty() {
            return Err(invalid(
                path,
                format!("row {line}: missing subject identifier"),
            ));
        }
        let occ_raw = rec.get(c_occasion).unwrap_or_default();
        let occasion = match occ_raw.parse::<usize>() {
            Ok(o) if o >= 1 => o,
            _ => {
                return Err(invalid(
                    path,
                    format!("row {line}: occasion '{occ_raw}' is not a positive integer"),
                ))
            }
        };
        let value = parse_cell(path, line, "value", rec.get(c_value).unwrap_or_default())?;
        let entry = cells.entry(subject.to_string()).or_insert_with(|| {
            order.push(subject.to_string());
            HashMap::new()
        });
        if entry.insert(occasion, value).is_some() {
            return Err(invalid(
                path,
                format!(
                    "row {line}: duplicate observation for subject {subject}, occasion {occasion}"
                ),
            ));
        }
        max_occasion = max_occasion.max(occasion);
    }
    if order.len() < 2 {
        return Err(invalid(
            path,
            format!("need at least 2 subjects, found {}", order.len()),
        ));
    }
    let m = max_occasion;
    let mut values = Vec::with_capacity(order.len() * m);
    for subject in &order {
        let row = &cells[subject];
        for occasion in 1..=m {
            match row.get(&occasion) {
                Some(v) => values.push(*v),
                None => {
                    return Err(invalid(
                        path,
                        format!("subject {subject} lacks occasion {occasion}"),
                    ));
                }
            }
        }
    }
    Dataset::new(order.len(), m, values)
        .and_then(|d| d.with_subject_ids(order))
        .map_err(|e| invalid(path, e.to_string()))
}

/// Wide CSV with shortest round-trip float formatting.
pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::from("subject");
    for j in 1..=d.m() {
        write!(out, ",t{j}").unwrap();
    }
    out.push('\n');
    for (i, row) in d.rows().enumerate() {
        out.push_str(&d.subject_label(i));
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    super::write_atomic(path, out.as_bytes())
}
