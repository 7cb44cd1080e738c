//! CSV emission with RFC-4180 quoting and a fixed float format of six
//! significant digits.

use std::path::Path;

use crate::io::IoError;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Str(String),
    Int(i64),
    Float(f64),
}

impl From<&str> for Field {
    fn from(v: &str) -> Field {
        Field::Str(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Field {
        Field::Str(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Field {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Field {
        Field::Float(v)
    }
}

/// Six significant digits, plain decimal where reasonable, scientific
/// for extreme magnitudes.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-4..=9).contains(&magnitude) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Trim trailing zeros but keep at least one digit after the point.
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        s
    }
}

fn render(field: &Field) -> String {
    match field {
        Field::Str(s) => s.clone(),
        Field::Int(i) => i.to_string(),
        Field::Float(f) => format_float(*f),
    }
}

/// Write header + records; quoting is handled by the writer.
pub fn emit_csv(header: &[&str], records: &[Vec<Field>], path: &Path) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| IoError::Csv(e.to_string()))?;
    writer
        .write_record(header)
        .map_err(|e| IoError::Csv(e.to_string()))?;
    for record in records {
        if record.len() != header.len() {
            return Err(IoError::Csv(format!(
                "record has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        writer
            .write_record(record.iter().map(render))
            .map_err(|e| IoError::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(())
}

/// Read back a CSV as (header, string rows); used by `report` and tests.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| IoError::Csv(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| IoError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Csv(e.to_string()))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
