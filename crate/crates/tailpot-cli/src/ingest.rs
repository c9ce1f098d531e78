//! CSV ingestion: a single numeric column for series, all columns for
//! exogenous matrices. RFC-4180 subset with a header row; quoted fields are
//! fine.

use crate::CliError;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaPolicy {
    /// Any non-numeric cell is a load error naming the row.
    Error,
    /// Non-numeric cells are dropped with a warning count.
    DropWithWarning,
}

impl NaPolicy {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "error" => Ok(NaPolicy::Error),
            "drop-with-warning" | "drop" => Ok(NaPolicy::DropWithWarning),
            other => Err(CliError::config(format!(
                "na_policy must be 'error' or 'drop-with-warning', got '{other}'"
            ))),
        }
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn resolve_column(headers: &csv::StringRecord, column: Option<&str>) -> Result<usize, CliError> {
    match column {
        None => Ok(0),
        Some(sel) => {
            if let Ok(idx) = sel.parse::<usize>() {
                if idx < headers.len() {
                    return Ok(idx);
                }
                return Err(CliError::config(format!(
                    "column index {idx} out of range (file has {} columns)",
                    headers.len()
                )));
            }
            headers
                .iter()
                .position(|h| h == sel)
                .ok_or_else(|| CliError::config(format!("no column named '{sel}'")))
        }
    }
}

/// Load one numeric column in file order. Returns the series and the number
/// of dropped rows (nonzero only under `DropWithWarning`).
pub fn ingest_csv(
    path: &Path,
    column: Option<&str>,
    na_policy: NaPolicy,
) -> Result<(Vec<f64>, usize), CliError> {
    let mut reader = open(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("bad header row: {e}")))?
        .clone();
    let idx = resolve_column(&headers, column)?;
    let mut series = Vec::new();
    let mut warnings = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("row {}: {e}", row + 2)))?;
        let cell = record.get(idx).unwrap_or("");
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => series.push(v),
            _ => match na_policy {
                NaPolicy::Error => {
                    return Err(CliError::data(format!(
                        "row {}: cannot parse '{cell}' in column '{}' as a number",
                        row + 2,
                        headers.get(idx).unwrap_or("?")
                    )))
                }
                NaPolicy::DropWithWarning => {
                    warnings += 1;
                    log::warn!("row {}: dropped non-numeric cell '{cell}'", row + 2);
                }
            },
        }
    }
    if series.is_empty() {
        return Err(CliError::data("no usable rows in the selected column"));
    }
    Ok((series, warnings))
}

/// Load every column of a CSV as an exogenous matrix (rows in file order).
pub fn ingest_exog(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = open(path)?;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("row {}: {e}", row + 2)))?;
        let mut vals = Vec::with_capacity(record.len());
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::data(format!("exog row {}: cannot parse '{cell}'", row + 2))
            })?;
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(CliError::data("exogenous matrix is empty"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(CliError::data("exogenous matrix has ragged rows"));
    }
    Ok(rows)
}
