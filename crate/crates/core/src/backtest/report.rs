//! Report file output: one JSON document plus three fixed-format CSVs.
//!
//! Formats are pinned so identical runs produce byte-identical files:
//! values carry 6 fractional digits, fees 2, returns 12, and the JSON
//! document is pretty-printed with stable field order.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use super::BacktestReport;
use crate::error::{Error, Result};
use crate::metrics::MetricsSummary;

/// Writes `report.json`, `values.csv`, `returns.csv`, and `fees.csv`.
pub fn write_report_files(dir: &Path, report: &BacktestReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), to_json(report)?)?;

    let mut values = String::from("date,value\n");
    for (date, value) in &report.daily_values {
        values.push_str(&format!("{date},{value:.6}\n"));
    }
    fs::write(dir.join("values.csv"), values)?;

    let mut returns = String::from("date,daily_return\n");
    for (date, r) in &report.daily_returns {
        returns.push_str(&format!("{date},{r:.12}\n"));
    }
    fs::write(dir.join("returns.csv"), returns)?;

    let mut fees = String::from("date,admin,spread\n");
    for fee in &report.daily_fees {
        fees.push_str(&format!("{},{:.2},{:.2}\n", fee.date, fee.admin, fee.spread));
    }
    fs::write(dir.join("fees.csv"), fees)?;
    Ok(())
}

/// Parses a report document written by [`write_report_files`].
pub fn read_report_json(path: &Path) -> Result<BacktestReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Domain(format!("{}: invalid report document: {e}", path.display())))
}

/// Writes a standalone `metrics.json` document.
pub fn write_metrics_json(path: &Path, metrics: &MetricsSummary) -> Result<()> {
    fs::write(path, to_json(metrics)?)?;
    Ok(())
}

/// Reads a `returns.csv` file back into (date, return) pairs.
pub fn read_returns_csv(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "date,daily_return")) => {}
        _ => {
            return Err(Error::MalformedRow {
                row: 1,
                message: "expected header 'date,daily_return'".into(),
            })
        }
    }
    for (i, line) in lines {
        let row = i as u64 + 1;
        let (date, value) = line
            .split_once(',')
            .ok_or_else(|| Error::MalformedRow { row, message: "expected 2 fields".into() })?;
        let date: NaiveDate = date.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("invalid date '{date}'"),
        })?;
        let value: f64 = value.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("invalid return '{value}'"),
        })?;
        if !value.is_finite() || value <= -1.0 {
            return Err(Error::MalformedRow {
                row,
                message: format!("return {value} must be finite and > -1"),
            });
        }
        out.push((date, value));
    }
    if out.is_empty() {
        return Err(Error::EmptyUniverse(format!("{} has no return rows", path.display())));
    }
    Ok(out)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Domain(format!("serialization failed: {e}")))?;
    json.push('\n');
    Ok(json)
}

// ==================== Tests ====================
