//! Deterministic CSV and JSON emission.
//!
//! Floats in CSV cells use 17 significant digits so values round-trip
//! exactly; JSON goes through serde_json's shortest-round-trip rendering.
//! Both are pure functions of their inputs, which is what makes re-runs
//! byte-identical.

use crate::error::CliError;
use serde::Serialize;
use std::path::Path;

/// Renders a float with 17 significant digits (round-trip exact for f64).
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header row plus data rows; fields containing separators are
/// quoted per the usual CSV rules (the `env_set` field contains commas).
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => CliError::Config(format!("csv error on {}: {other:?}", path.display())),
    })?;
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => CliError::Config(format!("csv error on {}: {other:?}", path.display())),
    };
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Config(format!("json serialization failed: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

/// Mean and sample standard deviation (n - 1); std is 0 for fewer than
/// two values, and both are None for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}
