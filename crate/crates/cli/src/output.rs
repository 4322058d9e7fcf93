//! Deterministic text output: fixed 17-significant-digit floats, `.` decimal
//! separator, LF line endings. Identical inputs produce byte-identical files.

use std::io::Write;
use std::path::Path;

/// 17 significant digits in scientific notation; round-trips any f64.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Numeric cell with explicit `NA` for missing values (never a silent NaN).
pub fn opt_g17(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => g17(v),
        _ => "NA".to_string(),
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(bytes)
}
