//! File formats: dense matrices (text or binary), measurement vectors,
//! JSON experiment reports and the plot-ready frequency CSV.
//!
//! Text matrices start with a `m,n` header followed by `m` comma-separated
//! rows. Floats are written in the shortest form that parses back to the
//! same bits. Binary matrices are `PKMX`, two little-endian `u64` dimensions
//! and the entries as little-endian `f64` in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::ExperimentReport;
use crate::linalg::{LinalgError, SensingMatrix};

pub const BINARY_MAGIC: &[u8; 4] = b"PKMX";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("declared {rows}x{cols} but {message}")]
    Shape { rows: usize, cols: usize, message: String },
    #[error("binary matrix truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("measurement must be a single row or column, got {rows}x{cols}")]
    NotAVector { rows: usize, cols: usize },
    #[error(transparent)]
    Matrix(#[from] LinalgError),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report schema version {0}")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Text,
    Binary,
}

fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.display().to_string(), source }
}

/// Serializes a row-major `rows x cols` block in the text format.
fn text_from_rows(rows: usize, cols: usize, row_major: &[f64]) -> String {
    let mut out = format!("{rows},{cols}\n");
    for r in 0..rows {
        let line: Vec<String> = row_major[r * cols..(r + 1) * cols].iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn binary_from_rows(rows: usize, cols: usize, row_major: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * row_major.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in row_major {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn matrix_to_text(matrix: &SensingMatrix) -> String {
    text_from_rows(matrix.rows(), matrix.cols(), &matrix.to_row_major())
}

pub fn matrix_to_binary(matrix: &SensingMatrix) -> Vec<u8> {
    binary_from_rows(matrix.rows(), matrix.cols(), &matrix.to_row_major())
}

/// Raw `(rows, cols, row_major)` from either format, chosen by magic bytes.
fn parse_dense(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), FormatError> {
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| FormatError::Parse { line: 1, message: format!("not UTF-8: {e}") })?;
        parse_text(text)
    }
}

fn parse_binary(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), FormatError> {
    if bytes.len() < 20 {
        return Err(FormatError::Truncated { expected: 20, found: bytes.len() });
    }
    let dim = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (dim(4), dim(12));
    let count = rows.checked_mul(cols).and_then(|c| c.checked_mul(8)).and_then(|b| usize::try_from(b).ok());
    let Some(payload) = count else {
        return Err(FormatError::Shape { rows: rows as usize, cols: cols as usize, message: "size overflows".into() });
    };
    let expected = 20 + payload;
    if bytes.len() != expected {
        if bytes.len() < expected {
            return Err(FormatError::Truncated { expected, found: bytes.len() });
        }
        return Err(FormatError::Shape {
            rows: rows as usize,
            cols: cols as usize,
            message: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let data = bytes[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((rows as usize, cols as usize, data))
}

fn parse_text(text: &str) -> Result<(usize, usize, Vec<f64>), FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(FormatError::Parse { line: 1, message: "missing 'm,n' header".into() })?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let parse_dim = |s: &str| s.parse::<usize>().map_err(|e| FormatError::Parse { line: 1, message: format!("bad dimension '{s}': {e}") });
    if dims.len() != 2 {
        return Err(FormatError::Parse { line: 1, message: format!("header must be 'm,n', got '{header}'") });
    }
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut data = Vec::with_capacity(rows.saturating_mul(cols));
    let mut seen = 0;
    for (idx, line) in lines {
        seen += 1;
        if seen > rows {
            return Err(FormatError::Shape { rows, cols, message: format!("found extra row at line {}", idx + 1) });
        }
        let before = data.len();
        for field in line.split(',') {
            let f = field.trim();
            let v: f64 = f.parse().map_err(|e| FormatError::Parse { line: idx + 1, message: format!("bad number '{f}': {e}") })?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(FormatError::Shape { rows, cols, message: format!("line {} has {} entries", idx + 1, data.len() - before) });
        }
    }
    if seen != rows {
        return Err(FormatError::Shape { rows, cols, message: format!("found {seen} rows") });
    }
    Ok((rows, cols, data))
}

pub fn parse_matrix(bytes: &[u8]) -> Result<SensingMatrix, FormatError> {
    let (rows, cols, data) = parse_dense(bytes)?;
    Ok(SensingMatrix::from_row_major(rows, cols, &data)?)
}

pub fn read_matrix(path: &Path) -> Result<SensingMatrix, FormatError> {
    parse_matrix(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_matrix(path: &Path, matrix: &SensingMatrix, format: MatrixFormat) -> Result<(), FormatError> {
    let bytes = match format {
        MatrixFormat::Text => matrix_to_text(matrix).into_bytes(),
        MatrixFormat::Binary => matrix_to_binary(matrix),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

/// A measurement is stored as an `m x 1` matrix file; `1 x m` is accepted too.
pub fn parse_measurement(bytes: &[u8]) -> Result<Vec<f64>, FormatError> {
    let (rows, cols, data) = parse_dense(bytes)?;
    if rows != 1 && cols != 1 {
        return Err(FormatError::NotAVector { rows, cols });
    }
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { row: if cols == 1 { k } else { 0 }, col: if cols == 1 { 0 } else { k } }.into());
    }
    Ok(data)
}

pub fn read_measurement(path: &Path) -> Result<Vec<f64>, FormatError> {
    parse_measurement(&fs::read(path).map_err(io_err(path))?)
}

pub fn measurement_to_text(b: &[f64]) -> String {
    text_from_rows(b.len(), 1, b)
}

pub fn write_measurement(path: &Path, b: &[f64], format: MatrixFormat) -> Result<(), FormatError> {
    let bytes = match format {
        MatrixFormat::Text => measurement_to_text(b).into_bytes(),
        MatrixFormat::Binary => binary_from_rows(b.len(), 1, b),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

/// Versioned envelope for a persisted [`ExperimentReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: ExperimentReport,
}

pub fn report_to_json(report: &ExperimentReport) -> String {
    let file = ReportFile { schema_version: REPORT_SCHEMA_VERSION, report: report.clone() };
    let mut s = serde_json::to_string_pretty(&file).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<ExperimentReport, FormatError> {
    let file: ReportFile = serde_json::from_str(text)?;
    if file.schema_version != REPORT_SCHEMA_VERSION {
        return Err(FormatError::SchemaVersion(file.schema_version));
    }
    Ok(file.report)
}

/// `algorithm,m,n,s,frequency`, one row per cell, sorted by those keys.
/// Frequencies are printed exactly as in the JSON report.
pub fn frequency_csv(report: &ExperimentReport) -> String {
    let mut cells: Vec<_> = report.cells.iter().collect();
    cells.sort_by(|a, b| (a.algorithm.name(), a.m, a.n, a.s).cmp(&(b.algorithm.name(), b.m, b.n, b.s)));
    let mut out = String::from("algorithm,m,n,s,frequency\n");
    for c in cells {
        let freq = serde_json::to_string(&c.frequency).expect("finite frequency");
        out.push_str(&format!("{},{},{},{},{}\n", c.algorithm, c.m, c.n, c.s, freq));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SensingMatrix {
        SensingMatrix::from_row_major(2, 3, &[0.1, -2.5, 1e-300, 3.0, 1.0 / 3.0, -7e22]).unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let a = sample();
        let text = matrix_to_text(&a);
        assert!(text.starts_with("2,3\n0.1,-2.5,"));
        assert_eq!(parse_matrix(text.as_bytes()).unwrap(), a);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let a = sample();
        let bytes = matrix_to_binary(&a);
        assert_eq!(&bytes[..4], b"PKMX");
        assert_eq!(bytes.len(), 20 + 48);
        assert_eq!(parse_matrix(&bytes).unwrap(), a);
    }

    #[test]
    fn malformed_text() {
        assert!(matches!(parse_matrix(b""), Err(FormatError::Parse { .. })));
        assert!(matches!(parse_matrix(b"2\n1\n"), Err(FormatError::Parse { .. })));
        assert!(matches!(parse_matrix(b"2,2\n1,2\n"), Err(FormatError::Shape { .. })));
        assert!(matches!(parse_matrix(b"1,2\n1,2,3\n"), Err(FormatError::Shape { .. })));
        assert!(matches!(parse_matrix(b"1,2\n1,x\n"), Err(FormatError::Parse { line: 2, .. })));
        assert!(matches!(parse_matrix(b"1,2\n1,2\n3,4\n"), Err(FormatError::Shape { .. })));
        assert!(matches!(parse_matrix(b"1,2\n1,NaN\n"), Err(FormatError::Matrix(LinalgError::NonFinite { .. }))));
    }

    #[test]
    fn malformed_binary() {
        let mut bytes = matrix_to_binary(&sample());
        bytes.pop();
        assert!(matches!(parse_matrix(&bytes), Err(FormatError::Truncated { .. })));
        assert!(matches!(parse_matrix(b"PKMX\x01"), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn measurements() {
        let b = vec![0.0, 7.0, 0.0, -1.0];
        assert_eq!(measurement_to_text(&b), "4,1\n0.0\n7.0\n0.0\n-1.0\n");
        assert_eq!(parse_measurement(measurement_to_text(&b).as_bytes()).unwrap(), b);
        assert_eq!(parse_measurement(b"1,3\n1,2,3\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(matches!(parse_measurement(b"2,2\n1,2\n3,4\n"), Err(FormatError::NotAVector { .. })));
        assert!(parse_measurement(b"1,1\ninf\n").is_err());
    }
}
