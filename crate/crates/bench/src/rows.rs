//! Result rows and their CSV form.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CSV_HEADER: &str = "x,method,j_lin,j_db,rate_bps_hz,mc_stderr,status,wall_s";
pub const STATUS_OK: &str = "ok";

/// One (grid point, method) cell. Missing values are written as empty fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub x: f64,
    pub method: String,
    pub j_lin: Option<f64>,
    pub j_db: Option<f64>,
    pub rate_bps_hz: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
    pub wall_s: f64,
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ResultRow {
    pub fn ok(x: f64, method: impl Into<String>, j_lin: f64, rate: Option<f64>, wall_s: f64) -> Self {
        Self {
            x,
            method: method.into(),
            j_lin: Some(j_lin),
            j_db: Some(to_db(j_lin)),
            rate_bps_hz: rate,
            mc_stderr: None,
            status: STATUS_OK.into(),
            wall_s,
        }
    }

    pub fn failed(x: f64, method: impl Into<String>, reason: impl std::fmt::Display, wall_s: f64) -> Self {
        Self {
            x,
            method: method.into(),
            j_lin: None,
            j_db: None,
            rate_bps_hz: None,
            mc_stderr: None,
            status: format!("failed: {reason}"),
            wall_s,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.mc_stderr = Some(stderr);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| BenchError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| BenchError::io(path, e))?;
    tmp.flush().map_err(|e| BenchError::io(path, e))?;
    tmp.persist(path).map_err(|e| BenchError::io(path, e.error))?;
    Ok(())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| BenchError::io("<csv buffer>", e.into_error()))
}

pub fn write_rows(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &rows_to_csv(rows)?)
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::InvalidSpec(format!(
            "{}: unexpected CSV header `{}`",
            path.display(),
            header.join(",")
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_line_endings() {
        let rows = vec![
            ResultRow::ok(64.0, "asymptotic", 0.25, Some(3.5), 0.1),
            ResultRow::failed(96.0, "sca_r0.9", "rate target, unreachable", 0.0),
        ];
        let bytes = rows_to_csv(&rows).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with(&format!("{CSV_HEADER}\n")));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("\"failed: rate target, unreachable\""));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = vec![
            ResultRow::ok(1.0, "monte_carlo", 0.5, None, 2.0).with_stderr(0.01),
            ResultRow::failed(2.0, "high_snr", "boom", 0.0),
        ];
        write_rows(&rows, &path).unwrap();
        assert_eq!(read_rows(&path).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn db_and_linear_agree(j in 1e-12f64..1e12) {
            let row = ResultRow::ok(0.0, "m", j, None, 0.0);
            let back = from_db(row.j_db.unwrap());
            prop_assert!((back - j).abs() <= 1e-9 * j);
        }
    }
}
