//! CSV tables. Floats are written with 17 significant digits so that they
//! parse back to the same bits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const METRICS_HEADER: [&str; 12] = [
    "replicate",
    "method",
    "N",
    "M",
    "epsilon",
    "ise_f",
    "mse_p95",
    "kl",
    "match_distance",
    "mean",
    "variance",
    "runtime_ms",
];

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// One line of the per-replicate metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub replicate: usize,
    pub method: String,
    pub n_particles: usize,
    pub n_replicates: usize,
    pub epsilon: f64,
    pub report: MetricsReport,
}

impl MetricsRow {
    pub fn fields(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            self.replicate.to_string(),
            self.method.clone(),
            self.n_particles.to_string(),
            self.n_replicates.to_string(),
            format_float(self.epsilon),
            format_float(r.ise_f),
            format_opt(r.mse_p95),
            format_opt(r.kl),
            format_opt(r.match_distance),
            format_float(r.mean_est),
            format_float(r.var_est),
            r.runtime.as_millis().to_string(),
        ]
    }
}

/// Write `header` and `rows` to `path` (LF line endings).
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let to_io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} fields, header {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(|s| s.as_ref())).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_table(path, &METRICS_HEADER, rows.iter().map(MetricsRow::fields))
}

/// Columns of floats sharing one header.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch("columns differ in length".into()));
    }
    write_table(path, header, (0..n).map(|i| columns.iter().map(|c| format_float(c[i])).collect::<Vec<_>>()))
}

/// Write raw text, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
