//! Matrix and report tables as CSV with a header row. Floats are written
//! with 17 significant digits so they read back bit-identically.

use std::path::Path;

use nalgebra::DMatrix;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::estimators::CvPath;
use crate::simbench::{MetricReport, Summary};

pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

fn to_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Header `c1,…,cq`, one line per matrix row.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let header: Vec<String> = (1..=m.ncols()).map(|c| format!("c{}", c)).collect();
    to_bytes(&header, m.row_iter().map(|r| r.iter().map(|v| format_f64(*v)).collect()))
}

pub fn matrix_from_csv(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let cols = r.headers().map_err(|e| Error::Format(e.to_string()))?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != cols {
            return Err(Error::Format(format!("row {} has {} fields, expected {}", rows + 1, rec.len(), cols)));
        }
        for f in rec.iter() {
            values.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: '{}' is not a number", rows + 1, f)))?,
            );
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, &matrix_to_csv(m)?)
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    matrix_from_csv(&std::fs::read(path)?)
}

pub fn cv_path_to_csv(path: &CvPath) -> Result<Vec<u8>> {
    let header = vec!["lambda".to_string(), "cv_error".to_string(), "selected".to_string()];
    to_bytes(
        &header,
        path.lambdas.iter().zip(&path.errors).enumerate().map(|(i, (l, e))| {
            vec![format_f64(*l), format_f64(*e), (i == path.best_index).to_string()]
        }),
    )
}

fn summary_fields(s: &Option<Summary>) -> [String; 2] {
    match s {
        Some(s) => [format_f64(s.mean), s.se.map(format_f64).unwrap_or_else(|| "NA".into())],
        None => ["NA".into(), "NA".into()],
    }
}

/// One row per (configuration, method). Missing values are `NA`.
pub fn report_to_csv(report: &MetricReport) -> Result<Vec<u8>> {
    let header: Vec<String> = [
        "config", "method", "replicates", "failures", "ree_mean", "ree_se", "tpr_mean", "tpr_se", "fpr_mean", "fpr_se",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    to_bytes(
        &header,
        report.rows.iter().map(|r| {
            let mut row = vec![
                r.config.clone(),
                r.method.to_string(),
                r.replicates.to_string(),
                r.failures.to_string(),
            ];
            row.extend(summary_fields(&r.ree));
            row.extend(summary_fields(&r.tpr));
            row.extend(summary_fields(&r.fpr));
            row
        }),
    )
}
