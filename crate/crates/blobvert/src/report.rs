//! CSV and JSON outputs of the evaluation, tolerance and curve commands.

use std::path::Path;

use blobvert_core::eval::{Curve, Distribution, EvalReport, ToleranceReport};
use serde::Serialize;
use thiserror::Error;

use crate::spec::OracleSpec;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {message}")]
    Write { path: String, message: String },
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}

fn write_csv<R: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = R>,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

#[derive(Serialize)]
struct EvalCsvRow<'a> {
    index: usize,
    original: &'a str,
    reconstruction: &'a str,
    attacked_cos: f64,
    critic_cos: f64,
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    pairs: usize,
    attacked_oracle: &'a OracleSpec,
    critic_oracle: &'a OracleSpec,
    attacked: &'a Distribution,
    critic: &'a Distribution,
    /// Mean attacked-oracle cosine minus mean critic cosine.
    inflation: f64,
}

/// Writes `eval.csv` and `eval_summary.json` into `dir`. `names` labels the
/// (original, reconstruction) pair of each row.
pub fn write_eval(
    dir: &Path,
    names: &[(String, String)],
    report: &EvalReport,
    attacked: &OracleSpec,
    critic: &OracleSpec,
) -> Result<(), ReportError> {
    assert_eq!(names.len(), report.rows.len(), "one name pair per row");
    write_csv(
        &dir.join("eval.csv"),
        report
            .rows
            .iter()
            .zip(names)
            .enumerate()
            .map(|(index, (row, (o, r)))| EvalCsvRow {
                index,
                original: o,
                reconstruction: r,
                attacked_cos: row.attacked,
                critic_cos: row.critic,
            }),
    )?;
    write_json(
        &dir.join("eval_summary.json"),
        &EvalSummary {
            pairs: report.rows.len(),
            attacked_oracle: attacked,
            critic_oracle: critic,
            attacked: &report.attacked,
            critic: &report.critic,
            inflation: report.attacked.mean - report.critic.mean,
        },
    )
}

#[derive(Serialize)]
struct ToleranceCsvRow<'a> {
    index: usize,
    image: &'a str,
    similarity: f64,
}

#[derive(Serialize)]
struct ToleranceSummary<'a> {
    images: usize,
    oracle: &'a OracleSpec,
    min: f64,
    distribution: &'a Distribution,
}

/// Writes `tolerance.csv` and `tolerance_summary.json` into `dir`.
pub fn write_tolerance(
    dir: &Path,
    names: &[String],
    report: &ToleranceReport,
    oracle: &OracleSpec,
) -> Result<(), ReportError> {
    assert_eq!(names.len(), report.similarities.len(), "one name per image");
    write_csv(
        &dir.join("tolerance.csv"),
        report
            .similarities
            .iter()
            .zip(names)
            .enumerate()
            .map(|(index, (&similarity, image))| ToleranceCsvRow {
                index,
                image,
                similarity,
            }),
    )?;
    write_json(
        &dir.join("tolerance_summary.json"),
        &ToleranceSummary {
            images: names.len(),
            oracle,
            min: report
                .similarities
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            distribution: &report.distribution,
        },
    )
}

#[derive(Serialize)]
struct CurveRun<'a> {
    trace: &'a str,
    records: usize,
}

#[derive(Serialize)]
struct CurveMeta<'a> {
    runs: Vec<CurveRun<'a>>,
    points: usize,
    /// Set when traces had unequal lengths; all were cut to the shortest.
    truncated: bool,
}

/// Writes `curve.csv` (`iter,queries,mean_cos`) and `curve_meta.json`.
pub fn write_curve(dir: &Path, traces: &[String], curve: &Curve) -> Result<(), ReportError> {
    assert_eq!(traces.len(), curve.run_lengths.len(), "one name per run");
    write_csv(&dir.join("curve.csv"), &curve.points)?;
    write_json(
        &dir.join("curve_meta.json"),
        &CurveMeta {
            runs: traces
                .iter()
                .zip(&curve.run_lengths)
                .map(|(trace, &records)| CurveRun { trace, records })
                .collect(),
            points: curve.points.len(),
            truncated: curve.truncated,
        },
    )
}
