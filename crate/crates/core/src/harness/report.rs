//! Report emission: a flat CSV table per experiment plus sidecars.
//!
//! For experiment `id` written to `dir`:
//! - `id.csv`: one [`ReportRow`] per grid point, deterministic
//! - `id.trials.jsonl`: one [`TrialRecord`] per trial, deterministic
//! - `id.<table>.csv`: histograms and other per-experiment tables
//! - `id.timing.csv`: measured wall time per grid point
//! - `id.meta.json`: spec, seed, artifact version, generation time
//!
//! Only the last two vary between reruns.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::experiments::ExperimentSpec;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_HEADER: [&str; 5] = [
    "parameters",
    "success_rate",
    "mean_interactions",
    "mean_error_mm",
    "mean_wall_time_s",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report has no rows")]
    Empty,
    #[error("i/o failure")]
    Io(#[from] io::Error),
    #[error("csv output")]
    Csv(#[from] csv::Error),
    #[error("json output")]
    Json(#[from] serde_json::Error),
}

/// Inapplicable fields are `None` and written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameters: String,
    pub success_rate: Option<f64>,
    pub mean_interactions: Option<f64>,
    pub mean_error_mm: Option<f64>,
    /// Left empty in the report body; wall time goes to the timing sidecar.
    pub mean_wall_time_s: Option<f64>,
}

impl ReportRow {
    pub fn new(parameters: impl Into<String>) -> Self {
        ReportRow {
            parameters: parameters.into(),
            success_rate: None,
            mean_interactions: None,
            mean_error_mm: None,
            mean_wall_time_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub parameters: String,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slips: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

/// A named auxiliary table, written as `id.<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub spec: ExperimentSpec,
    pub rows: Vec<ReportRow>,
    pub trials: Vec<TrialRecord>,
    pub tables: Vec<Table>,
    /// (parameters, mean wall time per trial in seconds).
    pub wall_time_s: Vec<(String, f64)>,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    spec: &'a ExperimentSpec,
    seed: u64,
    artifact_version: &'a str,
    generated_unix_s: u64,
}

pub fn write_rows<W: Write>(rows: &[ReportRow], out: W) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ReportRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_trials<W: Write>(trials: &[TrialRecord], mut out: W) -> Result<(), ReportError> {
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, ReportError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?)
}

fn write_table(table: &Table, path: &Path) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the report files into `dir` and returns their paths, body first.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ReportError> {
    if report.rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let id = report.spec.experiment.name();
    let mut paths = Vec::new();

    let body = dir.join(format!("{id}.csv"));
    write_rows(&report.rows, BufWriter::new(File::create(&body)?))?;
    paths.push(body);

    let trials = dir.join(format!("{id}.trials.jsonl"));
    write_trials(&report.trials, BufWriter::new(File::create(&trials)?))?;
    paths.push(trials);

    for t in &report.tables {
        let p = dir.join(format!("{id}.{}.csv", t.name));
        write_table(t, &p)?;
        paths.push(p);
    }

    let timing = dir.join(format!("{id}.timing.csv"));
    let mut w = csv::Writer::from_path(&timing)?;
    w.write_record(["parameters", "mean_wall_time_s"])?;
    for (p, t) in &report.wall_time_s {
        w.write_record([p.clone(), t.to_string()])?;
    }
    w.flush()?;
    paths.push(timing);

    let meta = dir.join(format!("{id}.meta.json"));
    let generated_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let m = Meta {
        spec: &report.spec,
        seed: report.spec.master_seed,
        artifact_version: ARTIFACT_VERSION,
        generated_unix_s,
    };
    fs::write(&meta, serde_json::to_string_pretty(&m)? + "\n")?;
    paths.push(meta);
    Ok(paths)
}

/// Files whose bytes depend only on the spec.
pub fn is_deterministic_output(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    !(name.ends_with(".timing.csv") || name.ends_with(".meta.json"))
}
