//! Metrics, experiment protocols and report persistence.
//!
//! Every protocol run produces [`EvalReport`]s (per-seed metrics, mean and
//! sample standard deviation, provenance) plus one [`PredictionRecord`] per
//! query. Reports carry no timestamps or latencies, so rerunning a protocol
//! against a warm response cache reproduces the report files byte for byte.

mod metrics;
mod protocols;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use metrics::{
    aggregate_seeds, compute_metrics, default_positive, f1_score, mean_std, Confusion, MetricName,
    MetricSummary, Metrics,
};
pub use protocols::{
    unseen_gain, unseen_gap, Evaluator, LabelPositionReport, NeedleReport, OrderPerturbationReport,
    PermutationStats, Retriever, Selected, SweepResult, UnseenCategoryReport, UnseenOptions,
    DEFAULT_NEEDLE_SIZES, DEFAULT_ORDER_SHOTS, DEFAULT_SHOTS,
};

use crate::corpus::CorpusError;
use crate::gateway::{GatewayError, Prediction};
use crate::prompting::{ManifestEntry, PromptConfig, PromptError};
use crate::retrieval::RetrievalError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {0} to evaluate")]
    Empty(&'static str),
    #[error("label {0} belongs to a different task")]
    TaskMismatch(String),
    #[error("test sample {0} has no gold label for this task")]
    MissingGold(String),
    #[error("{protocol} needs {requirement}")]
    Precondition {
        protocol: &'static str,
        requirement: String,
    },
    #[error("haystack pool has {available} entries, size {n} needs {needed}")]
    HaystackTooSmall {
        n: usize,
        needed: usize,
        available: usize,
    },
    #[error("haystack entry {0} duplicates a query text")]
    HaystackOverlap(String),
    #[error("category {0} is absent from the demonstration pool")]
    CategoryAbsent(String),
    #[error("semantic retrieval needs an embedder")]
    MissingEmbedder,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Where a report's inputs came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub endpoint: String,
    pub endpoint_identity: String,
    pub template_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
}

/// One evaluated condition (grid point) over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub protocol: String,
    /// Values that distinguish this condition within its protocol, such as
    /// the shot count or a placement.
    pub grid: BTreeMap<String, Value>,
    pub config: PromptConfig,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedMetrics>,
    pub summary: MetricSummary,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl EvalReport {
    pub fn mean(&self, metric: MetricName) -> f64 {
        self.summary.mean[&metric]
    }

    pub fn std(&self, metric: MetricName) -> f64 {
        self.summary.std[&metric]
    }

    /// Short name for files: protocol plus grid values.
    pub fn slug(&self) -> String {
        let mut s = self.protocol.clone();
        for (k, v) in &self.grid {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let v: String = v
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            s.push_str(&format!("_{k}-{v}"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// One query's outcome under one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub seed: u64,
    pub query_id: String,
    pub gold: String,
    pub predicted: Option<String>,
    pub manifest: Vec<ManifestEntry>,
    #[serde(flatten)]
    pub prediction: Prediction,
}

/// A report and the predictions behind it.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: EvalReport,
    pub predictions: Vec<PredictionRecord>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), EvalError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

pub fn predictions_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes `<slug>.json` and `<slug>.predictions.jsonl` into `dir` and
/// returns the report path.
pub fn persist_run(dir: &Path, run: &Run) -> Result<PathBuf, EvalError> {
    let slug = run.report.slug();
    let path = dir.join(format!("{slug}.json"));
    write_file(&path, &run.report.to_json())?;
    write_file(
        &dir.join(format!("{slug}.predictions.jsonl")),
        &predictions_jsonl(&run.predictions),
    )?;
    Ok(path)
}

/// Persists several runs plus a `metrics.csv` table over all of them.
pub fn persist_runs(dir: &Path, runs: &[Run]) -> Result<Vec<PathBuf>, EvalError> {
    let mut paths = Vec::new();
    for run in runs {
        paths.push(persist_run(dir, run)?);
    }
    let reports: Vec<&EvalReport> = runs.iter().map(|r| &r.report).collect();
    write_file(&dir.join("metrics.csv"), &metrics_csv(&reports))?;
    Ok(paths)
}

fn grid_cell(grid: &BTreeMap<String, Value>) -> String {
    grid.iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (report, seed) and one mean and one std row per report.
pub fn metrics_csv(reports: &[&EvalReport]) -> String {
    let mut out =
        String::from("protocol,grid,seed,precision,recall,f1,fpr,accuracy,n,n_failures\n");
    for r in reports {
        let grid = csv_field(&grid_cell(&r.grid));
        for s in &r.per_seed {
            let m = &s.metrics;
            out.push_str(&format!(
                "{},{grid},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                r.protocol,
                s.seed,
                m.precision,
                m.recall,
                m.f1,
                m.fpr,
                m.accuracy,
                m.n,
                m.n_failures
            ));
        }
        for (row, table) in [("mean", &r.summary.mean), ("std", &r.summary.std)] {
            out.push_str(&format!("{},{grid},{row}", r.protocol));
            for m in MetricName::ALL {
                out.push_str(&format!(",{:.6}", table[&m]));
            }
            out.push_str(",,\n");
        }
    }
    out
}

/// Loads every `*.json` report in `dir` (non-recursive), sorted by file
/// name. Files that are not reports are named in the error.
pub fn load_reports(dir: &Path) -> Result<Vec<(PathBuf, EvalReport)>, EvalError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n != "run_manifest.json")
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let body = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let value: Value =
            serde_json::from_str(&body).map_err(|e| io_err(&p, format!("corrupt report: {e}")))?;
        if value.get("schema_version").is_none() || value.get("protocol").is_none() {
            // protocol summaries (e.g. unseen-category tables) live alongside
            continue;
        }
        let report: EvalReport = serde_json::from_value(value)
            .map_err(|e| io_err(&p, format!("corrupt report: {e}")))?;
        out.push((p, report));
    }
    Ok(out)
}
