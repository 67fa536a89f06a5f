//! CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::matrix::{Cell, RunOutcome};
use crate::stats::CellStats;

pub const TRACE_HEADER: [&str; 4] = ["run_id", "eval_index", "bsms_true", "bsms_mean"];

/// One line of `summary.csv`. Metric fields are empty for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub function: String,
    pub d: usize,
    pub fiv: f64,
    pub noise: f64,
    pub surrogate: String,
    pub replication: String,
    pub r_or_rmax: usize,
    pub seed: u64,
    pub auc: Option<f64>,
    pub mtfauc: Option<f64>,
    pub final_bsms_true: Option<f64>,
    pub total_evals: Option<usize>,
    /// Semicolon-joined variable indices (MARS-family surrogates only).
    pub selected_variables: String,
    /// `ok`, or the error that ended the run.
    pub status: String,
}

impl SummaryRow {
    pub fn from_outcome(o: &RunOutcome) -> Self {
        let c = &o.spec.config;
        let ok = o.result.as_ref().ok();
        Self {
            run_id: o.spec.run_id.clone(),
            function: c.function.to_string(),
            d: c.dim,
            fiv: c.fiv,
            noise: c.noise,
            surrogate: c.surrogate.to_string(),
            replication: c.replication.name().to_string(),
            r_or_rmax: c.replication.level(),
            seed: c.seed,
            auc: ok.map(|s| s.auc),
            mtfauc: ok.map(|s| s.mtfauc),
            final_bsms_true: ok.map(|s| s.final_bsms_true),
            total_evals: ok.map(|s| s.total_evals),
            selected_variables: ok
                .and_then(|s| s.selected_variables.as_ref())
                .map(|v| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            status: match &o.result {
                Ok(_) => "ok".into(),
                Err(e) => format!("error: {e}"),
            },
        }
    }

    pub fn selected(&self) -> Vec<usize> {
        self.selected_variables
            .split(';')
            .filter_map(|s| s.parse().ok())
            .collect()
    }
}

fn create(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes one run's trace; failed runs produce a header-only file.
pub fn write_trace_csv(path: &Path, outcome: &RunOutcome) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record(TRACE_HEADER)?;
    if let Ok(s) = &outcome.result {
        for [i, t, m] in &s.trace {
            w.write_record([outcome.spec.run_id.as_str(), i, t, m])?;
        }
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    if rows.is_empty() {
        // serde only emits the header with the first record.
        let header: Vec<String> = csv_header();
        w.write_record(&header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn csv_header() -> Vec<String> {
    [
        "run_id",
        "function",
        "d",
        "fiv",
        "noise",
        "surrogate",
        "replication",
        "r_or_rmax",
        "seed",
        "auc",
        "mtfauc",
        "final_bsms_true",
        "total_evals",
        "selected_variables",
        "status",
    ]
    .map(String::from)
    .to_vec()
}

pub fn read_summary_csv(path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<SummaryRow>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

pub fn write_cells_csv(path: &Path, cells: &[Cell], stats: &[CellStats]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "cell", "function", "noise", "surrogate", "replication", "r_or_rmax", "runs", "failed",
        "mtfauc_mean", "mtfauc_var", "mtfauc_q1", "mtfauc_median", "mtfauc_q3", "final_mean",
        "final_var", "final_q1", "final_median", "final_q3", "important_selected",
        "unimportant_selected",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (c, s) in cells.iter().zip(stats) {
        let mut rec = vec![
            c.index.to_string(),
            c.function.to_string(),
            c.noise.to_string(),
            c.surrogate.to_string(),
            c.replication.name().to_string(),
            c.replication.level().to_string(),
            s.runs.to_string(),
            s.failed.to_string(),
        ];
        for q in [&s.mtfauc, &s.final_bsms_true] {
            rec.extend([q.mean, q.variance, q.q1, q.median, q.q3].map(opt));
        }
        rec.push(opt(s.selection.map(|v| v.0)));
        rec.push(opt(s.selection.map(|v| v.1)));
        w.write_record(&rec)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn trace_path(out: &Path, run_id: &str) -> PathBuf {
    out.join("traces").join(format!("{run_id}.csv"))
}
