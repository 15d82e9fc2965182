//! Run reports, aggregates, and serialization.

use crate::error::{PecError, Result};
use crate::harness::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Everything one experiment produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Final test accuracy over all classes, in `[0, 1]`.
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub per_task_accuracy: Vec<f64>,
    pub trained_steps_per_class: Vec<usize>,
    pub param_count: usize,
    pub mac_count: usize,
    pub wall_time_s: f64,
}

/// Exact-match ratio; errors on empty inputs.
pub fn final_average_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(PecError::InvalidConfig(format!(
            "{} predictions against {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Stable CSV header; one row per run. Pinned by a golden test.
pub const CSV_HEADER: &str = "method,dataset,tasks,classes_per_task,seed,accuracy,lr,batch_size,decay,budget,balancing,param_count,mac_count,wall_time_s";

pub fn run_to_csv(report: &RunReport) -> String {
    let cfg = &report.config;
    format!(
        "{:?},{:?},{},{},{},{:.6},{},{},{},{:?},{:?},{},{},{:.3}",
        cfg.method,
        cfg.dataset,
        cfg.split.0,
        cfg.split.1,
        report.seed,
        report.accuracy,
        cfg.resolved_lr(),
        cfg.resolved_batch_size(),
        cfg.resolved_decay(),
        cfg.budget,
        cfg.balancing,
        report.param_count,
        report.mac_count,
        report.wall_time_s
    )
    .to_lowercase()
}

/// Writes a report as pretty JSON or a single-row CSV.
pub fn emit_report(report: &RunReport, path: &Path, format: &str) -> Result<()> {
    let body = match format {
        "json" => serde_json::to_string_pretty(report)
            .map_err(|e| PecError::InvalidConfig(e.to_string()))?,
        "csv" => format!("{CSV_HEADER}\n{}\n", run_to_csv(report)),
        other => {
            return Err(PecError::InvalidConfig(format!(
                "unknown report format {other:?} (use json or csv)"
            )))
        }
    };
    std::fs::write(path, body)?;
    Ok(())
}

/// Per-seed runs plus the aggregate the tables report: mean and standard
/// error (sample std over sqrt n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<RunReport>,
    pub seeds: Vec<u64>,
    pub mean_accuracy: f64,
    pub std_error: f64,
    /// Single-seed sweeps report a zero standard error by convention.
    pub single_seed: bool,
}

impl SweepReport {
    pub fn from_runs(runs: Vec<RunReport>) -> Result<Self> {
        if runs.is_empty() {
            return Err(PecError::InvalidConfig("no runs to aggregate".into()));
        }
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let std_error = if runs.len() == 1 {
            0.0
        } else {
            let var = runs
                .iter()
                .map(|r| (r.accuracy - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (var / n).sqrt()
        };
        Ok(SweepReport {
            seeds: runs.iter().map(|r| r.seed).collect(),
            single_seed: runs.len() == 1,
            mean_accuracy: mean,
            std_error,
            runs,
        })
    }
}

pub fn emit_sweep(sweep: &SweepReport, path: &Path, format: &str) -> Result<()> {
    let body = match format {
        "json" => serde_json::to_string_pretty(sweep)
            .map_err(|e| PecError::InvalidConfig(e.to_string()))?,
        "csv" => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for run in &sweep.runs {
                out.push_str(&run_to_csv(run));
                out.push('\n');
            }
            out
        }
        other => {
            return Err(PecError::InvalidConfig(format!(
                "unknown report format {other:?} (use json or csv)"
            )))
        }
    };
    std::fs::write(path, body)?;
    Ok(())
}
