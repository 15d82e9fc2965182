//! Post-hoc per-class score rescaling and the equal-budgets schedule.
//!
//! Rescaling searches per-class log-scalars `l_c` (applied as
//! `exp(l_c) * score_c`) that maximize accuracy on a balancing set — the
//! test set for oracle balancing, a small replay buffer for buffer
//! balancing. The identity candidate is always evaluated first, so fitted
//! scalars can never be worse than no scaling on the set they were fit on.

mod cma_es;

pub use cma_es::{cma_es_maximize, CmaConfig};

use crate::classifier::argmin;
use crate::error::{PecError, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Per-class multiplicative score scalars, parameterized in log space so the
/// search is unconstrained while the scalars stay positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingScalars {
    pub log_scalars: Vec<f64>,
}

impl BalancingScalars {
    pub fn identity(classes: usize) -> Self {
        BalancingScalars {
            log_scalars: vec![0.0; classes],
        }
    }

    pub fn scalars(&self) -> Vec<f64> {
        self.log_scalars.iter().map(|l| l.exp()).collect()
    }
}

/// Accuracy of `argmin_c exp(l_c) * scores[i, c]` against `labels`.
pub fn scaled_accuracy(scores: &Array2<f64>, labels: &[usize], log_scalars: &[f64]) -> f64 {
    let scalars: Vec<f64> = log_scalars.iter().map(|l| l.exp()).collect();
    let mut correct = 0usize;
    for (row, &label) in scores.rows().into_iter().zip(labels) {
        let scaled: Vec<f64> = row.iter().zip(&scalars).map(|(&s, &m)| s * m).collect();
        if argmin(&scaled) == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len().max(1) as f64
}

/// Fits per-class scalars on a balancing set of PEC scores.
pub fn fit_scalars(
    scores: &Array2<f64>,
    labels: &[usize],
    cfg: &CmaConfig,
) -> Result<BalancingScalars> {
    let classes = scores.ncols();
    if scores.nrows() != labels.len() {
        return Err(PecError::ShapeMismatch(format!(
            "{} score rows for {} labels",
            scores.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(PecError::InvalidConfig("empty balancing set".into()));
    }
    let distinct = {
        let mut seen = vec![false; classes];
        for &l in labels {
            if l >= classes {
                return Err(PecError::InvalidConfig(format!(
                    "label {l} out of range for {classes} score columns"
                )));
            }
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(PecError::InvalidConfig(
            "balancing set must contain at least two classes".into(),
        ));
    }
    // identity first: scaling must never lose to no scaling on this set
    let identity = BalancingScalars::identity(classes);
    let identity_acc = scaled_accuracy(scores, labels, &identity.log_scalars);
    let fitness = |l: &[f64]| scaled_accuracy(scores, labels, l);
    let (best, best_acc) = cma_es_maximize(fitness, &identity.log_scalars, cfg)?;
    if best_acc > identity_acc {
        Ok(BalancingScalars { log_scalars: best })
    } else {
        Ok(identity)
    }
}

/// Elementwise rescaling of one score vector; predict with `argmin` of the
/// result.
pub fn apply_scalars(scores: &[f64], scalars: &BalancingScalars) -> Result<Vec<f64>> {
    if scores.len() != scalars.log_scalars.len() {
        return Err(PecError::ShapeMismatch(format!(
            "{} scores for {} scalars",
            scores.len(),
            scalars.log_scalars.len()
        )));
    }
    Ok(scores
        .iter()
        .zip(scalars.scalars())
        .map(|(&s, m)| s * m)
        .collect())
}

/// Per-class step counts for equal-budgets training: with `single_pass`,
/// every class gets the minimum class count; otherwise every class gets the
/// fixed `steps` budget.
pub fn equal_budget_schedule(
    class_counts: &[usize],
    single_pass: bool,
    steps: Option<usize>,
) -> Result<Vec<usize>> {
    if class_counts.is_empty() {
        return Err(PecError::InvalidConfig("no classes".into()));
    }
    if single_pass {
        let min = *class_counts.iter().min().unwrap();
        if min == 0 {
            return Err(PecError::InvalidConfig(
                "single-pass equal budgets need data for every class".into(),
            ));
        }
        Ok(vec![min; class_counts.len()])
    } else {
        let s = steps.ok_or_else(|| {
            PecError::InvalidConfig("fixed-budget mode needs a step count".into())
        })?;
        Ok(vec![s; class_counts.len()])
    }
}

#[cfg(test)]
mod tests;
