//! Streaming linear discriminant analysis.
//!
//! Per-class means plus one shared covariance, all online: the covariance
//! accumulates per-class Welford scatter and normalizes by the total count
//! (no Bessel correction), which makes it exactly the batch pooled
//! within-class estimate up to float roundoff, in any update order. Before
//! the first update the covariance is the identity.
//!
//! Prediction uses the precision of the shrinkage blend
//! `(1 - eps) * Sigma + eps * I`.

use crate::baselines::argmax;
use crate::error::{PecError, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct SldaModel {
    dim: usize,
    means: Vec<Vec<f64>>,
    counts: Vec<u64>,
    /// Pooled within-class scatter (sum over classes of Welford M2).
    scatter: Array2<f64>,
    total: u64,
}

impl SldaModel {
    pub fn new(class_count: usize, dim: usize) -> Self {
        SldaModel {
            dim,
            means: vec![vec![0.0; dim]; class_count],
            counts: vec![0; class_count],
            scatter: Array2::zeros((dim, dim)),
            total: 0,
        }
    }

    /// Test hook: a model with the given means and covariance, as if fitted
    /// on `count` samples per class.
    pub fn from_parts(means: Vec<Vec<f64>>, covariance: Array2<f64>, count_per_class: u64) -> Self {
        let dim = means[0].len();
        let classes = means.len();
        let total = count_per_class * classes as u64;
        SldaModel {
            dim,
            means,
            counts: vec![count_per_class; classes],
            scatter: covariance * total as f64,
            total,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class]
    }

    /// Shared covariance: identity before any update, pooled scatter over
    /// total count afterwards.
    pub fn covariance(&self) -> Array2<f64> {
        if self.total == 0 {
            Array2::eye(self.dim)
        } else {
            &self.scatter / self.total as f64
        }
    }

    pub fn update(&mut self, x: &[f32], y: usize) -> Result<()> {
        if y >= self.means.len() {
            return Err(PecError::InvalidConfig(format!(
                "label {y} out of range for {} classes",
                self.means.len()
            )));
        }
        if x.len() != self.dim {
            return Err(PecError::ShapeMismatch(format!(
                "sample has {} features, model expects {}",
                x.len(),
                self.dim
            )));
        }
        let n = self.counts[y] as f64;
        let weight = n / (n + 1.0);
        // rank-1 Welford update against the pre-update class mean
        let diff: Vec<f64> = x
            .iter()
            .zip(&self.means[y])
            .map(|(&v, &m)| v as f64 - m)
            .collect();
        {
            let s = self.scatter.as_slice_mut().unwrap();
            for (i, &di) in diff.iter().enumerate() {
                let row = &mut s[i * self.dim..(i + 1) * self.dim];
                let w = di * weight;
                for (rv, &dj) in row.iter_mut().zip(&diff) {
                    *rv += w * dj;
                }
            }
        }
        let inv = 1.0 / (n + 1.0);
        for (m, &d) in self.means[y].iter_mut().zip(&diff) {
            *m += d * inv;
        }
        self.counts[y] += 1;
        self.total += 1;
        Ok(())
    }

    /// Linear discriminant scores `x . w_c - 0.5 mu_c . w_c` with
    /// `w_c = [(1 - eps) Sigma + eps I]^-1 mu_c`. Classes without data score
    /// negative infinity.
    pub fn scores_batch(&self, samples: &Array2<f32>, eps: f64) -> Result<Array2<f64>> {
        if self.counts.iter().all(|&c| c == 0) {
            return Err(PecError::InvalidConfig("no class has any data yet".into()));
        }
        if samples.ncols() != self.dim {
            return Err(PecError::ShapeMismatch(format!(
                "samples have {} features, model expects {}",
                samples.ncols(),
                self.dim
            )));
        }
        let cov = self.covariance();
        let mut blend = DMatrix::<f64>::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut v = (1.0 - eps) * cov[[i, j]];
                if i == j {
                    v += eps;
                }
                blend[(i, j)] = v;
            }
        }
        let chol = Cholesky::new(blend).ok_or_else(|| {
            PecError::Numerical("shrinkage blend is not positive definite".into())
        })?;
        let classes = self.means.len();
        let mut weights = vec![None; classes];
        let mut biases = vec![0.0f64; classes];
        for c in 0..classes {
            if self.counts[c] == 0 {
                continue;
            }
            let mu = DVector::from_column_slice(&self.means[c]);
            let w = chol.solve(&mu);
            biases[c] = -0.5 * mu.dot(&w);
            weights[c] = Some(w);
        }
        let n = samples.nrows();
        let mut scores = Array2::<f64>::from_elem((n, classes), f64::NEG_INFINITY);
        for i in 0..n {
            let row = samples.row(i);
            let row = row.to_slice().unwrap();
            for c in 0..classes {
                if let Some(w) = &weights[c] {
                    let dot: f64 = row
                        .iter()
                        .zip(w.iter())
                        .map(|(&x, &wv)| x as f64 * wv)
                        .sum();
                    scores[[i, c]] = dot + biases[c];
                }
            }
        }
        Ok(scores)
    }

    pub fn predict_batch(&self, samples: &Array2<f32>, eps: f64) -> Result<Vec<usize>> {
        let scores = self.scores_batch(samples, eps)?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().unwrap()))
            .collect())
    }

    pub fn predict(&self, x: &[f32], eps: f64) -> Result<usize> {
        let samples = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
        Ok(self.predict_batch(&samples, eps)?[0])
    }
}
