//! Nearest-mean classifier over raw features.

use crate::error::{PecError, Result};

/// Per-class running means, updated one sample at a time.
#[derive(Debug, Clone)]
pub struct NearestMeanModel {
    means: Vec<Vec<f64>>,
    counts: Vec<u64>,
    dim: usize,
}

impl NearestMeanModel {
    pub fn new(class_count: usize, dim: usize) -> Self {
        NearestMeanModel {
            means: vec![vec![0.0; dim]; class_count],
            counts: vec![0; class_count],
            dim,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class]
    }

    /// Exact streaming mean: `mu += (x - mu) / n`.
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
        self.counts[y] += 1;
        let inv = 1.0 / self.counts[y] as f64;
        for (m, &v) in self.means[y].iter_mut().zip(x) {
            *m += (v as f64 - *m) * inv;
        }
        Ok(())
    }

    /// Euclidean argmin over classes that have received data; ties go to the
    /// lowest class index.
    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        if self.counts.iter().all(|&c| c == 0) {
            return Err(PecError::InvalidConfig(
                "no class has any data yet".into(),
            ));
        }
        let mut best: Option<(f64, usize)> = None;
        for (c, mean) in self.means.iter().enumerate() {
            if self.counts[c] == 0 {
                continue;
            }
            let d: f64 = mean
                .iter()
                .zip(x)
                .map(|(&m, &v)| (v as f64 - m).powi(2))
                .sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        Ok(best.unwrap().1)
    }
}
