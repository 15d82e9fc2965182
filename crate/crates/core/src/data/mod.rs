//! Datasets, task splits, and imbalance transforms.
//!
//! Samples are stored flat (`N x feature_len`) with the per-sample logical
//! shape carried alongside, so dense and convolutional models share one
//! container. Pixel features are scaled to `[0, 1]`; there is no mean/std
//! standardization anywhere.

mod cifar;
mod mnist;

pub use cifar::load_cifar10;
pub use mnist::load_mnist;

use crate::derive_seed;
use crate::error::{PecError, Result};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A labeled sample set.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `N x feature_len`, one row per sample.
    pub samples: Array2<f32>,
    /// Logical per-sample shape: `[784]` for flat MNIST, `[3, 32, 32]` CHW.
    pub input_shape: Vec<usize>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(
        samples: Array2<f32>,
        input_shape: Vec<usize>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let feature_len: usize = input_shape.iter().product();
        if samples.ncols() != feature_len {
            return Err(PecError::ShapeMismatch(format!(
                "{} columns for shape {:?}",
                samples.ncols(),
                input_shape
            )));
        }
        if samples.nrows() != labels.len() {
            return Err(PecError::ShapeMismatch(format!(
                "{} rows for {} labels",
                samples.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(PecError::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset {
            samples,
            input_shape,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices of every sample of class `c`, in storage order.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Materializes the given rows as a batch shaped `[n, input_shape...]`.
    pub fn gather(&self, indices: &[usize]) -> (ArrayD<f32>, Vec<usize>) {
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.input_shape);
        let cols = self.samples.ncols();
        let mut out = ArrayD::<f32>::zeros(IxDyn(&shape));
        {
            let flat = out.as_slice_mut().unwrap();
            for (row, &idx) in indices.iter().enumerate() {
                let src = self.samples.row(idx);
                flat[row * cols..(row + 1) * cols].copy_from_slice(src.to_slice().unwrap());
            }
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (out, labels)
    }

    /// The whole dataset as one batch.
    pub fn all(&self) -> (ArrayD<f32>, Vec<usize>) {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.gather(&indices)
    }
}

/// One task: a disjoint class subset plus its mixed training sample order
/// (what a discriminative learner streams).
#[derive(Debug, Clone)]
pub struct Task {
    pub classes: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Ordered tasks over pairwise-disjoint class subsets covering all classes.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
}

/// Per-class sample order used by per-class learners. Depends only on
/// `(data_seed, class)` — never on the task split — which is what makes
/// task-split invariance exact.
pub fn class_stream(ds: &Dataset, class: usize, data_seed: u64) -> Vec<usize> {
    let mut indices = ds.class_indices(class);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(data_seed, class as u64));
    indices.shuffle(&mut rng);
    indices
}

/// Splits `ds` into `tasks_count` tasks of `classes_per_task` classes each,
/// taking classes in `order` (default: natural `0..class_count`).
pub fn split_tasks(
    ds: &Dataset,
    tasks_count: usize,
    classes_per_task: usize,
    order: Option<&[usize]>,
    data_seed: u64,
) -> Result<TaskStream> {
    if tasks_count * classes_per_task != ds.class_count {
        return Err(PecError::InvalidConfig(format!(
            "{tasks_count} tasks x {classes_per_task} classes != {} classes",
            ds.class_count
        )));
    }
    let natural: Vec<usize> = (0..ds.class_count).collect();
    let order = order.unwrap_or(&natural);
    {
        if order.len() != ds.class_count {
            return Err(PecError::InvalidConfig(
                "class order must cover every class".into(),
            ));
        }
        let mut seen = vec![false; ds.class_count];
        for &c in order {
            if c >= ds.class_count || seen[c] {
                return Err(PecError::InvalidConfig(format!(
                    "class order {order:?} is not a permutation"
                )));
            }
            seen[c] = true;
        }
    }
    let mut tasks = Vec::with_capacity(tasks_count);
    for t in 0..tasks_count {
        let classes: Vec<usize> =
            order[t * classes_per_task..(t + 1) * classes_per_task].to_vec();
        let mut indices: Vec<usize> = Vec::new();
        for &c in &classes {
            indices.extend(ds.class_indices(c));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(data_seed, 1_000_000 + t as u64));
        indices.shuffle(&mut rng);
        tasks.push(Task { classes, indices });
    }
    Ok(TaskStream { tasks })
}

/// Imbalance transform: duplicates every sample of `doubled` once (appended
/// in original order, bit-identical) and keeps a random half of `halved`.
/// Apply to training data only; the test set stays untouched.
pub fn make_imbalanced(ds: &Dataset, doubled: usize, halved: usize, seed: u64) -> Result<Dataset> {
    if doubled >= ds.class_count || halved >= ds.class_count {
        return Err(PecError::InvalidConfig(format!(
            "classes {doubled}/{halved} out of range for {}",
            ds.class_count
        )));
    }
    if doubled == halved {
        return Err(PecError::InvalidConfig(
            "doubled and halved classes must differ".into(),
        ));
    }
    let halved_indices = ds.class_indices(halved);
    let keep_count = halved_indices.len() / 2;
    let mut shuffled = halved_indices.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xba1a));
    shuffled.shuffle(&mut rng);
    let kept: std::collections::HashSet<usize> = shuffled.into_iter().take(keep_count).collect();

    let mut rows: Vec<usize> = Vec::new();
    for i in 0..ds.len() {
        if ds.labels[i] == halved && !kept.contains(&i) {
            continue;
        }
        rows.push(i);
    }
    rows.extend(ds.class_indices(doubled));

    let (samples, labels) = ds.gather(&rows);
    let flat = samples
        .into_shape_with_order((rows.len(), ds.samples.ncols()))
        .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
    Dataset::new(flat, ds.input_shape.clone(), labels, ds.class_count)
}

/// Synthetic Gaussian classes: unit-covariance blobs whose means are drawn
/// from the seed and rescaled so the minimum pairwise distance equals
/// `mean_scale`. Each split holds exactly `n_per_class` samples per class.
/// Also returns the true means for oracle checks.
pub fn synthetic_gaussians(
    class_count: usize,
    dim: usize,
    mean_scale: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset, Array2<f64>)> {
    if class_count < 2 {
        return Err(PecError::InvalidConfig("need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x9a55));
    let mut means = Array2::<f64>::zeros((class_count, dim));
    for v in means.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    let mut min_dist = f64::INFINITY;
    for a in 0..class_count {
        for b in (a + 1)..class_count {
            let d: f64 = (0..dim)
                .map(|j| (means[[a, j]] - means[[b, j]]).powi(2))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if min_dist <= 0.0 {
        return Err(PecError::Numerical("coincident class means".into()));
    }
    means.mapv_inplace(|v| v * mean_scale / min_dist);

    let make_split = |split_seed: u64| -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
        let n = class_count * n_per_class;
        let mut samples = Array2::<f32>::zeros((n, dim));
        let mut labels = Vec::with_capacity(n);
        for c in 0..class_count {
            for i in 0..n_per_class {
                let row = c * n_per_class + i;
                for j in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    samples[[row, j]] = (means[[c, j]] + z) as f32;
                }
                labels.push(c);
            }
        }
        Dataset::new(samples, vec![dim], labels, class_count)
    };
    let train = make_split(derive_seed(seed, 1))?;
    let test = make_split(derive_seed(seed, 2))?;
    Ok((train, test, means))
}

/// Nearest-true-mean oracle; the Bayes-optimal rule for unit-covariance
/// equal-prior Gaussians.
pub fn nearest_true_mean_accuracy(ds: &Dataset, means: &Array2<f64>) -> f64 {
    let mut correct = 0usize;
    for i in 0..ds.len() {
        let row = ds.samples.row(i);
        let mut best = (f64::INFINITY, 0usize);
        for c in 0..means.nrows() {
            let d: f64 = row
                .iter()
                .zip(means.row(c))
                .map(|(&x, &m)| (x as f64 - m).powi(2))
                .sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        if best.1 == ds.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / ds.len() as f64
}
