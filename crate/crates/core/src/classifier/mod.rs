//! The PEC classifier: one frozen random teacher, one trainable student per
//! class, scores from squared student-teacher output distances.
//!
//! Training consumes each class's samples independently (students never see
//! other classes), so task boundaries cannot cause interference: training
//! under any task split leaves every student bit-identical as long as the
//! per-class sample order is fixed. Scoring uses exactly one teacher forward
//! pass per input batch; students are evaluated batched, which is
//! arithmetically the per-sample evaluation applied to every row.

use crate::error::{PecError, Result};
use crate::nn::{
    adam_step, count_macs, count_params, init_network, lr_at, AdamState, InitKind, InitScheme,
    LayerSpec, Network,
};
use ndarray::{Array2, ArrayD, Axis, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Architecture family for teacher and students.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchFamily {
    /// `dense(w) -> layer norm -> GELU -> dense(d)`, flat inputs.
    Mlp,
    /// `conv3x3(w) -> instance norm -> ReLU -> pool(r) -> flatten -> dense(d)`.
    Conv,
}

/// Hyper-shape of a student/teacher pair. The teacher shares family, input
/// shape, and output dimension with the students; only the hidden width
/// differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PecArch {
    pub family: ArchFamily,
    pub input_shape: Vec<usize>,
    pub student_width: usize,
    pub teacher_width: usize,
    pub output_dim: usize,
    /// Spatial side after pooling; conv family only.
    pub pool_target: Option<usize>,
    /// Number of hidden blocks (width/norm/activation); 1 in every preset.
    pub depth: usize,
    pub init: InitKind,
}

impl PecArch {
    /// MNIST preset: MLP, w_g = 10, w_h = 5000, d = 99.
    pub fn mnist() -> Self {
        PecArch {
            family: ArchFamily::Mlp,
            input_shape: vec![784],
            student_width: 10,
            teacher_width: 5000,
            output_dim: 99,
            pool_target: None,
            depth: 1,
            init: InitKind::KaimingUniform,
        }
    }

    /// CIFAR-10 preset: conv, w_g = 60, w_h = 6000, d = 743, r = 5.
    pub fn cifar10() -> Self {
        PecArch {
            family: ArchFamily::Conv,
            input_shape: vec![3, 32, 32],
            student_width: 60,
            teacher_width: 6000,
            output_dim: 743,
            pool_target: Some(5),
            depth: 1,
            init: InitKind::KaimingUniform,
        }
    }

    /// CIFAR-100 preset: conv, w_g = 40, w_h = 4000, d = 172, r = 4.
    pub fn cifar100() -> Self {
        PecArch {
            family: ArchFamily::Conv,
            input_shape: vec![3, 32, 32],
            student_width: 40,
            teacher_width: 4000,
            output_dim: 172,
            pool_target: Some(4),
            depth: 1,
            init: InitKind::KaimingUniform,
        }
    }

    fn specs_for_width(&self, width: usize) -> Result<Vec<LayerSpec>> {
        if self.depth == 0 {
            return Err(PecError::InvalidConfig("depth must be at least 1".into()));
        }
        match self.family {
            ArchFamily::Mlp => {
                if self.input_shape.len() != 1 {
                    return Err(PecError::InvalidConfig(format!(
                        "MLP family needs a flat input shape, got {:?}",
                        self.input_shape
                    )));
                }
                let mut specs = Vec::new();
                let mut in_dim = self.input_shape[0];
                for _ in 0..self.depth {
                    specs.push(LayerSpec::Dense {
                        in_dim,
                        out_dim: width,
                    });
                    specs.push(LayerSpec::LayerNorm { dim: width });
                    specs.push(LayerSpec::Gelu);
                    in_dim = width;
                }
                specs.push(LayerSpec::Dense {
                    in_dim,
                    out_dim: self.output_dim,
                });
                Ok(specs)
            }
            ArchFamily::Conv => {
                if self.input_shape.len() != 3 {
                    return Err(PecError::InvalidConfig(format!(
                        "conv family needs a [C, H, W] input shape, got {:?}",
                        self.input_shape
                    )));
                }
                let r = self.pool_target.ok_or_else(|| {
                    PecError::InvalidConfig("conv family needs a pool target".into())
                })?;
                let mut specs = Vec::new();
                let mut channels = self.input_shape[0];
                for _ in 0..self.depth {
                    specs.push(LayerSpec::Conv3x3 {
                        in_channels: channels,
                        out_channels: width,
                    });
                    specs.push(LayerSpec::InstanceNorm { channels: width });
                    specs.push(LayerSpec::Relu);
                    channels = width;
                }
                specs.push(LayerSpec::AdaptiveAvgPool { target: r });
                specs.push(LayerSpec::Flatten);
                specs.push(LayerSpec::Dense {
                    in_dim: channels * r * r,
                    out_dim: self.output_dim,
                });
                Ok(specs)
            }
        }
    }

    pub fn student_specs(&self) -> Result<Vec<LayerSpec>> {
        self.specs_for_width(self.student_width)
    }

    pub fn teacher_specs(&self) -> Result<Vec<LayerSpec>> {
        self.specs_for_width(self.teacher_width)
    }
}

/// How much optimization each class receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainBudget {
    /// `None` means one pass: as many steps as the stream has batches.
    pub steps: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub decay: bool,
}

impl TrainBudget {
    pub fn single_pass(lr: f64, decay: bool) -> Self {
        TrainBudget {
            steps: None,
            batch_size: 1,
            lr,
            decay,
        }
    }
}

/// Teacher plus per-class students and their optimizer states.
pub struct PecClassifier {
    teacher: Network<f32>,
    students: Vec<Network<f32>>,
    adam: Vec<AdamState<f32>>,
    trained_steps: Vec<usize>,
    arch: PecArch,
}

impl PecClassifier {
    pub fn arch(&self) -> &PecArch {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.students.len()
    }

    pub fn trained_steps(&self) -> &[usize] {
        &self.trained_steps
    }

    pub fn student(&self, c: usize) -> &Network<f32> {
        &self.students[c]
    }

    pub fn teacher(&self) -> &Network<f32> {
        &self.teacher
    }

    pub fn student_param_hashes(&self) -> Vec<u64> {
        self.students.iter().map(Network::param_hash).collect()
    }

    /// Clones the teacher's parameters into student `c` (teacher and students
    /// must share shapes, i.e. equal widths). Test/diagnostic hook: a cloned
    /// student scores exactly zero everywhere.
    pub fn clone_teacher_into_student(&mut self, c: usize) -> Result<()> {
        let teacher_params: Vec<Vec<f32>> = self
            .teacher
            .param_slices()
            .iter()
            .map(|s| s.to_vec())
            .collect();
        let mut params = self.students[c].param_slices_mut();
        if params.len() != teacher_params.len()
            || params
                .iter()
                .zip(&teacher_params)
                .any(|(p, t)| p.len() != t.len())
        {
            return Err(PecError::ShapeMismatch(
                "teacher and student shapes differ; use equal widths".into(),
            ));
        }
        for (p, t) in params.iter_mut().zip(&teacher_params) {
            p.copy_from_slice(t);
        }
        Ok(())
    }

    /// Trainable parameters: students only. The frozen teacher is excluded —
    /// its parameters never change and are recoverable from the seed alone.
    pub fn param_count(&self) -> usize {
        self.students.iter().map(|s| count_params(s.specs())).sum()
    }

    /// MACs for scoring one input: every student plus one teacher pass.
    pub fn inference_macs(&self) -> Result<usize> {
        let mut total = count_macs(self.teacher.specs(), &self.arch.input_shape)?;
        for s in &self.students {
            total += count_macs(s.specs(), &self.arch.input_shape)?;
        }
        Ok(total)
    }
}

/// Builds the classifier: the teacher from `teacher_seed` (frozen), and all
/// `num_classes` students identical, from `student_seed`.
pub fn build_pec(
    arch: &PecArch,
    num_classes: usize,
    teacher_seed: u64,
    student_seed: u64,
) -> Result<PecClassifier> {
    if num_classes < 1 {
        return Err(PecError::InvalidConfig("need at least one class".into()));
    }
    let mut teacher: Network<f32> = init_network(
        &arch.teacher_specs()?,
        &arch.input_shape,
        InitScheme {
            kind: arch.init,
            seed: teacher_seed,
        },
    )?;
    teacher.trainable = false;
    let proto: Network<f32> = init_network(
        &arch.student_specs()?,
        &arch.input_shape,
        InitScheme {
            kind: arch.init,
            seed: student_seed,
        },
    )?;
    let students: Vec<Network<f32>> = (0..num_classes).map(|_| proto.clone()).collect();
    let adam = students.iter().map(AdamState::for_network).collect();
    Ok(PecClassifier {
        teacher,
        students,
        adam,
        trained_steps: vec![0; num_classes],
        arch: arch.clone(),
    })
}

/// Batched teacher outputs for a sample block.
pub fn teacher_targets(clf: &PecClassifier, samples: &ArrayD<f32>) -> Result<Array2<f32>> {
    batched_infer(&clf.teacher, samples)
}

fn batched_infer(net: &Network<f32>, samples: &ArrayD<f32>) -> Result<Array2<f32>> {
    let n = samples.shape()[0];
    let per_sample: usize = samples.shape()[1..].iter().product();
    // chunk so the widest activation block stays around tens of megabytes
    let widest = net
        .specs()
        .iter()
        .map(|s| match *s {
            LayerSpec::Dense { out_dim, .. } => out_dim,
            LayerSpec::Conv3x3 { out_channels, .. } => out_channels * per_sample,
            _ => 0,
        })
        .max()
        .unwrap_or(1)
        .max(per_sample);
    let chunk = (8 * 1024 * 1024 / widest.max(1)).clamp(1, 1024);
    let out_dim = net.output_shape()?.iter().product();
    let mut out = Array2::<f32>::zeros((n, out_dim));
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let part = samples.slice_axis(Axis(0), ndarray::Slice::from(start..end));
        let res = net.infer(&part.to_owned())?;
        let res2 = res
            .into_shape_with_order((end - start, out_dim))
            .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
        out.slice_axis_mut(Axis(0), ndarray::Slice::from(start..end))
            .assign(&res2);
        start = end;
    }
    Ok(out)
}

fn train_student(
    teacher: &Network<f32>,
    student: &mut Network<f32>,
    adam: &mut AdamState<f32>,
    samples: &ArrayD<f32>,
    budget: &TrainBudget,
) -> Result<Vec<f64>> {
    let n = samples.shape()[0];
    let bs = budget.batch_size.max(1);
    let total_steps = budget.steps.unwrap_or_else(|| n.div_ceil(bs));
    let targets = batched_infer(teacher, samples)?;
    let d = targets.ncols();
    let mut losses = Vec::with_capacity(total_steps);
    let mut cursor = 0usize;
    for step in 0..total_steps {
        let take = bs.min(n - cursor);
        let batch = samples
            .slice_axis(Axis(0), ndarray::Slice::from(cursor..cursor + take))
            .to_owned();
        let (out, cache) = student.forward(&batch)?;
        let out2 = out
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
        // grad of mean over the batch of ||g - h||^2 w.r.t. g: 2 (g - h) / take
        let mut grad = Array2::<f32>::zeros((take, d));
        let mut loss = 0.0f64;
        let scale = 2.0 / take as f32;
        for i in 0..take {
            let trow = targets.row(cursor + i);
            let orow = out2.row(i);
            let mut grow = grad.row_mut(i);
            for j in 0..d {
                let diff = orow[j] - trow[j];
                loss += (diff as f64) * (diff as f64);
                grow[j] = scale * diff;
            }
        }
        loss /= take as f64;
        losses.push(loss);
        let (grads, _) = student.backward(&cache, &grad.into_dyn())?;
        let lr = lr_at(budget.lr, step, total_steps, budget.decay)?;
        let grad_slices = Network::grad_slices(&grads);
        adam_step(adam, &mut student.param_slices_mut(), &grad_slices, lr)?;
        cursor += take;
        if cursor >= n {
            cursor = 0;
        }
    }
    Ok(losses)
}

fn validate_job(
    clf: &PecClassifier,
    c: usize,
    samples: &ArrayD<f32>,
    labels: &[usize],
    budget: &TrainBudget,
) -> Result<()> {
    if c >= clf.students.len() {
        return Err(PecError::InvalidConfig(format!(
            "class {c} out of range for {} students",
            clf.students.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l != c) {
        return Err(PecError::InvalidConfig(format!(
            "stream for class {c} contains label {bad}"
        )));
    }
    let n = samples.shape()[0];
    if n != labels.len() {
        return Err(PecError::ShapeMismatch(format!(
            "{n} samples with {} labels",
            labels.len()
        )));
    }
    let bs = budget.batch_size.max(1);
    let total_steps = budget.steps.unwrap_or_else(|| n.div_ceil(bs));
    if total_steps > 0 && n == 0 {
        return Err(PecError::InvalidConfig(format!(
            "empty stream for class {c} with a {total_steps}-step budget"
        )));
    }
    Ok(())
}

/// Trains student `c` on a stream of samples of class `c` (one row per
/// sample, stream order = training order).
///
/// Loss per step is the mean over the batch of the squared L2 distance
/// between student and teacher outputs. The learning rate follows the linear
/// schedule over this class's own step budget. Only student `c` and its
/// optimizer state change. Returns the per-step loss curve.
pub fn train_class(
    clf: &mut PecClassifier,
    c: usize,
    samples: &ArrayD<f32>,
    labels: &[usize],
    budget: &TrainBudget,
) -> Result<Vec<f64>> {
    validate_job(clf, c, samples, labels, budget)?;
    let losses = train_student(
        &clf.teacher,
        &mut clf.students[c],
        &mut clf.adam[c],
        samples,
        budget,
    )?;
    clf.trained_steps[c] += losses.len();
    Ok(losses)
}

/// One per-class training workload for [`train_classes`].
pub struct ClassTrainJob {
    pub class: usize,
    pub samples: ArrayD<f32>,
    pub labels: Vec<usize>,
    pub budget: TrainBudget,
}

/// Trains several students in parallel. Students are independent (the
/// shared teacher is read-only), so this is bitwise identical to running
/// [`train_class`] per job in any order.
pub fn train_classes(clf: &mut PecClassifier, jobs: &[ClassTrainJob]) -> Result<()> {
    {
        let mut seen = vec![false; clf.students.len()];
        for job in jobs {
            validate_job(clf, job.class, &job.samples, &job.labels, &job.budget)?;
            if seen[job.class] {
                return Err(PecError::InvalidConfig(format!(
                    "class {} appears in two jobs",
                    job.class
                )));
            }
            seen[job.class] = true;
        }
    }
    let teacher = &clf.teacher;
    let mut slots: Vec<(usize, &mut Network<f32>, &mut AdamState<f32>)> = clf
        .students
        .iter_mut()
        .zip(clf.adam.iter_mut())
        .enumerate()
        .filter(|(c, _)| jobs.iter().any(|j| j.class == *c))
        .map(|(c, (s, a))| (c, s, a))
        .collect();
    let steps: Vec<(usize, usize)> = slots
        .par_iter_mut()
        .map(|(c, student, adam)| {
            let job = jobs.iter().find(|j| j.class == *c).unwrap();
            let losses = train_student(teacher, student, adam, &job.samples, &job.budget)?;
            Ok((*c, losses.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, n) in steps {
        clf.trained_steps[c] += n;
    }
    Ok(())
}

/// Squared student-teacher distances for a batch: row per input, column per
/// class. One teacher pass for the whole batch.
pub fn pec_scores_batch(clf: &PecClassifier, samples: &ArrayD<f32>) -> Result<Array2<f64>> {
    let teacher_out = batched_infer(&clf.teacher, samples)?;
    let n = teacher_out.nrows();
    let mut scores = Array2::<f64>::zeros((n, clf.students.len()));
    for (c, student) in clf.students.iter().enumerate() {
        let student_out = batched_infer(student, samples)?;
        for i in 0..n {
            let mut acc = 0.0f64;
            let srow = student_out.row(i);
            let trow = teacher_out.row(i);
            for (s, t) in srow.iter().zip(trow.iter()) {
                let diff = (*s - *t) as f64;
                acc += diff * diff;
            }
            scores[[i, c]] = acc;
        }
    }
    Ok(scores)
}

/// Scores for a single input (row vector of one).
pub fn pec_scores(clf: &PecClassifier, x: &ArrayD<f32>) -> Result<Vec<f64>> {
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let batch = x
        .view()
        .into_shape_with_order(IxDyn(&shape))
        .map_err(|e| PecError::ShapeMismatch(e.to_string()))?
        .to_owned();
    let scores = pec_scores_batch(clf, &batch)?;
    Ok(scores.row(0).to_vec())
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class: argmin of the scores.
pub fn pec_predict(clf: &PecClassifier, x: &ArrayD<f32>) -> Result<usize> {
    Ok(argmin(&pec_scores(clf, x)?))
}

/// Batched prediction.
pub fn pec_predict_batch(clf: &PecClassifier, samples: &ArrayD<f32>) -> Result<Vec<usize>> {
    let scores = pec_scores_batch(clf, samples)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| argmin(row.as_slice().unwrap()))
        .collect())
}
