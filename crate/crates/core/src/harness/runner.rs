//! The class-incremental protocol runner.
//!
//! Seed policy: teacher = seed, students = seed + 1, data order = seed + 2,
//! replay/balancing buffer = seed + 3, balancing search = seed + 4.

use crate::balancing::{apply_scalars, fit_scalars, CmaConfig};
use crate::baselines::{DiscMode, DiscriminativeModel, NearestMeanModel, ReplayBuffer, SldaModel};
use crate::classifier::{
    argmin, build_pec, pec_scores_batch, train_classes, ClassTrainJob, PecArch, TrainBudget,
};
use crate::data::{
    class_stream, load_cifar10, load_mnist, make_imbalanced, split_tasks, synthetic_gaussians,
    Dataset, TaskStream,
};
use crate::error::{PecError, Result};
use crate::gp::{
    check_proposition1, check_proposition2, DataDist, ImitatorConfig, Kernel,
};
use crate::harness::config::{
    BalancingMode, BudgetMode, DatasetChoice, ExperimentConfig, Method,
};
use crate::harness::report::{final_average_accuracy, RunReport, SweepReport};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Resolves the dataset root: the explicit directory, `PEC_DATA_DIR`, or the
/// nearest ancestor `data/` directory.
pub fn locate_data_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(dir) = explicit {
        return Ok(dir.to_path_buf());
    }
    if let Ok(dir) = std::env::var("PEC_DATA_DIR") {
        return Ok(PathBuf::from(dir));
    }
    let mut cur = std::env::current_dir()?;
    loop {
        let candidate = cur.join("data");
        if candidate.is_dir() {
            return Ok(candidate);
        }
        if !cur.pop() {
            return Err(PecError::InvalidConfig(
                "no data directory found; pass --data-dir or set PEC_DATA_DIR".into(),
            ));
        }
    }
}

fn load(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetChoice::Mnist => {
            let root = locate_data_dir(cfg.data_dir.as_deref())?;
            load_mnist(&root.join("mnist"))
        }
        DatasetChoice::Cifar10 => {
            let root = locate_data_dir(cfg.data_dir.as_deref())?;
            load_cifar10(&root.join("cifar-10-batches-bin"))
        }
        DatasetChoice::Synthetic => {
            let s = cfg.synthetic;
            let (train, test, _) =
                synthetic_gaussians(s.classes, s.dim, s.mean_scale, s.n_per_class, cfg.seed)?;
            Ok((train, test))
        }
    }
}

fn pec_arch(cfg: &ExperimentConfig) -> PecArch {
    let mut arch = match cfg.dataset {
        DatasetChoice::Mnist => PecArch::mnist(),
        DatasetChoice::Cifar10 => PecArch::cifar10(),
        DatasetChoice::Synthetic => {
            let mut a = PecArch::mnist();
            a.input_shape = vec![cfg.synthetic.dim];
            a.student_width = 16;
            a.teacher_width = 256;
            a.output_dim = 32;
            a
        }
    };
    let o = &cfg.arch;
    if let Some(w) = o.student_width {
        arch.student_width = w;
    }
    if let Some(w) = o.teacher_width {
        arch.teacher_width = w;
    }
    if let Some(d) = o.output_dim {
        arch.output_dim = d;
    }
    if let Some(r) = o.pool_target {
        arch.pool_target = Some(r);
    }
    if let Some(d) = o.depth {
        arch.depth = d;
    }
    if let Some(init) = o.init {
        arch.init = init;
    }
    arch
}

struct Evaluation {
    preds: Vec<usize>,
    param_count: usize,
    mac_count: usize,
    trained_steps: Vec<usize>,
}

fn run_pec(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    stream: &TaskStream,
) -> Result<Evaluation> {
    let arch = pec_arch(cfg);
    let mut clf = build_pec(&arch, train.class_count, cfg.seed, cfg.seed.wrapping_add(1))?;
    let data_seed = cfg.seed.wrapping_add(2);
    let per_class_budget: Option<Vec<usize>> = match cfg.budget {
        BudgetMode::SinglePass => None,
        BudgetMode::Steps(s) => Some(vec![s; train.class_count]),
        BudgetMode::EqualBudgets => Some(crate::balancing::equal_budget_schedule(
            &train.per_class_counts(),
            true,
            None,
        )?),
    };
    let mut balancing_buffer = (cfg.balancing == BalancingMode::Buffer).then(|| {
        ReplayBuffer::new(cfg.buffer_capacity, cfg.seed.wrapping_add(3))
    });
    for task in &stream.tasks {
        let mut jobs = Vec::with_capacity(task.classes.len());
        for &c in &task.classes {
            let indices = class_stream(train, c, data_seed);
            let (samples, labels) = train.gather(&indices);
            if let Some(buffer) = balancing_buffer.as_mut() {
                for (&idx, &label) in indices.iter().zip(&labels) {
                    buffer.insert(train.samples.row(idx).to_slice().unwrap(), label);
                }
            }
            jobs.push(ClassTrainJob {
                class: c,
                samples,
                labels,
                budget: TrainBudget {
                    steps: per_class_budget.as_ref().map(|b| b[c]),
                    batch_size: cfg.resolved_batch_size(),
                    lr: cfg.resolved_lr(),
                    decay: cfg.resolved_decay(),
                },
            });
        }
        train_classes(&mut clf, &jobs)?;
    }

    let (test_batch, test_labels) = test.all();
    let scores = pec_scores_batch(&clf, &test_batch)?;
    let preds = match cfg.balancing {
        BalancingMode::None => scores
            .rows()
            .into_iter()
            .map(|r| argmin(r.as_slice().unwrap()))
            .collect(),
        BalancingMode::Oracle | BalancingMode::Buffer => {
            let cma = CmaConfig {
                max_generations: cfg.cma_generations,
                seed: cfg.seed.wrapping_add(4),
                ..CmaConfig::default()
            };
            let scalars = match cfg.balancing {
                BalancingMode::Oracle => fit_scalars(&scores, &test_labels, &cma)?,
                _ => {
                    let buffer = balancing_buffer.as_ref().unwrap();
                    let n = buffer.len();
                    let dim = train.samples.ncols();
                    let mut samples = Array2::<f32>::zeros((n, dim));
                    let mut labels = Vec::with_capacity(n);
                    for (i, (x, y)) in buffer.items().iter().enumerate() {
                        for (j, &v) in x.iter().enumerate() {
                            samples[[i, j]] = v;
                        }
                        labels.push(*y);
                    }
                    let mut shape = vec![n];
                    shape.extend_from_slice(&train.input_shape);
                    let batch = samples
                        .into_shape_with_order(ndarray::IxDyn(&shape))
                        .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
                    let buffer_scores = pec_scores_batch(&clf, &batch)?;
                    fit_scalars(&buffer_scores, &labels, &cma)?
                }
            };
            scores
                .rows()
                .into_iter()
                .map(|r| {
                    let rescaled = apply_scalars(r.as_slice().unwrap(), &scalars)?;
                    Ok(argmin(&rescaled))
                })
                .collect::<Result<Vec<usize>>>()?
        }
    };
    Ok(Evaluation {
        preds,
        param_count: clf.param_count(),
        mac_count: clf.inference_macs()?,
        trained_steps: clf.trained_steps().to_vec(),
    })
}

fn run_mean_or_slda(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    stream: &TaskStream,
) -> Result<Evaluation> {
    let dim = train.samples.ncols();
    let mut counts = vec![0usize; train.class_count];
    let preds;
    let param_count;
    let mac_count;
    match cfg.method {
        Method::NearestMean => {
            let mut model = NearestMeanModel::new(train.class_count, dim);
            for task in &stream.tasks {
                for &idx in &task.indices {
                    model.update(train.samples.row(idx).to_slice().unwrap(), train.labels[idx])?;
                    counts[train.labels[idx]] += 1;
                }
            }
            preds = (0..test.len())
                .map(|i| model.predict(test.samples.row(i).to_slice().unwrap()))
                .collect::<Result<Vec<usize>>>()?;
            param_count = train.class_count * dim;
            mac_count = train.class_count * dim;
        }
        Method::Slda => {
            let mut model = SldaModel::new(train.class_count, dim);
            for task in &stream.tasks {
                for &idx in &task.indices {
                    model.update(train.samples.row(idx).to_slice().unwrap(), train.labels[idx])?;
                    counts[train.labels[idx]] += 1;
                }
            }
            preds = model.predict_batch(&test.samples, cfg.resolved_slda_epsilon())?;
            // class means plus the shared covariance
            param_count = train.class_count * dim + dim * dim;
            mac_count = train.class_count * dim;
        }
        _ => unreachable!(),
    }
    Ok(Evaluation {
        preds,
        param_count,
        mac_count,
        trained_steps: counts,
    })
}

fn run_discriminative(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    stream: &TaskStream,
) -> Result<Evaluation> {
    let mode = match cfg.method {
        Method::Finetune => DiscMode::Finetune,
        Method::Er => DiscMode::Er,
        Method::LabelsTrick => DiscMode::LabelsTrick,
        _ => unreachable!(),
    };
    let dim = train.samples.ncols();
    let mut model = DiscriminativeModel::new(dim, &[100, 100], train.class_count, mode, cfg.seed)?;
    let mut buffer = (mode == DiscMode::Er)
        .then(|| ReplayBuffer::new(cfg.buffer_capacity, cfg.seed.wrapping_add(3)));
    let bs = cfg.resolved_batch_size();
    let lr0 = cfg.resolved_lr();
    let decay = cfg.resolved_decay();
    let mut counts = vec![0usize; train.class_count];
    for task in &stream.tasks {
        // the decay schedule restarts every task, like per-task schedulers
        // in the usual continual-learning loops
        let task_steps = task.indices.len().div_ceil(bs);
        for (step, chunk) in task.indices.chunks(bs).enumerate() {
            let mut batch = Array2::<f32>::zeros((chunk.len(), dim));
            let mut labels = Vec::with_capacity(chunk.len());
            for (i, &idx) in chunk.iter().enumerate() {
                batch.row_mut(i).assign(&train.samples.row(idx));
                labels.push(train.labels[idx]);
                counts[train.labels[idx]] += 1;
            }
            let lr = crate::nn::lr_at(lr0, step, task_steps, decay)?;
            model.train_step(&batch, &labels, buffer.as_mut(), &task.classes, lr)?;
        }
    }
    let (test_batch, _) = test.all();
    let preds = model.predict_batch(&test_batch)?;
    Ok(Evaluation {
        preds,
        param_count: model.param_count(),
        mac_count: model.inference_macs()?,
        trained_steps: counts,
    })
}

/// Runs one experiment end to end and reports the final accuracy over the
/// whole test set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let (mut train, test) = load(cfg)?;
    if let Some(imb) = cfg.imbalance {
        train = make_imbalanced(&train, imb.doubled, imb.halved, cfg.seed.wrapping_add(2))?;
    }
    let (tasks, classes_per_task) = cfg.split;
    let stream = split_tasks(
        &train,
        tasks,
        classes_per_task,
        cfg.class_order.as_deref(),
        cfg.seed.wrapping_add(2),
    )?;
    let eval = match cfg.method {
        Method::Pec => run_pec(cfg, &train, &test, &stream)?,
        Method::NearestMean | Method::Slda => run_mean_or_slda(cfg, &train, &test, &stream)?,
        Method::Finetune | Method::Er | Method::LabelsTrick => {
            run_discriminative(cfg, &train, &test, &stream)?
        }
    };
    let accuracy = final_average_accuracy(&eval.preds, &test.labels)?;
    let mut per_class_correct = vec![0usize; test.class_count];
    let mut per_class_total = vec![0usize; test.class_count];
    for (p, &l) in eval.preds.iter().zip(&test.labels) {
        per_class_total[l] += 1;
        if *p == l {
            per_class_correct[l] += 1;
        }
    }
    let per_class_accuracy: Vec<f64> = per_class_correct
        .iter()
        .zip(&per_class_total)
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect();
    let per_task_accuracy: Vec<f64> = stream
        .tasks
        .iter()
        .map(|task| {
            let (mut correct, mut total) = (0usize, 0usize);
            for (p, &l) in eval.preds.iter().zip(&test.labels) {
                if task.classes.contains(&l) {
                    total += 1;
                    correct += (*p == l) as usize;
                }
            }
            if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            }
        })
        .collect();
    Ok(RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        accuracy,
        per_class_accuracy,
        per_task_accuracy,
        trained_steps_per_class: eval.trained_steps,
        param_count: eval.param_count,
        mac_count: eval.mac_count,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Runs the experiment once per seed and aggregates mean and standard error.
pub fn run_seed_sweep(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(PecError::InvalidConfig("need at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        runs.push(run_experiment(&c)?);
    }
    SweepReport::from_runs(runs)
}

/// Default desk-scale setups for the two theory checks, emitted as JSON.
pub fn run_gp_check(proposition: usize, seed: u64) -> Result<serde_json::Value> {
    let kernel = Kernel::rbf(1.0, 1.0)?;
    let cfg = ImitatorConfig::default();
    match proposition {
        1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
            let test: Vec<Vec<f64>> = (0..100)
                .map(|i| vec![-3.5 + 7.0 * i as f64 / 99.0])
                .collect();
            let report = check_proposition1(&kernel, &train, &test, 64, &cfg, seed)?;
            serde_json::to_value(&report).map_err(|e| PecError::InvalidConfig(e.to_string()))
        }
        2 => {
            let dist = DataDist::Uniform1d { lo: -3.0, hi: 3.0 };
            let report =
                check_proposition2(&kernel, &dist, &[10, 100, 1000], 200, 4, &cfg, seed)?;
            serde_json::to_value(&report).map_err(|e| PecError::InvalidConfig(e.to_string()))
        }
        other => Err(PecError::InvalidConfig(format!(
            "unknown proposition {other} (use 1 or 2)"
        ))),
    }
}
