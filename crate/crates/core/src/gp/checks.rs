//! Imitation-score experiments against the GP reference.
//!
//! The score `s_B(x*)` is the mean squared error, over `B` independent
//! teacher functions drawn from the GP prior, of a small network trained to
//! imitate each teacher on the training inputs and evaluated at `x*`. Two
//! empirical checks connect it to the posterior variance:
//!
//! 1. at large `B`, `s_B(x*)` should not undercut the posterior variance
//!    (up to estimation noise), and
//! 2. averaged over in-distribution `x*`, `s_1` should shrink as the
//!    training set grows.

use crate::derive_seed;
use crate::error::{PecError, Result};
use crate::gp::{sample_gp_function, GpModel, Kernel};
use crate::nn::{adam_step, init_network, lr_at, AdamState, InitScheme, LayerSpec, Network};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Training recipe for the imitator network: one hidden GELU layer trained
/// full-batch with Adam until the MSE target or the step cap. Linear lr
/// decay over the step cap takes the late-phase optimizer noise out, which
/// is what lets training actually reach the tight target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImitatorConfig {
    pub hidden_width: usize,
    pub lr: f64,
    pub decay: bool,
    pub max_steps: usize,
    pub target_mse: f64,
}

impl Default for ImitatorConfig {
    fn default() -> Self {
        ImitatorConfig {
            hidden_width: 256,
            lr: 0.01,
            decay: true,
            max_steps: 10_000,
            target_mse: 1e-6,
        }
    }
}

/// Squared imitation errors for `B` teacher draws at each evaluation point,
/// plus the achieved training MSE per draw.
#[derive(Debug, Clone)]
pub struct ImitationOutcome {
    /// `draws x eval_points`.
    pub errors: Array2<f64>,
    pub train_mses: Vec<f64>,
}

fn train_imitator(
    train_x: &[Vec<f64>],
    targets: &[f64],
    cfg: &ImitatorConfig,
    seed: u64,
) -> Result<(Network<f32>, f64)> {
    let dim = train_x[0].len();
    let specs = [
        LayerSpec::Dense {
            in_dim: dim,
            out_dim: cfg.hidden_width,
        },
        LayerSpec::Gelu,
        LayerSpec::Dense {
            in_dim: cfg.hidden_width,
            out_dim: 1,
        },
    ];
    let mut net: Network<f32> = init_network(&specs, &[dim], InitScheme::kaiming(seed))?;
    let mut adam = AdamState::for_network(&net);
    let n = train_x.len();
    let mut batch = ArrayD::<f32>::zeros(IxDyn(&[n, dim]));
    for (i, x) in train_x.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            batch[IxDyn(&[i, j])] = v as f32;
        }
    }
    let mut mse = f64::INFINITY;
    for step in 0..cfg.max_steps {
        let (out, cache) = net.forward(&batch)?;
        let mut grad = ArrayD::<f32>::zeros(out.raw_dim());
        let mut loss = 0.0f64;
        {
            let os = out.as_slice().unwrap();
            let gs = grad.as_slice_mut().unwrap();
            for i in 0..n {
                let diff = os[i] as f64 - targets[i];
                loss += diff * diff;
                gs[i] = (2.0 * diff / n as f64) as f32;
            }
        }
        mse = loss / n as f64;
        if mse < cfg.target_mse {
            break;
        }
        let (grads, _) = net.backward(&cache, &grad)?;
        let slices = Network::grad_slices(&grads);
        let lr = lr_at(cfg.lr, step, cfg.max_steps, cfg.decay)?;
        adam_step(&mut adam, &mut net.param_slices_mut(), &slices, lr)?;
    }
    if !mse.is_finite() {
        return Err(PecError::Numerical(
            "imitator training diverged to a non-finite loss".into(),
        ));
    }
    Ok((net, mse))
}

/// Runs `draws` independent teacher draws on `train_x` (jointly with
/// `eval_x`), trains one imitator per draw, and records squared errors at
/// every evaluation point. Deterministic given `seed`; draws run in
/// parallel.
pub fn imitation_errors(
    kernel: &Kernel,
    train_x: &[Vec<f64>],
    eval_x: &[Vec<f64>],
    draws: usize,
    cfg: &ImitatorConfig,
    seed: u64,
) -> Result<ImitationOutcome> {
    if draws == 0 {
        return Err(PecError::InvalidConfig("need at least one draw".into()));
    }
    if eval_x.is_empty() {
        return Err(PecError::InvalidConfig("need evaluation points".into()));
    }
    let joint: Vec<Vec<f64>> = train_x.iter().chain(eval_x.iter()).cloned().collect();
    let n_train = train_x.len();
    let per_draw: Vec<Result<(Vec<f64>, f64)>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let h = sample_gp_function(kernel, &joint, derive_seed(seed, 2 * i as u64))?;
            // empty training set: the imitator stays at its random
            // initialization and the training error is vacuously zero
            let (net, train_mse) = if n_train == 0 {
                let dim = eval_x[0].len();
                let specs = [
                    LayerSpec::Dense {
                        in_dim: dim,
                        out_dim: cfg.hidden_width,
                    },
                    LayerSpec::Gelu,
                    LayerSpec::Dense {
                        in_dim: cfg.hidden_width,
                        out_dim: 1,
                    },
                ];
                let net: Network<f32> = init_network(
                    &specs,
                    &[dim],
                    InitScheme::kaiming(derive_seed(seed, 2 * i as u64 + 1)),
                )?;
                (net, 0.0)
            } else {
                train_imitator(
                    train_x,
                    &h[..n_train],
                    cfg,
                    derive_seed(seed, 2 * i as u64 + 1),
                )?
            };
            let dim = eval_x[0].len();
            let mut batch = ArrayD::<f32>::zeros(IxDyn(&[eval_x.len(), dim]));
            for (r, x) in eval_x.iter().enumerate() {
                for (c, &v) in x.iter().enumerate() {
                    batch[IxDyn(&[r, c])] = v as f32;
                }
            }
            let out = net.infer(&batch)?;
            let os = out.as_slice().unwrap();
            let errors: Vec<f64> = (0..eval_x.len())
                .map(|j| {
                    let diff = os[j] as f64 - h[n_train + j];
                    diff * diff
                })
                .collect();
            Ok((errors, train_mse))
        })
        .collect();
    let mut errors = Array2::<f64>::zeros((draws, eval_x.len()));
    let mut train_mses = Vec::with_capacity(draws);
    for (i, item) in per_draw.into_iter().enumerate() {
        let (errs, mse) = item?;
        for (j, e) in errs.into_iter().enumerate() {
            errors[[i, j]] = e;
        }
        train_mses.push(mse);
    }
    Ok(ImitationOutcome { errors, train_mses })
}

/// `s_B` at a single point: the mean squared imitation error over `b`
/// teacher draws.
pub fn estimate_s_b(
    kernel: &Kernel,
    train_x: &[Vec<f64>],
    x_star: &[f64],
    b: usize,
    cfg: &ImitatorConfig,
    seed: u64,
) -> Result<f64> {
    let outcome = imitation_errors(kernel, train_x, &[x_star.to_vec()], b, cfg, seed)?;
    Ok(outcome.errors.column(0).sum() / b as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Point {
    pub x: Vec<f64>,
    pub s_b: f64,
    pub std_err: f64,
    pub posterior_var: f64,
    pub pass: bool,
}

/// Per-point comparison of `s_B` against the posterior variance.
#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub draws: usize,
    pub points: Vec<Prop1Point>,
    pub pass_fraction: f64,
}

/// Checks that large-`B` imitation scores do not undercut the posterior
/// variance: per point, `s_B >= var - 3 SE(s_B)`. The empty-inputs case
/// compares against the prior variance.
pub fn check_proposition1(
    kernel: &Kernel,
    train_x: &[Vec<f64>],
    test_points: &[Vec<f64>],
    draws: usize,
    cfg: &ImitatorConfig,
    seed: u64,
) -> Result<Prop1Report> {
    if draws < 64 {
        return Err(PecError::InvalidConfig(
            "the bound check needs at least 64 draws".into(),
        ));
    }
    let model = GpModel::new(*kernel, train_x.to_vec());
    let outcome = imitation_errors(kernel, train_x, test_points, draws, cfg, seed)?;
    let mut points = Vec::with_capacity(test_points.len());
    let mut passed = 0usize;
    for (j, x) in test_points.iter().enumerate() {
        let var = model.posterior_variance(x)?;
        let col = outcome.errors.column(j);
        let s_b = col.sum() / draws as f64;
        let var_est = col.iter().map(|e| (e - s_b) * (e - s_b)).sum::<f64>()
            / (draws as f64 - 1.0);
        let std_err = (var_est / draws as f64).sqrt();
        let pass = s_b >= var - 3.0 * std_err;
        passed += pass as usize;
        points.push(Prop1Point {
            x: x.clone(),
            s_b,
            std_err,
            posterior_var: var,
            pass,
        });
    }
    Ok(Prop1Report {
        draws,
        pass_fraction: passed as f64 / test_points.len().max(1) as f64,
        points,
    })
}

/// Data distribution for the concentration check.
#[derive(Debug, Clone)]
pub enum DataDist {
    Uniform1d { lo: f64, hi: f64 },
    Discrete { points: Vec<Vec<f64>> },
}

impl DataDist {
    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            DataDist::Uniform1d { lo, hi } => {
                (0..n).map(|_| vec![rng.gen_range(*lo..*hi)]).collect()
            }
            DataDist::Discrete { points } => (0..n)
                .map(|_| points[rng.gen_range(0..points.len())].clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Level {
    pub n: usize,
    pub mean_s1: f64,
    pub std_err: f64,
    pub mean_train_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Report {
    pub levels: Vec<Prop2Level>,
    /// Every successive level within three combined standard errors of a
    /// non-increase.
    pub non_increasing: bool,
}

/// Concentration trend: the in-distribution mean of `s_1` per training-set
/// size, which should fall (up to noise) as the sets grow.
pub fn check_proposition2(
    kernel: &Kernel,
    dist: &DataDist,
    ns: &[usize],
    eval_count: usize,
    repeats: usize,
    cfg: &ImitatorConfig,
    seed: u64,
) -> Result<Prop2Report> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PecError::InvalidConfig(
            "training-set sizes must increase".into(),
        ));
    }
    if repeats < 2 {
        return Err(PecError::InvalidConfig("need at least two repeats".into()));
    }
    let mut levels = Vec::with_capacity(ns.len());
    for (li, &n) in ns.iter().enumerate() {
        let per_rep: Vec<Result<(f64, f64)>> = (0..repeats)
            .into_par_iter()
            .map(|rep| {
                let base = derive_seed(seed, (li * 1000 + rep) as u64);
                let train = dist.sample(n, derive_seed(base, 1));
                let eval = dist.sample(eval_count, derive_seed(base, 2));
                let out = imitation_errors(kernel, &train, &eval, 1, cfg, derive_seed(base, 3))?;
                let mean = out.errors.row(0).sum() / eval_count as f64;
                Ok((mean, out.train_mses[0]))
            })
            .collect();
        let mut vals = Vec::with_capacity(repeats);
        let mut mses = Vec::with_capacity(repeats);
        for item in per_rep {
            let (v, m) = item?;
            vals.push(v);
            mses.push(m);
        }
        let mean = vals.iter().sum::<f64>() / repeats as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (repeats as f64 - 1.0);
        levels.push(Prop2Level {
            n,
            mean_s1: mean,
            std_err: (var / repeats as f64).sqrt(),
            mean_train_mse: mses.iter().sum::<f64>() / repeats as f64,
        });
    }
    let non_increasing = levels.windows(2).all(|w| {
        let margin = 3.0 * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
        w[1].mean_s1 <= w[0].mean_s1 + margin
    });
    Ok(Prop2Report {
        levels,
        non_increasing,
    })
}
