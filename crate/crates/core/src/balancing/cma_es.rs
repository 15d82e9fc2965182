//! Covariance matrix adaptation evolution strategy, (mu/mu_w, lambda)
//! flavor with rank-1 and rank-mu covariance updates and cumulative
//! step-size adaptation.

use crate::error::{PecError, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Strategy knobs. The defaults mirror the balancing setup: tiny initial
/// step size, population 100, no weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    pub initial_std: f64,
    pub population: usize,
    /// Subtracted as `weight_decay * ||x||^2` from every fitness value.
    pub weight_decay: f64,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig {
            initial_std: 0.001,
            population: 100,
            weight_decay: 0.0,
            max_generations: 300,
            seed: 0,
        }
    }
}

/// Maximizes `fitness` starting from `x0`, returning the best candidate ever
/// evaluated and its fitness. Non-finite fitness values are treated as
/// negative infinity. Deterministic given the config seed.
pub fn cma_es_maximize<F>(fitness: F, x0: &[f64], cfg: &CmaConfig) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    if n == 0 {
        return Err(PecError::InvalidConfig("dimension must be positive".into()));
    }
    if cfg.population < 2 {
        return Err(PecError::InvalidConfig(
            "population must be at least 2".into(),
        ));
    }
    let lambda = cfg.population;
    let mu = lambda / 2;
    let mut weights: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let nf = n as f64;
    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1)
        .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = cfg.initial_std;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);
    let mut best_x = x0.to_vec();
    let mut best_f = f64::NEG_INFINITY;

    let eval = |x: &[f64]| -> f64 {
        let raw = fitness(x);
        let decayed = raw - cfg.weight_decay * x.iter().map(|v| v * v).sum::<f64>();
        if decayed.is_finite() {
            decayed
        } else {
            f64::NEG_INFINITY
        }
    };

    for gen in 0..cfg.max_generations {
        let eigen = SymmetricEigen::new(cov.clone());
        let d_sqrt: DVector<f64> = eigen.eigenvalues.map(|v| v.max(1e-30).sqrt());
        let b = &eigen.eigenvectors;

        // x_k = mean + sigma * B D z_k
        let zs: Vec<DVector<f64>> = (0..lambda)
            .map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let ys: Vec<DVector<f64>> = zs
            .iter()
            .map(|z| b * z.component_mul(&d_sqrt))
            .collect();
        let xs: Vec<Vec<f64>> = ys
            .iter()
            .map(|y| {
                (0..n)
                    .map(|i| mean[i] + sigma * y[i])
                    .collect::<Vec<f64>>()
            })
            .collect();
        let fs: Vec<f64> = xs.par_iter().map(|x| eval(x)).collect();

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fs[b].partial_cmp(&fs[a]).unwrap_or(std::cmp::Ordering::Equal));
        if fs[order[0]] > best_f {
            best_f = fs[order[0]];
            best_x = xs[order[0]].clone();
        }

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &idx) in weights.iter().zip(&order[..mu]) {
            y_w += &ys[idx] * *w;
        }
        mean += &y_w * sigma;

        // C^(-1/2) y_w through the eigenbasis
        let mut c_inv_sqrt_yw = b.transpose() * &y_w;
        for i in 0..n {
            c_inv_sqrt_yw[i] /= d_sqrt[i];
        }
        let c_inv_sqrt_yw = b * c_inv_sqrt_yw;
        p_sigma = &p_sigma * (1.0 - c_sigma)
            + &c_inv_sqrt_yw * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();

        let expected_decay = (1.0 - (1.0 - c_sigma).powi(2 * (gen as i32 + 1))).sqrt();
        let h_sigma = if p_sigma.norm() / expected_decay < (1.4 + 2.0 / (nf + 1.0)) * chi_n {
            1.0
        } else {
            0.0
        };
        p_c = &p_c * (1.0 - c_c) + &y_w * (h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &idx) in weights.iter().zip(&order[..mu]) {
            rank_mu += &ys[idx] * ys[idx].transpose() * *w;
        }
        let delta_h = (1.0 - h_sigma) * c_c * (2.0 - c_c);
        cov = &cov * (1.0 - c_1 - c_mu)
            + (&p_c * p_c.transpose() + &cov * delta_h) * c_1
            + rank_mu * c_mu;
        // keep symmetric against drift
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        sigma *= ((c_sigma / d_sigma) * (p_sigma.norm() / chi_n - 1.0)).exp();
        // flat-fitness rule: piecewise-constant objectives (accuracy) give
        // selection no signal at small steps, so grow sigma directly
        if fs[order[0]] == fs[order[lambda / 2]] {
            sigma *= (0.2 + c_sigma / d_sigma).exp();
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(PecError::Numerical(format!(
                "step size degenerated to {sigma}"
            )));
        }
    }
    Ok((best_x, best_f))
}
