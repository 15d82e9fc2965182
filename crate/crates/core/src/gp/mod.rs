//! Exact Gaussian-process reference.
//!
//! Zero prior mean throughout. The posterior variance at `x*` given inputs
//! `X` is `k(x*,x*) - k(x*,X)^T k(X,X)^-1 k(X,x*)` — it depends on the
//! inputs only, never on targets, which is why the model stores no targets.
//! Classification picks the class whose inputs squeeze the variance hardest.

pub mod checks;

pub use checks::{
    check_proposition1, check_proposition2, estimate_s_b, imitation_errors, DataDist,
    ImitationOutcome, ImitatorConfig, Prop1Report, Prop2Report,
};

use crate::classifier::argmin;
use crate::error::{PecError, Result};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Diagonal jitter added to Gram matrices before factorization.
pub const GRAM_JITTER: f64 = 1e-10;

/// Covariance function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `amplitude * exp(-||a - b||^2 / (2 lengthscale^2))`; `k(x,x)` equals
    /// the amplitude.
    Rbf { lengthscale: f64, amplitude: f64 },
}

impl Kernel {
    pub fn rbf(lengthscale: f64, amplitude: f64) -> Result<Self> {
        if lengthscale <= 0.0 || amplitude <= 0.0 {
            return Err(PecError::InvalidConfig(
                "kernel lengthscale and amplitude must be positive".into(),
            ));
        }
        Ok(Kernel::Rbf {
            lengthscale,
            amplitude,
        })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf {
                lengthscale,
                amplitude,
            } => {
                let sq: f64 = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
                amplitude * (-sq / (2.0 * lengthscale * lengthscale)).exp()
            }
        }
    }

    fn gram(&self, points: &[Vec<f64>], jitter: f64) -> DMatrix<f64> {
        let n = points.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.eval(&points[i], &points[j]) + if i == j { jitter } else { 0.0 }
        })
    }
}

/// Kernel plus training inputs. No targets: the posterior variance ignores
/// them.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: Kernel,
    pub inputs: Vec<Vec<f64>>,
}

impl GpModel {
    pub fn new(kernel: Kernel, inputs: Vec<Vec<f64>>) -> Self {
        GpModel { kernel, inputs }
    }

    /// Noiseless posterior variance at `x`, clamped into `[0, k(x,x)]`
    /// against roundoff. Empty inputs give the prior variance.
    pub fn posterior_variance(&self, x: &[f64]) -> Result<f64> {
        let prior = self.kernel.eval(x, x);
        if self.inputs.is_empty() {
            return Ok(prior);
        }
        let gram = self.kernel.gram(&self.inputs, GRAM_JITTER);
        let chol = Cholesky::new(gram).ok_or_else(|| {
            PecError::Numerical(format!(
                "Gram matrix of {} inputs is not positive definite beyond jitter {GRAM_JITTER:e}",
                self.inputs.len()
            ))
        })?;
        let k_star = DVector::from_fn(self.inputs.len(), |i, _| {
            self.kernel.eval(&self.inputs[i], x)
        });
        let solved = chol.solve(&k_star);
        let var = prior - k_star.dot(&solved);
        Ok(var.clamp(0.0, prior))
    }
}

/// Argmin of the posterior variance across per-class models; ties go to the
/// lowest class index. All models must share a kernel.
pub fn gp_classify(models: &[GpModel], x: &[f64]) -> Result<usize> {
    if models.is_empty() {
        return Err(PecError::InvalidConfig("no class models".into()));
    }
    if models.iter().any(|m| m.kernel != models[0].kernel) {
        return Err(PecError::InvalidConfig(
            "classification needs a shared kernel".into(),
        ));
    }
    let vars = models
        .iter()
        .map(|m| m.posterior_variance(x))
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmin(&vars))
}

/// One joint draw of a zero-mean GP on `grid`, via the symmetric
/// eigendecomposition of the Gram matrix with negative eigenvalues clamped
/// to zero. The clamping handles degenerate grids (duplicate points come out
/// exactly equal) without distorting the covariance the way diagonal jitter
/// would.
pub fn sample_gp_function(kernel: &Kernel, grid: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let gram = kernel.gram(grid, 0.0);
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(PecError::Numerical("non-finite kernel values".into()));
    }
    let eigen = SymmetricEigen::new(gram);
    let scale: DVector<f64> = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(grid.len(), |_, _| StandardNormal.sample(&mut rng));
    let sample = &eigen.eigenvectors * z.component_mul(&scale);
    Ok(sample.iter().copied().collect())
}

#[cfg(test)]
mod tests;
