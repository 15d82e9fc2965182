//! Central-difference gradient oracle.
//!
//! Checks hand-written backprop against `(L(p+h) - L(p-h)) / 2h` for the
//! scalar loss `L = sum(output * probe)` with a fixed random probe. The probe
//! makes the loss linear in the output, so the analytic side is exactly one
//! `backward` call with the probe as the output gradient. Run this on the
//! `f64` instantiation; f32 rounding swamps the h=1e-4 quotient.

use crate::error::Result;
use crate::nn::{LayerCache, Network};
use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probe_for(net: &Network<f64>, batch: &ArrayD<f64>, seed: u64) -> Result<ArrayD<f64>> {
    let out = net.infer(batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(out.mapv(|_| rng.gen_range(-1.0..=1.0)))
}

fn loss(net: &Network<f64>, batch: &ArrayD<f64>, probe: &ArrayD<f64>) -> Result<f64> {
    let out = net.infer(batch)?;
    Ok(out.iter().zip(probe.iter()).map(|(&o, &p)| o * p).sum())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Maximum relative error between analytic and central-difference gradients,
/// over every trainable parameter and every input entry.
pub fn max_relative_gradient_error(
    net: &mut Network<f64>,
    batch: &ArrayD<f64>,
    h: f64,
    probe_seed: u64,
) -> Result<f64> {
    let probe = probe_for(net, batch, probe_seed)?;
    let (_, cache) = net.forward(batch)?;
    let (grads, dx) = net.backward(&cache, &probe)?;
    let analytic: Vec<Vec<f64>> = Network::grad_slices(&grads)
        .iter()
        .map(|s| s.to_vec())
        .collect();

    let mut worst = 0.0f64;
    let tensor_count = net.param_slices().len();
    #[allow(clippy::needless_range_loop)] // indices address params and grads in lockstep
    for ti in 0..tensor_count {
        let len = net.param_slices()[ti].len();
        for i in 0..len {
            let orig = net.param_slices()[ti][i];
            net.param_slices_mut()[ti][i] = orig + h;
            let lp = loss(net, batch, &probe)?;
            net.param_slices_mut()[ti][i] = orig - h;
            let lm = loss(net, batch, &probe)?;
            net.param_slices_mut()[ti][i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            worst = worst.max(rel_err(analytic[ti][i], numeric));
        }
    }

    let mut perturbed = batch.clone();
    for idx in 0..batch.len() {
        let orig = batch.as_slice().unwrap()[idx];
        perturbed.as_slice_mut().unwrap()[idx] = orig + h;
        let lp = loss(net, &perturbed, &probe)?;
        perturbed.as_slice_mut().unwrap()[idx] = orig - h;
        let lm = loss(net, &perturbed, &probe)?;
        perturbed.as_slice_mut().unwrap()[idx] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max(rel_err(dx.as_slice().unwrap()[idx], numeric));
    }
    Ok(worst)
}

/// Smallest |pre-ReLU activation| in a forward pass, or infinity when the
/// network has no ReLU. Central differences step across the kink when this
/// is comparable to `h`; callers should move to a different seed below a
/// safe margin.
pub fn smallest_relu_input(net: &Network<f64>, batch: &ArrayD<f64>) -> Result<f64> {
    let (_, cache) = net.forward(batch)?;
    let mut margin = f64::INFINITY;
    for lc in &cache.layers {
        if let LayerCache::Relu { input } = lc {
            for &v in input.iter() {
                margin = margin.min(v.abs());
            }
        }
    }
    Ok(margin)
}
