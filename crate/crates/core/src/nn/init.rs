//! Parameter initialization.

use crate::elem::Elem;
use crate::error::Result;
use crate::nn::layers::{Conv3x3, Dense, Layer, LayerNorm};
use crate::nn::{output_shape, LayerSpec, Network};
use ndarray::{Array1, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Weight initialization family.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum InitKind {
    /// Weights and biases from `U(-1/sqrt(fan_in), +1/sqrt(fan_in))`.
    /// Conv fan-in is `9 * in_channels`.
    KaimingUniform,
    /// Weights from `U(+-sqrt(6/(fan_in+fan_out)))`; biases keep the
    /// Kaiming-uniform bound.
    Xavier,
    /// Every weight and bias from `U(-a, a)`.
    Uniform(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct InitScheme {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitScheme {
    pub fn kaiming(seed: u64) -> Self {
        InitScheme {
            kind: InitKind::KaimingUniform,
            seed,
        }
    }
}

fn bounds(kind: InitKind, fan_in: usize, fan_out: usize) -> (f64, f64) {
    let kaiming = 1.0 / (fan_in as f64).sqrt();
    match kind {
        InitKind::KaimingUniform => (kaiming, kaiming),
        InitKind::Xavier => ((6.0 / (fan_in + fan_out) as f64).sqrt(), kaiming),
        InitKind::Uniform(a) => (a, a),
    }
}

fn fill<E: Elem>(rng: &mut ChaCha8Rng, slice: &mut [E], bound: f64) {
    for v in slice {
        *v = E::from_f64(rng.gen_range(-bound..=bound));
    }
}

/// Builds a network from layer specs, validating the shape chain and drawing
/// parameters deterministically from the scheme's seed. Draw order is fixed:
/// layers in order, weights before biases.
pub fn init_network<E: Elem>(
    specs: &[LayerSpec],
    input_shape: &[usize],
    scheme: InitScheme,
) -> Result<Network<E>> {
    output_shape(specs, input_shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        layers.push(match *spec {
            LayerSpec::Dense { in_dim, out_dim } => {
                let (wb, bb) = bounds(scheme.kind, in_dim, out_dim);
                let mut w = Array2::<E>::zeros((out_dim, in_dim));
                let mut b = Array1::<E>::zeros(out_dim);
                fill(&mut rng, w.as_slice_mut().unwrap(), wb);
                fill(&mut rng, b.as_slice_mut().unwrap(), bb);
                Layer::Dense(Dense { w, b })
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let fan_in = 9 * in_channels;
                let fan_out = 9 * out_channels;
                let (wb, bb) = bounds(scheme.kind, fan_in, fan_out);
                let mut w = Array4::<E>::zeros((out_channels, in_channels, 3, 3));
                let mut b = Array1::<E>::zeros(out_channels);
                fill(&mut rng, w.as_slice_mut().unwrap(), wb);
                fill(&mut rng, b.as_slice_mut().unwrap(), bb);
                Layer::Conv(Conv3x3 { w, b })
            }
            LayerSpec::LayerNorm { dim } => Layer::LayerNorm(LayerNorm {
                gamma: Array1::from_elem(dim, E::one()),
                beta: Array1::zeros(dim),
            }),
            LayerSpec::InstanceNorm { .. } => Layer::InstanceNorm,
            LayerSpec::Gelu => Layer::Gelu,
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::AdaptiveAvgPool { target } => Layer::AdaptiveAvgPool { target },
            LayerSpec::Flatten => Layer::Flatten,
        });
    }
    Ok(Network {
        specs: specs.to_vec(),
        layers,
        input_shape: input_shape.to_vec(),
        trainable: true,
    })
}
