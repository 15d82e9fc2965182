//! Minimal neural-network engine.
//!
//! The layer menu is deliberately small: dense, 3x3 convolution with padding
//! 1, layer norm (learnable affine), instance norm (no affine), GELU, ReLU,
//! adaptive average pooling, and flatten. Backprop is hand-written per layer;
//! there is no tape. Activations flow as dynamic-rank arrays with the batch
//! axis first: `(N, features)` for dense stacks, `(N, C, H, W)` for
//! convolutional ones.
//!
//! Element type is generic over [`Elem`] (`f32` for training, `f64` for the
//! finite-difference gradient checks). Reductions accumulate in `f64` either
//! way.

mod adam;
mod count;
pub mod gradcheck;
mod init;
mod layers;

pub use adam::{adam_step, lr_at, AdamState};
pub use count::{count_macs, count_params};
pub use init::{init_network, InitKind, InitScheme};
pub use layers::{Layer, LayerCache, LayerGrads};

use crate::elem::Elem;
use crate::error::{PecError, Result};
use ndarray::ArrayD;

/// Normalization epsilon shared by layer norm and instance norm.
pub const NORM_EPS: f64 = 1e-5;

/// Declarative layer description. A network is a list of these plus an input
/// shape; parameters are materialized by [`init_network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    /// 3x3 kernel, padding 1, stride 1; spatial size is preserved.
    Conv3x3 { in_channels: usize, out_channels: usize },
    /// Normalizes over the feature axis of `(N, D)`; learnable scale/shift.
    LayerNorm { dim: usize },
    /// Normalizes each `(sample, channel)` plane of `(N, C, H, W)`; no affine.
    InstanceNorm { channels: usize },
    Gelu,
    Relu,
    /// Adaptive average pooling to a `target x target` spatial output.
    AdaptiveAvgPool { target: usize },
    Flatten,
}

impl LayerSpec {
    /// Shape of one sample after this layer, or an error if the layer cannot
    /// accept `input` (the shape-algebra building block).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |msg: String| Err(PecError::ShapeMismatch(msg));
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => {
                if input.len() != 1 || input[0] != in_dim {
                    return fail(format!("dense expects [{in_dim}], got {input:?}"));
                }
                Ok(vec![out_dim])
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return fail(format!("conv expects [{in_channels}, H, W], got {input:?}"));
                }
                if input[1] == 0 || input[2] == 0 {
                    return fail(format!("conv needs nonzero spatial dims, got {input:?}"));
                }
                Ok(vec![out_channels, input[1], input[2]])
            }
            LayerSpec::LayerNorm { dim } => {
                if input.len() != 1 || input[0] != dim {
                    return fail(format!("layer norm expects [{dim}], got {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::InstanceNorm { channels } => {
                if input.len() != 3 || input[0] != channels {
                    return fail(format!(
                        "instance norm expects [{channels}, H, W], got {input:?}"
                    ));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Gelu | LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::AdaptiveAvgPool { target } => {
                if input.len() != 3 {
                    return fail(format!("pool expects [C, H, W], got {input:?}"));
                }
                if target == 0 || target > input[1] || target > input[2] {
                    return fail(format!(
                        "pool target {target} out of range for {input:?}"
                    ));
                }
                Ok(vec![input[0], target, target])
            }
            LayerSpec::Flatten => {
                if input.is_empty() {
                    return fail("flatten expects a non-scalar input".into());
                }
                Ok(vec![input.iter().product()])
            }
        }
    }
}

/// Walks the full spec chain; total on valid `(specs, input)` pairs.
pub fn output_shape(specs: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<usize>> {
    let mut shape = input_shape.to_vec();
    for spec in specs {
        shape = spec.output_shape(&shape)?;
    }
    Ok(shape)
}

/// A materialized network: specs plus per-layer parameters.
#[derive(Debug, Clone)]
pub struct Network<E: Elem> {
    pub(crate) specs: Vec<LayerSpec>,
    pub(crate) layers: Vec<Layer<E>>,
    pub(crate) input_shape: Vec<usize>,
    /// Frozen networks refuse parameter updates (the PEC teacher).
    pub trainable: bool,
}

/// Per-layer caches from one forward pass, needed by [`Network::backward`].
pub struct ForwardCache<E: Elem> {
    layers: Vec<LayerCache<E>>,
    output_shape: Vec<usize>,
}

impl<E: Elem> Network<E> {
    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        output_shape(&self.specs, &self.input_shape)
    }

    fn check_batch(&self, batch: &ArrayD<E>) -> Result<()> {
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(PecError::ShapeMismatch(format!(
                "batch shape {:?} does not match input shape {:?} (plus batch axis)",
                shape, self.input_shape
            )));
        }
        Ok(())
    }

    fn apply(&self, batch: &ArrayD<E>, want_cache: bool) -> Result<(ArrayD<E>, Option<ForwardCache<E>>)> {
        self.check_batch(batch)?;
        let mut caches = want_cache.then(|| Vec::with_capacity(self.layers.len()));
        let mut x = batch.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(x, want_cache)?;
            if let Some(c) = caches.as_mut() {
                c.push(cache.expect("cache requested"));
            }
            x = out;
        }
        let cache = caches.map(|layers| ForwardCache {
            layers,
            output_shape: x.shape().to_vec(),
        });
        Ok((x, cache))
    }

    /// Forward pass that records everything backward needs.
    pub fn forward(&self, batch: &ArrayD<E>) -> Result<(ArrayD<E>, ForwardCache<E>)> {
        let (out, cache) = self.apply(batch, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    /// Forward pass without caches, for inference. Arithmetic is identical to
    /// [`Network::forward`]; only the bookkeeping differs.
    pub fn infer(&self, batch: &ArrayD<E>) -> Result<ArrayD<E>> {
        Ok(self.apply(batch, false)?.0)
    }

    /// Backpropagates `grad_out` through the cached pass, returning per-layer
    /// parameter gradients (aligned with the layer list) and the input
    /// gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache<E>,
        grad_out: &ArrayD<E>,
    ) -> Result<(Vec<LayerGrads<E>>, ArrayD<E>)> {
        if cache.layers.len() != self.layers.len() {
            return Err(PecError::ShapeMismatch(format!(
                "stale cache: {} cached layers for a {}-layer network",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        if grad_out.shape() != cache.output_shape.as_slice() {
            return Err(PecError::ShapeMismatch(format!(
                "stale cache: grad shape {:?} does not match cached output shape {:?}",
                grad_out.shape(),
                cache.output_shape
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let (pg, gin) = layer.backward(lc, g)?;
            grads.push(pg);
            g = gin;
        }
        grads.reverse();
        Ok((grads, g))
    }

    /// Flat views of every trainable parameter tensor, in layer order.
    pub fn param_slices(&self) -> Vec<&[E]> {
        self.layers.iter().flat_map(Layer::param_slices).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [E]> {
        self.layers
            .iter_mut()
            .flat_map(Layer::param_slices_mut)
            .collect()
    }

    /// Converts per-layer gradients into flat slices aligned with
    /// [`Network::param_slices`].
    pub fn grad_slices(grads: &[LayerGrads<E>]) -> Vec<&[E]> {
        grads.iter().flat_map(LayerGrads::grad_slices).collect()
    }

    /// 64-bit hash of all parameter bits; used by the no-forgetting tests.
    pub fn param_hash(&self) -> u64 {
        // FNV-1a over the raw bytes of every parameter.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for slice in self.param_slices() {
            for &p in slice {
                for b in p.to_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Softmax cross-entropy over a class subset, for the discriminative
/// baselines. Returns the mean loss over the batch and `d(loss)/d(logits)`;
/// logit columns outside `classes` receive zero gradient. Passing the full
/// class range reproduces plain cross-entropy exactly (same code path).
pub fn softmax_cross_entropy<E: Elem>(
    logits: &ndarray::Array2<E>,
    targets: &[usize],
    classes: &[usize],
) -> Result<(f64, ndarray::Array2<E>)> {
    let (n, k) = logits.dim();
    if n != targets.len() {
        return Err(PecError::ShapeMismatch(format!(
            "{n} logit rows for {} targets",
            targets.len()
        )));
    }
    if classes.is_empty() {
        return Err(PecError::InvalidConfig(
            "cross-entropy over an empty class subset".into(),
        ));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= k) {
        return Err(PecError::ShapeMismatch(format!(
            "class {c} out of range for {k} logits"
        )));
    }
    let mut dlogits = ndarray::Array2::<E>::zeros((n, k));
    let mut loss = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let t = targets[i];
        if !classes.contains(&t) {
            return Err(PecError::InvalidConfig(format!(
                "target {t} not in the class subset"
            )));
        }
        let row = logits.row(i);
        let max = classes
            .iter()
            .map(|&c| row[c].to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = classes
            .iter()
            .map(|&c| (row[c].to_f64() - max).exp())
            .sum();
        loss -= (row[t].to_f64() - max - z.ln()) * inv_n;
        for &c in classes {
            let p = (row[c].to_f64() - max).exp() / z;
            let indicator = if c == t { 1.0 } else { 0.0 };
            dlogits[[i, c]] = E::from_f64((p - indicator) * inv_n);
        }
    }
    Ok((loss, dlogits))
}
