//! Parameter and multiply-accumulate accounting.

use crate::error::Result;
use crate::nn::LayerSpec;

/// Trainable parameters implied by the specs, including normalization affine
/// parameters. Instance norm carries none.
pub fn count_params(specs: &[LayerSpec]) -> usize {
    specs
        .iter()
        .map(|spec| match *spec {
            LayerSpec::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => 9 * in_channels * out_channels + out_channels,
            LayerSpec::LayerNorm { dim } => 2 * dim,
            _ => 0,
        })
        .sum()
}

/// Multiply-accumulate operations for one forward pass of a single sample.
/// Dense counts `in * out`; conv counts `9 * c_in * c_out * h * w`;
/// normalization, activations, and pooling count zero.
pub fn count_macs(specs: &[LayerSpec], input_shape: &[usize]) -> Result<usize> {
    let mut shape = input_shape.to_vec();
    let mut macs = 0usize;
    for spec in specs {
        match *spec {
            LayerSpec::Dense { in_dim, out_dim } => macs += in_dim * out_dim,
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => macs += 9 * in_channels * out_channels * shape[1] * shape[2],
            _ => {}
        }
        shape = spec.output_shape(&shape)?;
    }
    Ok(macs)
}
