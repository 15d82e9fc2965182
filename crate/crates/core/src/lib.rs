//! Prediction-error-based classification (PEC) for class-incremental learning.
//!
//! The core idea: keep one frozen, randomly initialized *teacher* network and
//! train a small per-class *student* to imitate it on that class's data only.
//! At test time an input is scored per class by the squared error between the
//! student's and the teacher's outputs; the class with the smallest error wins.
//! Because every class owns its student, sequential training over disjoint
//! class sets cannot interfere with earlier classes.
//!
//! The crate bundles everything needed to benchmark the method end to end:
//!
//! - [`nn`]: a minimal neural-network engine (dense / 3x3 conv / norms /
//!   GELU / ReLU / adaptive pooling) with hand-written backprop and Adam,
//!   plus parameter and MAC accounting.
//! - [`classifier`]: the PEC classifier itself (architecture presets,
//!   per-class training, scoring, prediction).
//! - [`baselines`]: nearest-mean, streaming LDA, and MLP-scale
//!   discriminative baselines (fine-tuning, experience replay, labels trick).
//! - [`balancing`]: post-hoc per-class score rescaling fitted with CMA-ES,
//!   and the equal-budgets training schedule for imbalanced data.
//! - [`gp`]: an exact Gaussian-process reference (posterior variance,
//!   variance-rule classification, imitation-score experiments) used to
//!   validate the method's motivating claims empirically.
//! - [`data`]: MNIST / CIFAR-10 loaders, synthetic Gaussian fixtures, task
//!   splitting, and the class-imbalance transform.
//! - [`harness`]: experiment configs, the protocol runner, seed sweeps, and
//!   JSON/CSV reports.

pub mod balancing;
pub mod baselines;
pub mod classifier;
pub mod data;
pub mod elem;
pub mod error;
pub mod gp;
pub mod harness;
pub mod nn;

pub use elem::Elem;
pub use error::{PecError, Result};

/// Derives an independent sub-seed from a base seed and a stream index.
///
/// SplitMix64 finalizer; used so that per-class data orders, buffer draws,
/// and optimizer construction each get their own decorrelated stream while
/// staying reproducible from one experiment seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
