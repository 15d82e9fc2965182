//! Discriminative baselines sharing one MLP + softmax head: plain
//! fine-tuning, experience replay, and the labels trick.

use crate::baselines::{argmax, ReplayBuffer};
use crate::error::{PecError, Result};
use crate::nn::{
    adam_step, init_network, softmax_cross_entropy, AdamState, InitScheme, LayerSpec, Network,
};
use ndarray::{Array2, ArrayD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscMode {
    /// Cross-entropy on the current batch over all logits.
    Finetune,
    /// Cross-entropy on the batch plus an equally sized buffer draw.
    Er,
    /// Cross-entropy restricted to the current task's logit columns.
    LabelsTrick,
}

pub struct DiscriminativeModel {
    net: Network<f32>,
    adam: AdamState<f32>,
    mode: DiscMode,
    num_classes: usize,
}

impl DiscriminativeModel {
    /// MLP with ReLU hidden layers and a `num_classes` logit head.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        mode: DiscMode,
        seed: u64,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut in_dim = input_dim;
        for &h in hidden {
            specs.push(LayerSpec::Dense {
                in_dim,
                out_dim: h,
            });
            specs.push(LayerSpec::Relu);
            in_dim = h;
        }
        specs.push(LayerSpec::Dense {
            in_dim,
            out_dim: num_classes,
        });
        let net: Network<f32> = init_network(&specs, &[input_dim], InitScheme::kaiming(seed))?;
        let adam = AdamState::for_network(&net);
        Ok(DiscriminativeModel {
            net,
            adam,
            mode,
            num_classes,
        })
    }

    pub fn mode(&self) -> DiscMode {
        self.mode
    }

    pub fn param_hash(&self) -> u64 {
        self.net.param_hash()
    }

    pub fn param_count(&self) -> usize {
        crate::nn::count_params(self.net.specs())
    }

    pub fn inference_macs(&self) -> Result<usize> {
        crate::nn::count_macs(self.net.specs(), self.net.input_shape())
    }

    /// One optimizer step. `current_classes` drives the labels-trick
    /// restriction; ER models must be handed their buffer (the batch is
    /// inserted after the buffer draw, matching stream replay semantics).
    pub fn train_step(
        &mut self,
        batch: &Array2<f32>,
        labels: &[usize],
        buffer: Option<&mut ReplayBuffer>,
        current_classes: &[usize],
        lr: f64,
    ) -> Result<f64> {
        if batch.nrows() != labels.len() {
            return Err(PecError::ShapeMismatch(format!(
                "{} rows with {} labels",
                batch.nrows(),
                labels.len()
            )));
        }
        let all_classes: Vec<usize> = (0..self.num_classes).collect();
        let (x, y, classes): (Array2<f32>, Vec<usize>, &[usize]) = match self.mode {
            DiscMode::Finetune => (batch.clone(), labels.to_vec(), &all_classes),
            DiscMode::LabelsTrick => {
                if current_classes.is_empty() {
                    return Err(PecError::InvalidConfig(
                        "labels trick needs a non-empty current class set".into(),
                    ));
                }
                (batch.clone(), labels.to_vec(), current_classes)
            }
            DiscMode::Er => {
                let buffer = buffer.ok_or_else(|| {
                    PecError::InvalidConfig("replay mode needs a buffer".into())
                })?;
                let extra = buffer.draw(batch.nrows());
                let mut x = Array2::<f32>::zeros((batch.nrows() + extra.len(), batch.ncols()));
                let mut y = Vec::with_capacity(batch.nrows() + extra.len());
                for (i, row) in batch.rows().into_iter().enumerate() {
                    x.row_mut(i).assign(&row);
                    y.push(labels[i]);
                }
                for (i, (sample, label)) in extra.iter().enumerate() {
                    for (j, &v) in sample.iter().enumerate() {
                        x[[batch.nrows() + i, j]] = v;
                    }
                    y.push(*label);
                }
                for (row, &label) in batch.rows().into_iter().zip(labels) {
                    buffer.insert(row.to_slice().unwrap(), label);
                }
                (x, y, &all_classes)
            }
        };
        let xd: ArrayD<f32> = x.into_dyn();
        let (logits, cache) = self.net.forward(&xd)?;
        let logits2 = logits
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
        let (loss, dlogits) = softmax_cross_entropy(&logits2, &y, classes)?;
        let (grads, _) = self.net.backward(&cache, &dlogits.into_dyn())?;
        let grad_slices = Network::grad_slices(&grads);
        adam_step(
            &mut self.adam,
            &mut self.net.param_slices_mut(),
            &grad_slices,
            lr,
        )?;
        Ok(loss)
    }

    /// Argmax over all logits; no task identity at test time.
    pub fn predict_batch(&self, samples: &ArrayD<f32>) -> Result<Vec<usize>> {
        let logits = self.net.infer(samples)?;
        let logits2 = logits
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
        Ok(logits2
            .rows()
            .into_iter()
            .map(|r| {
                let vals: Vec<f64> = r.iter().map(|&v| v as f64).collect();
                argmax(&vals)
            })
            .collect())
    }
}
