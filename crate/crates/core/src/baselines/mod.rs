//! Lightweight comparison methods: nearest mean, streaming LDA, and the
//! MLP-scale discriminative trio (fine-tuning, experience replay, labels
//! trick).

mod discriminative;
mod nearest_mean;
mod replay;
mod slda;
#[cfg(test)]
mod tests;

pub use discriminative::{DiscMode, DiscriminativeModel};
pub use nearest_mean::NearestMeanModel;
pub use replay::ReplayBuffer;
pub use slda::SldaModel;

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
