//! CIFAR-10 binary-batch loader.
//!
//! Each record is 3073 bytes: one label byte followed by a 32x32 RGB image
//! in channel-planar order (1024 red, 1024 green, 1024 blue). Train data is
//! `data_batch_1..5.bin`, test data `test_batch.bin`.

use crate::data::Dataset;
use crate::error::{PecError, Result};
use ndarray::Array2;
use std::path::Path;

const RECORD: usize = 3073;
const PIXELS: usize = 3072;

fn read_batch(path: &Path, samples: &mut Vec<[u8; PIXELS]>, labels: &mut Vec<usize>) -> Result<()> {
    let bytes = std::fs::read(path)
        .map_err(|e| PecError::Data(format!("cannot read {}: {e}", path.display())))?;
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(PecError::Data(format!(
            "{}: {} bytes is not a whole number of {RECORD}-byte records",
            path.display(),
            bytes.len()
        )));
    }
    for rec in bytes.chunks_exact(RECORD) {
        let label = rec[0] as usize;
        if label > 9 {
            return Err(PecError::Data(format!(
                "{}: label byte {label} out of range",
                path.display()
            )));
        }
        labels.push(label);
        let mut px = [0u8; PIXELS];
        px.copy_from_slice(&rec[1..]);
        samples.push(px);
    }
    Ok(())
}

fn to_dataset(raw: Vec<[u8; PIXELS]>, labels: Vec<usize>) -> Result<Dataset> {
    let mut samples = Array2::<f32>::zeros((raw.len(), PIXELS));
    {
        let flat = samples.as_slice_mut().unwrap();
        for (i, px) in raw.iter().enumerate() {
            for (j, &b) in px.iter().enumerate() {
                flat[i * PIXELS + j] = b as f32 / 255.0;
            }
        }
    }
    Dataset::new(samples, vec![3, 32, 32], labels, 10)
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train_px = Vec::new();
    let mut train_labels = Vec::new();
    for i in 1..=5 {
        read_batch(
            &dir.join(format!("data_batch_{i}.bin")),
            &mut train_px,
            &mut train_labels,
        )?;
    }
    let mut test_px = Vec::new();
    let mut test_labels = Vec::new();
    read_batch(&dir.join("test_batch.bin"), &mut test_px, &mut test_labels)?;
    Ok((
        to_dataset(train_px, train_labels)?,
        to_dataset(test_px, test_labels)?,
    ))
}
