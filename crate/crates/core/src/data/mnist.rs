//! IDX-format MNIST loader.
//!
//! Big-endian headers: magic 2051 (0x00000803) for images with
//! `count x rows x cols` u8 payload, magic 2049 (0x00000801) for labels.
//! Pixels are scaled to `[0, 1]` and flattened to 784 features.

use crate::data::Dataset;
use crate::error::{PecError, Result};
use ndarray::Array2;
use std::fs::File;
use std::io::Read;
use std::path::Path;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| PecError::Data(format!("truncated {what}: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize)> {
    let mut f = File::open(path)
        .map_err(|e| PecError::Data(format!("cannot open {}: {e}", path.display())))?;
    let magic = read_u32_be(&mut f, "image header")?;
    if magic != IMAGE_MAGIC {
        return Err(PecError::Data(format!(
            "bad image magic {magic:#010x} in {} (want 0x00000803)",
            path.display()
        )));
    }
    let count = read_u32_be(&mut f, "image count")? as usize;
    let rows = read_u32_be(&mut f, "image rows")? as usize;
    let cols = read_u32_be(&mut f, "image cols")? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    f.read_exact(&mut pixels)
        .map_err(|e| PecError::Data(format!("truncated image payload: {e}")))?;
    Ok((pixels, count, rows, cols))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut f = File::open(path)
        .map_err(|e| PecError::Data(format!("cannot open {}: {e}", path.display())))?;
    let magic = read_u32_be(&mut f, "label header")?;
    if magic != LABEL_MAGIC {
        return Err(PecError::Data(format!(
            "bad label magic {magic:#010x} in {} (want 0x00000801)",
            path.display()
        )));
    }
    let count = read_u32_be(&mut f, "label count")? as usize;
    let mut labels = vec![0u8; count];
    f.read_exact(&mut labels)
        .map_err(|e| PecError::Data(format!("truncated label payload: {e}")))?;
    Ok(labels)
}

fn load_split(dir: &Path, prefix: &str) -> Result<Dataset> {
    let (pixels, count, rows, cols) =
        read_images(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = read_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    if labels.len() != count {
        return Err(PecError::Data(format!(
            "{count} images but {} labels in the {prefix} split",
            labels.len()
        )));
    }
    let feat = rows * cols;
    let mut samples = Array2::<f32>::zeros((count, feat));
    {
        let flat = samples.as_slice_mut().unwrap();
        for (dst, &src) in flat.iter_mut().zip(&pixels) {
            *dst = src as f32 / 255.0;
        }
    }
    Dataset::new(
        samples,
        vec![feat],
        labels.into_iter().map(|l| l as usize).collect(),
        10,
    )
}

/// Loads `train-*` and `t10k-*` IDX files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((load_split(dir, "train")?, load_split(dir, "t10k")?))
}
