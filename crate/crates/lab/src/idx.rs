//! IDX image/label files (the MNIST container format).
//!
//! Big-endian throughout. Images carry magic `0x00000803` (ubyte, rank 3)
//! followed by u32 dims `n, h, w` and `n*h*w` pixel bytes; labels carry
//! magic `0x00000801` followed by `n` and `n` label bytes. Pixels load as
//! `byte / 255` into `[N, 1, H, W]`; writing rounds back to bytes, so a
//! loaded dataset round-trips to identical files.

use std::path::Path;

use w2s_core::data::Dataset;
use w2s_core::tensor::Tensor;

use crate::error::{read_file, write_file, LabError, Result};

const IMAGE_MAGIC: [u8; 4] = [0, 0, 8, 3];
const LABEL_MAGIC: [u8; 4] = [0, 0, 8, 1];

/// Raw contents of an images file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    /// `n * h * w` bytes, row-major.
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(LabError::parse(
            path,
            bytes.len(),
            format!("truncated header: need {end} bytes, file has {}", bytes.len()),
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn check_magic(bytes: &[u8], want: [u8; 4], path: &Path) -> Result<()> {
    if bytes.len() < 4 {
        return Err(LabError::parse(
            path,
            bytes.len(),
            format!("truncated magic: file has {} bytes", bytes.len()),
        ));
    }
    if bytes[..4] != want {
        return Err(LabError::parse(
            path,
            0,
            format!("bad magic: expected {:02x?}, got {:02x?}", want, &bytes[..4]),
        ));
    }
    Ok(())
}

fn check_exact_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(LabError::parse(
            path,
            bytes.len(),
            format!("truncated: expected {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(LabError::parse(
            path,
            expected,
            format!("trailing data: expected {expected} bytes, file has {}", bytes.len()),
        ));
    }
    Ok(())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let h = be_u32(&bytes, 8, path)? as usize;
    let w = be_u32(&bytes, 12, path)? as usize;
    check_exact_len(&bytes, 16 + n * h * w, path)?;
    Ok(IdxImages {
        n,
        h,
        w,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    check_magic(&bytes, LABEL_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    check_exact_len(&bytes, 8 + n, path)?;
    Ok(bytes[8..].to_vec())
}

/// Loads an images/labels file pair as one dataset. The class count is
/// inferred as `max label + 1` (at least 2 so degenerate fixtures stay
/// valid datasets).
pub fn load_idx_pair(
    images_path: &Path,
    labels_path: &Path,
    name: impl Into<String>,
) -> Result<Dataset<f64>> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != images.n {
        return Err(LabError::parse(
            labels_path,
            4,
            format!(
                "dimension mismatch: {} labels for {} images",
                labels.len(),
                images.n
            ),
        ));
    }
    let data: Vec<f64> = images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let tensor = Tensor::new(data, [images.n, 1, images.h, images.w])?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    Ok(Dataset::new(name, tensor, labels, None, num_classes)?)
}

/// Writes `[N, 1, H, W]` images with values in `[0, 1]` back to an IDX
/// file, rounding each pixel to the nearest byte.
pub fn write_idx_images(path: &Path, images: &Tensor<f64>) -> Result<()> {
    let shape = images.shape();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(LabError::config(format!(
            "idx images must be [N, 1, H, W], got {shape:?}"
        )));
    }
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let mut bytes = Vec::with_capacity(16 + n * h * w);
    bytes.extend_from_slice(&IMAGE_MAGIC);
    for dim in [n, h, w] {
        let dim = u32::try_from(dim)
            .map_err(|_| LabError::config(format!("idx dimension {dim} exceeds u32")))?;
        bytes.extend_from_slice(&dim.to_be_bytes());
    }
    for &v in images.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(LabError::config(format!(
                "idx pixel value {v} outside [0, 1]"
            )));
        }
        bytes.push((v * 255.0).round() as u8);
    }
    write_file(path, &bytes)
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABEL_MAGIC);
    let n = u32::try_from(labels.len())
        .map_err(|_| LabError::config(format!("label count {} exceeds u32", labels.len())))?;
    bytes.extend_from_slice(&n.to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l)
            .map_err(|_| LabError::config(format!("label {l} does not fit in a byte")))?;
        bytes.push(b);
    }
    write_file(path, &bytes)
}
