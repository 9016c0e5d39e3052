//! CIFAR binary batches.
//!
//! Both generations use fixed-size records of label bytes plus a 3072-byte
//! 32x32 RGB image stored as full planes (all red, all green, all blue,
//! row-major). CIFAR-10 records are `label + pixels` (3073 bytes) across
//! `data_batch_{1..5}.bin` and `test_batch.bin`; CIFAR-100 records are
//! `coarse + fine + pixels` (3074 bytes) in `train.bin` / `test.bin`.
//! Pixels load as `byte / 255` into `[N, 3, 32, 32]`.

use std::path::{Path, PathBuf};

use w2s_core::data::Dataset;
use w2s_core::tensor::Tensor;

use crate::error::{read_file, LabError, Result};

const SIDE: usize = 32;
const PIXELS: usize = 3 * SIDE * SIDE;

/// Which half of the standard train/test file layout to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Decoded records from one or more files: flat pixel data plus parallel
/// label vectors (`coarse` empty for CIFAR-10).
struct Decoded {
    pixels: Vec<f64>,
    fine: Vec<usize>,
    coarse: Vec<usize>,
}

impl Decoded {
    fn with_capacity(records: usize) -> Self {
        Decoded {
            pixels: Vec::with_capacity(records * PIXELS),
            fine: Vec::with_capacity(records),
            coarse: Vec::new(),
        }
    }
}

fn check_label(value: u8, limit: u8, what: &str, offset: usize, path: &Path) -> Result<usize> {
    if value >= limit {
        return Err(LabError::parse(
            path,
            offset,
            format!("{what} label {value} out of range (limit {limit})"),
        ));
    }
    Ok(usize::from(value))
}

/// Splits `bytes` into `record_size` chunks, rejecting ragged files.
fn records<'a>(bytes: &'a [u8], record_size: usize, path: &Path) -> Result<std::slice::ChunksExact<'a, u8>> {
    if bytes.is_empty() {
        return Err(LabError::parse(path, 0, "empty file"));
    }
    if !bytes.len().is_multiple_of(record_size) {
        let whole = (bytes.len() / record_size) * record_size;
        return Err(LabError::parse(
            path,
            whole,
            format!(
                "truncated record: {} bytes is not a multiple of the {record_size}-byte record size",
                bytes.len()
            ),
        ));
    }
    Ok(bytes.chunks_exact(record_size))
}

fn decode_cifar10_file(path: &Path, out: &mut Decoded) -> Result<()> {
    let bytes = read_file(path)?;
    for (i, rec) in records(&bytes, 1 + PIXELS, path)?.enumerate() {
        let offset = i * (1 + PIXELS);
        out.fine.push(check_label(rec[0], 10, "class", offset, path)?);
        out.pixels.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok(())
}

fn decode_cifar100_file(path: &Path, out: &mut Decoded) -> Result<()> {
    let bytes = read_file(path)?;
    for (i, rec) in records(&bytes, 2 + PIXELS, path)?.enumerate() {
        let offset = i * (2 + PIXELS);
        out.coarse.push(check_label(rec[0], 20, "coarse", offset, path)?);
        out.fine.push(check_label(rec[1], 100, "fine", offset + 1, path)?);
        out.pixels.extend(rec[2..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok(())
}

/// Resolves `file` against the dataset root, preferring the archive's own
/// subdirectory name when it exists.
fn locate(root: &Path, subdir: &str, file: &str) -> PathBuf {
    let nested = root.join(subdir).join(file);
    if nested.exists() {
        nested
    } else {
        root.join(file)
    }
}

fn into_dataset(name: &str, d: Decoded, num_classes: usize) -> Result<Dataset<f64>> {
    let n = d.fine.len();
    let images = Tensor::new(d.pixels, [n, 3, SIDE, SIDE])?;
    let coarse = if d.coarse.is_empty() { None } else { Some(d.coarse) };
    Ok(Dataset::new(name, images, d.fine, coarse, num_classes)?)
}

pub fn load_cifar10(root: &Path, split: Split) -> Result<Dataset<f64>> {
    let files: Vec<&str> = match split {
        Split::Train => vec![
            "data_batch_1.bin",
            "data_batch_2.bin",
            "data_batch_3.bin",
            "data_batch_4.bin",
            "data_batch_5.bin",
        ],
        Split::Test => vec!["test_batch.bin"],
    };
    let mut decoded = Decoded::with_capacity(files.len() * 10_000);
    for file in &files {
        decode_cifar10_file(&locate(root, "cifar-10-batches-bin", file), &mut decoded)?;
    }
    let name = match split {
        Split::Train => "cifar10-train",
        Split::Test => "cifar10-test",
    };
    into_dataset(name, decoded, 10)
}

pub fn load_cifar100(root: &Path, split: Split) -> Result<Dataset<f64>> {
    let file = match split {
        Split::Train => "train.bin",
        Split::Test => "test.bin",
    };
    let mut decoded = Decoded::with_capacity(50_000);
    decode_cifar100_file(&locate(root, "cifar-100-binary", file), &mut decoded)?;
    let name = match split {
        Split::Train => "cifar100-train",
        Split::Test => "cifar100-test",
    };
    into_dataset(name, decoded, 100)
}
