//! Checkpoint files.
//!
//! Layout: magic `W2SC`, little-endian u32 version (currently 1),
//! little-endian u32 header length, a UTF-8 JSON header (model config,
//! parameter name/shape/dtype list, epoch, optimizer hyperparameters, RNG
//! seed), then each parameter as raw little-endian f32 data in header
//! order, then the momentum buffers in the same order. Save, load, save
//! again yields byte-identical files: loading widens f32 to f64 exactly
//! and saving narrows it back without further loss.

use std::path::Path;

use serde::{Deserialize, Serialize};
use w2s_core::model::{Model, ModelConfig};
use w2s_core::optim::{OptimConfig, SgdState};
use w2s_core::tensor::Tensor;

use crate::error::{read_file, write_file, LabError, Result};

const MAGIC: [u8; 4] = *b"W2SC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    params: Vec<ParamEntry>,
    epoch: usize,
    optim: OptimConfig,
    /// Seed of the run that produced this checkpoint; together with the
    /// epoch it pins every downstream random stream.
    seed: u64,
}

/// A loaded checkpoint: the rebuilt model plus optimizer state and the
/// run coordinates needed to resume its random streams.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f64>,
    pub momentum: Vec<Vec<f64>>,
    pub epoch: usize,
    pub optim: OptimConfig,
    pub seed: u64,
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model<f64>,
    state: &SgdState<f64>,
    optim: &OptimConfig,
    epoch: usize,
    seed: u64,
) -> Result<()> {
    if state.len() != model.params().len() {
        return Err(LabError::config(format!(
            "optimizer state has {} buffers for {} parameters",
            state.len(),
            model.params().len()
        )));
    }
    let header = Header {
        model: model.config().clone(),
        params: model
            .params()
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                dtype: String::from("f32"),
            })
            .collect(),
        epoch,
        optim: optim.clone(),
        seed,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| LabError::config(format!("checkpoint header serialization failed: {e}")))?;
    let header_len = u32::try_from(header_json.len())
        .map_err(|_| LabError::config("checkpoint header exceeds u32 length"))?;

    let blob_len: usize = model.params().iter().map(|p| p.tensor.numel() * 4).sum();
    let mut bytes = Vec::with_capacity(12 + header_json.len() + 2 * blob_len);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&header_len.to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for p in model.params() {
        for &v in p.tensor.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for i in 0..state.len() {
        for &v in state.velocity(i) {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

fn read_f32_block(bytes: &[u8], offset: &mut usize, count: usize, path: &Path) -> Result<Vec<f64>> {
    let end = *offset + count * 4;
    if bytes.len() < end {
        return Err(LabError::parse(
            path,
            bytes.len(),
            format!("truncated: need {end} bytes, file has {}", bytes.len()),
        ));
    }
    let out = bytes[*offset..end]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    *offset = end;
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_file(path)?;
    if bytes.len() < 12 {
        return Err(LabError::parse(
            path,
            bytes.len(),
            format!("truncated preamble: file has {} bytes", bytes.len()),
        ));
    }
    if bytes[..4] != MAGIC {
        return Err(LabError::parse(
            path,
            0,
            format!("bad magic: expected {MAGIC:?}, got {:?}", &bytes[..4]),
        ));
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(LabError::parse(
            path,
            4,
            format!("unsupported version {version}, this build reads {VERSION}"),
        ));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end {
        return Err(LabError::parse(
            path,
            bytes.len(),
            format!("truncated header: need {header_end} bytes, file has {}", bytes.len()),
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| LabError::parse(path, 12, format!("header is not valid JSON: {e}")))?;
    for entry in &header.params {
        if entry.dtype != "f32" {
            return Err(LabError::parse(
                path,
                12,
                format!("parameter {} has unsupported dtype {}", entry.name, entry.dtype),
            ));
        }
    }

    let mut offset = header_end;
    let mut parts = Vec::with_capacity(header.params.len());
    for entry in &header.params {
        let numel: usize = entry.shape.iter().product();
        let data = read_f32_block(&bytes, &mut offset, numel, path)?;
        parts.push((entry.name.clone(), Tensor::new(data, entry.shape.clone())?));
    }
    let mut momentum = Vec::with_capacity(header.params.len());
    for entry in &header.params {
        let numel: usize = entry.shape.iter().product();
        momentum.push(read_f32_block(&bytes, &mut offset, numel, path)?);
    }
    if offset != bytes.len() {
        return Err(LabError::parse(
            path,
            offset,
            format!("trailing data: expected {offset} bytes, file has {}", bytes.len()),
        ));
    }

    let model = Model::from_parts(&header.model, parts)?;
    Ok(Checkpoint {
        model,
        momentum,
        epoch: header.epoch,
        optim: header.optim,
        seed: header.seed,
    })
}

impl Checkpoint {
    /// Rejects a checkpoint whose model does not match `expected`, naming
    /// the first parameter whose shape disagrees.
    pub fn require_model(&self, expected: &ModelConfig) -> Result<()> {
        if self.model.config() == expected {
            return Ok(());
        }
        let skeleton = Model::<f64>::build(expected, 0)?;
        for (have, want) in self.model.params().iter().zip(skeleton.params()) {
            if have.name != want.name || have.tensor.shape() != want.tensor.shape() {
                return Err(LabError::config(format!(
                    "checkpoint model mismatch: parameter {} is {:?}, expected {} {:?}",
                    have.name,
                    have.tensor.shape(),
                    want.name,
                    want.tensor.shape()
                )));
            }
        }
        Err(LabError::config(format!(
            "checkpoint model mismatch: checkpoint config {:?} differs from expected {:?}",
            self.model.config(),
            expected
        )))
    }

    /// Momentum buffers as a live optimizer state for this model.
    pub fn sgd_state(&self) -> Result<SgdState<f64>> {
        Ok(SgdState::from_buffers(&self.model, self.momentum.clone())?)
    }
}
