//! Checkpoint container.
//!
//! Layout: the 8-byte magic `CLSPCKPT`, a little-endian `u64` header length,
//! a JSON header, then raw little-endian tensor data. The header carries the
//! format version, model config, tokenizer config, training step and a
//! tensor directory (name, shape, dtype, byte offset into the data section,
//! byte length). Tensors are named `param.<path>`, `adam.m.<path>`,
//! `adam.v.<path>`, `positions.source` and `positions.target`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, Parameters};
use super::optim::AdamState;
use super::tensor::{Scalar, Tensor};
use crate::encoding::TokenizerConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CLSPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: ModelConfig,
    pub tokenizer: TokenizerConfig,
    pub params: Parameters<f32>,
    pub optimizer: AdamState<f32>,
}

impl ModelCheckpoint {
    pub fn step(&self) -> u64 {
        self.optimizer.step
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    bytes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    tokenizer: TokenizerConfig,
    train_step: u64,
    tensors: Vec<TensorEntry>,
}

fn directory(ckpt: &ModelCheckpoint) -> Vec<(String, &Tensor<f32>)> {
    let mut out = Vec::new();
    let groups = [
        ("param", &ckpt.params),
        ("adam.m", &ckpt.optimizer.m),
        ("adam.v", &ckpt.optimizer.v),
    ];
    for (prefix, params) in groups {
        for (name, t) in params.named() {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
    out.push(("positions.source".into(), &ckpt.params.source_positions));
    out.push(("positions.target".into(), &ckpt.params.target_positions));
    out
}

fn directory_mut(
    params: &mut Parameters<f32>,
    optimizer: &mut AdamState<f32>,
) -> Vec<(String, *mut Tensor<f32>)> {
    // Raw pointers only to allow collecting disjoint field borrows into one list.
    let mut out: Vec<(String, *mut Tensor<f32>)> = Vec::new();
    for (name, t) in params.named_mut() {
        out.push((format!("param.{name}"), t as *mut _));
    }
    for (name, t) in optimizer.m.named_mut() {
        out.push((format!("adam.m.{name}"), t as *mut _));
    }
    for (name, t) in optimizer.v.named_mut() {
        out.push((format!("adam.v.{name}"), t as *mut _));
    }
    out.push(("positions.source".into(), &mut params.source_positions as *mut _));
    out.push(("positions.target".into(), &mut params.target_positions as *mut _));
    out
}

impl ModelCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut data = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in directory(self) {
            let offset = data.len();
            for &x in &t.data {
                x.write_le(&mut data);
            }
            tensors.push(TensorEntry {
                name,
                shape: t.shape.clone(),
                dtype: f32::DTYPE.into(),
                offset,
                bytes: data.len() - offset,
            });
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.clone(),
            tokenizer: self.tokenizer.clone(),
            train_step: self.optimizer.step,
            tensors,
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing checkpoint magic".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", header.format_version)));
        }
        header.model.validate()?;
        let data = &bytes[data_start..];

        let mut params = Parameters::<f32>::zeros(&header.model);
        let mut optimizer = AdamState::<f32>::new(&header.model);
        optimizer.step = header.train_step;
        let slots = directory_mut(&mut params, &mut optimizer);
        if slots.len() != header.tensors.len() {
            return Err(bad(format!(
                "expected {} tensors, found {}",
                slots.len(),
                header.tensors.len()
            )));
        }
        for ((name, slot), entry) in slots.into_iter().zip(&header.tensors) {
            // SAFETY: every pointer in `slots` targets a distinct tensor owned
            // by `params` or `optimizer`, both alive and otherwise unborrowed.
            let tensor = unsafe { &mut *slot };
            if entry.name != name || entry.shape != tensor.shape || entry.dtype != f32::DTYPE {
                return Err(bad(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {:?}",
                    entry.name, entry.shape, tensor.shape
                )));
            }
            let end = entry.offset + entry.bytes;
            if entry.bytes != tensor.len() * f32::BYTES || end > data.len() {
                return Err(bad(format!("tensor `{name}` has bad extent")));
            }
            for (x, chunk) in tensor
                .data
                .iter_mut()
                .zip(data[entry.offset..end].chunks_exact(f32::BYTES))
            {
                *x = f32::read_le(chunk);
            }
        }
        Ok(ModelCheckpoint {
            model: header.model,
            tokenizer: header.tokenizer,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
