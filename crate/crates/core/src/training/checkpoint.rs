//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `AMBICKPT`, a little-endian `u32` format
//! version, a `u64` header length, a JSON header, then every tensor as
//! little-endian `f64`: parameters, Adam first moments, Adam second
//! moments, each in layout order. Nothing time- or path-dependent is
//! stored, so equal training state gives equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{layout, ModelSpec, NamedTensor, Parameters, TensorRole};

pub const MAGIC: &[u8; 8] = b"AMBICKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: ModelSpec,
    pub params: Parameters,
    pub optimizer: AdamState,
    /// Optimizer steps completed.
    pub step: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
    role: TensorRole,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    model: ModelSpec,
    step: usize,
    adam_t: u64,
    init_seed: u64,
    tensors: Vec<TensorHeader>,
}

fn corrupt(m: impl Into<String>) -> Error {
    Error::Checkpoint(m.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            model: self.model.clone(),
            step: self.step,
            adam_t: self.optimizer.t,
            init_seed: self.params.seed,
            tensors: self
                .params
                .tensors
                .iter()
                .map(|t| TensorHeader {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    role: t.role,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let sections = [
            self.params.tensors.iter().map(|t| &t.data).collect::<Vec<_>>(),
            self.optimizer.m.iter().collect(),
            self.optimizer.v.iter().collect(),
        ];
        for section in sections {
            for tensor in section {
                for v in tensor {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("bad header: {e}")))?;
        let expected = layout(&header.model);
        if expected.len() != header.tensors.len()
            || expected
                .iter()
                .zip(&header.tensors)
                .any(|(e, t)| e.name != t.name || e.shape != t.shape || e.role != t.role)
        {
            return Err(corrupt("tensor table does not match the model spec"));
        }
        let counts: Vec<usize> = header.tensors.iter().map(|t| t.shape.iter().product()).collect();
        let total: usize = counts.iter().sum();
        let data = &body[hlen..];
        if data.len() != 3 * total * 8 {
            return Err(corrupt(format!(
                "expected {} bytes of tensor data, found {}",
                3 * total * 8,
                data.len()
            )));
        }
        let mut values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let tensors: Vec<NamedTensor> = header
            .tensors
            .into_iter()
            .zip(&counts)
            .map(|(t, &n)| NamedTensor {
                name: t.name,
                shape: t.shape,
                role: t.role,
                data: take(n),
            })
            .collect();
        let m = counts.iter().map(|&n| take(n)).collect();
        let v = counts.iter().map(|&n| take(n)).collect();
        let params = Parameters {
            tensors,
            seed: header.init_seed,
        };
        params.check_layout(&expected)?;
        Ok(Self {
            config: header.config,
            model: header.model,
            params,
            optimizer: AdamState { t: header.adam_t, m, v },
            step: header.step,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
