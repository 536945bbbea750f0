use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRole {
    /// Updated by the optimizer.
    Trainable,
    /// Running statistics; updated by training-mode forward passes only.
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-sqrt(1/fan_in), sqrt(1/fan_in))`.
    Uniform {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
    pub data: Vec<f64>,
}

/// Every tensor a model owns, in a fixed order determined by its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub tensors: Vec<NamedTensor>,
    pub seed: u64,
}

impl Parameters {
    /// Draws tensors in layout order from a ChaCha8 stream seeded with `seed`.
    pub fn init(layout: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .iter()
            .map(|p| {
                let n = p.numel();
                let data = match p.init {
                    Init::Uniform { fan_in } => {
                        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
                        (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                    }
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                };
                NamedTensor {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    role: p.role,
                    data,
                }
            })
            .collect();
        Self { tensors, seed }
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.tensors[index].data
    }

    pub fn by_name(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.role == TensorRole::Trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// Checks names, shapes and roles against `layout` and that every value is finite.
    pub fn check_layout(&self, layout: &[ParamSpec]) -> Result<()> {
        if self.tensors.len() != layout.len() {
            return Err(Error::Shape(format!(
                "{} tensors, layout expects {}",
                self.tensors.len(),
                layout.len()
            )));
        }
        for (t, p) in self.tensors.iter().zip(layout) {
            if t.name != p.name || t.shape != p.shape || t.role != p.role {
                return Err(Error::Shape(format!(
                    "tensor {} {:?} does not match layout {} {:?}",
                    t.name, t.shape, p.name, p.shape
                )));
            }
            if t.data.len() != p.numel() {
                return Err(Error::Shape(format!("tensor {} has wrong element count", t.name)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("parameter {}", t.name)));
            }
        }
        Ok(())
    }

    /// Zero-filled gradient storage matching these parameters.
    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            tensors: self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect(),
        }
    }

    pub fn apply_buffer_updates(&mut self, updates: Vec<(usize, Vec<f64>)>) {
        for (idx, data) in updates {
            debug_assert_eq!(self.tensors[idx].role, TensorRole::Buffer);
            self.tensors[idx].data = data;
        }
    }
}

/// Gradients aligned with [`Parameters::tensors`]; buffer entries stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().flatten().for_each(|v| *v *= k);
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Index of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.tensors.iter().position(|t| t.iter().any(|v| !v.is_finite()))
    }
}
