use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{param_specs, ParamSpec};
use super::config::ModelConfig;
use crate::error::CheckpointError;
use crate::float::Float;
use crate::tensor::Tensor;

/// Named learnable tensors, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T: Float = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

/// The three parameter groups of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Bottleneck,
    Decoder,
}

impl ParamGroup {
    pub fn prefix(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder/",
            ParamGroup::Bottleneck => "bottleneck/",
            ParamGroup::Decoder => "decoder/",
        }
    }
}

impl<T: Float> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Option<Tensor<T>> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn group(&self, g: ParamGroup) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.iter().filter(move |(k, _)| k.starts_with(g.prefix()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn map(&self, f: impl Fn(&str, &Tensor<T>) -> Tensor<T>) -> Self {
        ParameterStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), f(k, v)))
                .collect(),
        }
    }

    pub fn cast<U: Float>(&self) -> ParameterStore<U> {
        ParameterStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Store of the right shapes for `cfg`, every value zero.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ParameterStore {
            tensors: param_specs(cfg)
                .into_iter()
                .map(|s| (s.name, Tensor::zeros(s.dims)))
                .collect(),
        }
    }

    /// Checks names and dims against the architecture of `cfg`.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<(), CheckpointError> {
        let specs = param_specs(cfg);
        for s in &specs {
            match self.tensors.get(&s.name) {
                None => {
                    return Err(CheckpointError::Mismatch {
                        name: s.name.clone(),
                        detail: "missing from parameters".into(),
                    })
                }
                Some(t) if t.dims() != s.dims => {
                    return Err(CheckpointError::Mismatch {
                        name: s.name.clone(),
                        detail: format!("dims {} do not match expected {}", t.dims(), s.dims),
                    })
                }
                Some(_) => {}
            }
        }
        if self.tensors.len() != specs.len() {
            let extra = self
                .tensors
                .keys()
                .find(|k| !specs.iter().any(|s| &s.name == *k))
                .cloned()
                .unwrap_or_default();
            return Err(CheckpointError::Mismatch {
                name: extra,
                detail: "not part of the configured architecture".into(),
            });
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
pub fn init_params<T: Float>(cfg: &ModelConfig, seed: u64) -> ParameterStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for spec in param_specs(cfg) {
        let t = init_tensor(&spec, &mut rng);
        store.insert(spec.name, t);
    }
    store
}

fn init_tensor<T: Float>(spec: &ParamSpec, rng: &mut impl Rng) -> Tensor<T> {
    if spec.is_bias() {
        return Tensor::zeros(spec.dims);
    }
    let bound = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
    let data = (0..spec.dims.numel())
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_parts(spec.dims, data)
}
