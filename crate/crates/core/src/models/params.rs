use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::ModelError;

/// Plain copy of a tensor's shape and `f32` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<i64>,
    pub values: Vec<f32>,
}

impl TensorData {
    pub fn from_tensor(t: &Tensor) -> Self {
        let t = t.detach().to_kind(Kind::Float).contiguous();
        let numel = t.numel();
        let mut values = vec![0f32; numel];
        t.copy_data(&mut values, numel);
        Self { shape: t.size(), values }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.values).view(self.shape.as_slice())
    }
}

pub(crate) fn normal_tensor<R: Rng + ?Sized>(shape: &[i64], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0f32, std as f32).expect("finite std");
    let n: i64 = shape.iter().product();
    let values: Vec<f32> = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::from_slice(&values).view(shape)
}

/// Named trainable parameters plus non-trainable buffers (power-iteration
/// vectors). Iteration order is the sorted name order, which keeps optimizer
/// state and checkpoints stable.
#[derive(Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    buffers: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn insert_param(&mut self, name: &str, t: Tensor) {
        self.params.insert(name.to_string(), t.detach().set_requires_grad(true));
    }

    pub(crate) fn insert_buffer(&mut self, name: &str, t: Tensor) {
        self.buffers.insert(name.to_string(), t.detach());
    }

    pub fn param(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn buffer(&self, name: &str) -> &Tensor {
        self.buffers
            .get(name)
            .unwrap_or_else(|| panic!("unknown buffer `{name}`"))
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_parameters(&self) -> i64 {
        self.params.values().map(|t| t.numel() as i64).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.params.values_mut() {
            t.zero_grad();
        }
    }

    pub fn export_params(&self) -> BTreeMap<String, TensorData> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), TensorData::from_tensor(v)))
            .collect()
    }

    pub fn export_buffers(&self) -> BTreeMap<String, TensorData> {
        self.buffers
            .iter()
            .map(|(k, v)| (k.clone(), TensorData::from_tensor(v)))
            .collect()
    }

    /// Replaces every parameter and buffer; names and shapes must match.
    pub fn import(
        &mut self,
        params: &BTreeMap<String, TensorData>,
        buffers: &BTreeMap<String, TensorData>,
    ) -> Result<(), ModelError> {
        check_names(&self.params, params)?;
        check_names(&self.buffers, buffers)?;
        for (name, data) in params {
            self.insert_param(name, data.to_tensor());
        }
        for (name, data) in buffers {
            self.insert_buffer(name, data.to_tensor());
        }
        Ok(())
    }

    /// Independent copy with fresh storage (no shared autograd state).
    pub fn deep_copy(&self) -> Self {
        let mut out = Self::new();
        for (k, v) in &self.params {
            out.insert_param(k, v.detach().copy());
        }
        for (k, v) in &self.buffers {
            out.insert_buffer(k, v.detach().copy());
        }
        out
    }
}

fn check_names(ours: &BTreeMap<String, Tensor>, theirs: &BTreeMap<String, TensorData>) -> Result<(), ModelError> {
    for (name, t) in ours {
        match theirs.get(name) {
            Some(d) if d.shape == t.size() && d.values.len() == t.numel() => {}
            _ => return Err(ModelError::Parameter(name.clone())),
        }
    }
    if let Some(extra) = theirs.keys().find(|k| !ours.contains_key(*k)) {
        return Err(ModelError::Parameter(extra.clone()));
    }
    Ok(())
}
