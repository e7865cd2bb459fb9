use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Included in the squared-L2 penalty.
    pub regularized: bool,
    /// Updated by the optimizer.
    pub trainable: bool,
}

/// Named collection of learnable tensors, in a fixed registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor, regularized: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry {
            name,
            value,
            regularized,
            trainable: true,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    /// Replaces the value of `id`, requiring an identical shape.
    pub fn assign(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "cannot assign {:?} to parameter `{}` of shape {:?}",
                value.shape(),
                entry.name,
                entry.value.shape()
            )));
        }
        entry.value = value;
        Ok(())
    }

    /// Σ θ² over parameters that are both regularized and trainable.
    pub fn regularized_sum_squares(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.regularized && e.trainable)
            .map(|e| e.value.sum_squares())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }
}

/// Sums per-binding gradients into one dense gradient per parameter.
pub fn accumulate_grads(set: &ParamSet, bound: Vec<(ParamId, Tensor)>) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = set
        .entries()
        .iter()
        .map(|e| Tensor::zeros(e.value.rows(), e.value.cols()))
        .collect();
    for (id, g) in bound {
        out[id.0].add_assign(&g);
    }
    out
}
