use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Named tensors in a fixed declaration order.
///
/// Names are unique and shapes never change once a tensor is inserted; the
/// only mutation allowed is through [`ParamStore::tensor_mut`], which
/// exposes the data but not the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    entries: IndexMap<String, Tensor<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
        }
    }

    /// Appends a tensor and returns its position.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> Result<usize> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InputShape(format!("duplicate tensor name `{name}`")));
        }
        let (idx, _) = self.entries.insert_full(name, tensor);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.get(name)
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<F> {
        &self.entries[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut [F] {
        self.entries[idx].data_mut()
    }

    pub fn name(&self, idx: usize) -> &str {
        self.entries.get_index(idx).map(|(k, _)| k.as_str()).unwrap_or("")
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Vec<Tensor<F>> {
        self.entries.values().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Checks that `other` has the same names, order and shapes.
    pub fn same_layout<G: Real>(&self, other: &ParamStore<G>) -> bool {
        self.len() == other.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }
}

/// Per-tensor gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub tensors: Vec<Tensor<F>>,
}

impl<F: Real> Grads<F> {
    pub fn zeros_for(params: &ParamStore<F>) -> Self {
        Grads {
            tensors: params.zeros_like(),
        }
    }

    pub fn scale(&mut self, factor: F) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Grads<F>, factor: F) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y * factor;
            }
        }
    }
}
