use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Logits of one example over the full label set, indexed by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(pub Vec<f64>);

impl LogitVector {
    pub fn from_row<F: Real>(row: &[F]) -> Self {
        LogitVector(row.iter().map(|v| v.to_f64()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Entries of `logits` at `ids`, in ascending id order.
pub fn slice_logits<F: Real>(logits: &[F], ids: &BTreeSet<usize>) -> Result<Vec<F>> {
    ids.iter()
        .map(|&id| {
            logits.get(id).copied().ok_or(Error::InvalidClass {
                id,
                num_classes: logits.len(),
            })
        })
        .collect()
}
