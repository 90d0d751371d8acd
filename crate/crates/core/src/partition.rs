use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split of the label set into excluded (to be forgotten) and remaining
/// classes.
///
/// The two sets are disjoint and cover `0..num_classes`. At least one class
/// must remain. An empty excluded set is representable so that degenerate
/// configurations can be reported instead of rejected; every operation that
/// needs an excluded class checks [`ClassPartition::n_excluded`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    num_classes: usize,
    excluded: BTreeSet<usize>,
    remaining: BTreeSet<usize>,
}

impl ClassPartition {
    pub fn new(num_classes: usize, excluded: impl IntoIterator<Item = usize>) -> Result<Self> {
        let excluded: BTreeSet<usize> = excluded.into_iter().collect();
        if let Some(&bad) = excluded.iter().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidClass { id: bad, num_classes });
        }
        let remaining: BTreeSet<usize> = (0..num_classes).filter(|c| !excluded.contains(c)).collect();
        if remaining.is_empty() {
            return Err(Error::InvalidPartition("no remaining classes".into()));
        }
        Ok(ClassPartition {
            num_classes,
            excluded,
            remaining,
        })
    }

    /// Excludes the last `k` classes of the label ordering.
    pub fn tail(num_classes: usize, k: usize) -> Result<Self> {
        if k > num_classes {
            return Err(Error::InvalidPartition(format!(
                "cannot exclude {k} of {num_classes} classes"
            )));
        }
        Self::new(num_classes, num_classes - k..num_classes)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn excluded(&self) -> &BTreeSet<usize> {
        &self.excluded
    }

    pub fn remaining(&self) -> &BTreeSet<usize> {
        &self.remaining
    }

    pub fn n_excluded(&self) -> usize {
        self.excluded.len()
    }

    pub fn n_remaining(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_excluded(&self, class: usize) -> bool {
        self.excluded.contains(&class)
    }

    pub fn all(&self) -> BTreeSet<usize> {
        (0..self.num_classes).collect()
    }
}
