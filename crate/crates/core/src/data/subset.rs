use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// How many training examples per class survive into the limited subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetAmount {
    /// `ceil(fraction * class_size)` per class, `fraction` in `(0, 1]`.
    Fraction(f64),
    PerClass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitedSubsetSpec {
    pub amount: SubsetAmount,
    pub seed: u64,
}

impl LimitedSubsetSpec {
    pub fn validate(&self) -> Result<()> {
        match self.amount {
            SubsetAmount::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::Config(format!(
                "subset fraction must be in (0, 1], got {f}"
            ))),
            SubsetAmount::PerClass(0) => Err(Error::Config("subset per-class count must be positive".into())),
            _ => Ok(()),
        }
    }

    fn count_for(&self, class_size: usize) -> usize {
        match self.amount {
            // The epsilon keeps products such as 0.1 * 30 from rounding up.
            SubsetAmount::Fraction(f) => ((f * class_size as f64) - 1e-9).ceil().max(1.0) as usize,
            SubsetAmount::PerClass(k) => k,
        }
    }
}

/// Dataset indices of the limited training subset, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    pub indices: Vec<usize>,
}

impl Subset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Subset members whose label satisfies `keep`.
    pub fn filter(&self, ds: &Dataset, keep: impl Fn(usize) -> bool) -> Subset {
        Subset {
            indices: self.indices.iter().copied().filter(|&i| keep(ds.labels()[i])).collect(),
        }
    }

    /// Audit listing, one `class_id,example_index` pair per line.
    pub fn to_text(&self, ds: &Dataset) -> String {
        let mut s = String::new();
        for &i in &self.indices {
            s.push_str(&format!("{},{}\n", ds.labels()[i], i));
        }
        s
    }
}

/// Samples the per-class limited subset without replacement.
///
/// Each class is shuffled by its own seeded stream, so the result depends
/// only on the dataset and `spec`.
pub fn build_limited_subset(ds: &Dataset, spec: &LimitedSubsetSpec) -> Result<Subset> {
    spec.validate()?;
    let mut indices = Vec::new();
    for (class, members) in ds.class_indices().into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::InsufficientData(format!("class {class} has no examples")));
        }
        let k = spec.count_for(members.len());
        if k > members.len() {
            return Err(Error::InsufficientData(format!(
                "class {class} has {} examples, {k} requested",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(class as u64);
        let mut shuffled = members;
        shuffled.shuffle(&mut rng);
        indices.extend_from_slice(&shuffled[..k]);
    }
    indices.sort_unstable();
    Ok(Subset { indices })
}
