use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use super::subset::Subset;
use crate::error::{Error, Result};
use crate::partition::ClassPartition;

/// A mini-batch drawn from the limited subset, with each example flagged as
/// excluded-class or remaining-class.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    /// NCHW pixels of all examples.
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
    pub excluded: Vec<bool>,
}

impl MiniBatch {
    pub fn from_indices(ds: &Dataset, partition: &ClassPartition, indices: Vec<usize>) -> Self {
        let labels = ds.gather_labels(&indices);
        MiniBatch {
            images: ds.gather(&indices),
            excluded: labels.iter().map(|&l| partition.is_excluded(l)).collect(),
            labels,
            indices,
        }
    }

    /// S.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// S_e.
    pub fn n_excluded(&self) -> usize {
        self.excluded.iter().filter(|&&e| e).count()
    }

    /// S_ne.
    pub fn n_remaining(&self) -> usize {
        self.size() - self.n_excluded()
    }
}

/// Seeded epoch-wise shuffling over a fixed set of examples.
pub struct BatchPlan<'a> {
    dataset: &'a Dataset,
    partition: &'a ClassPartition,
    indices: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl<'a> BatchPlan<'a> {
    pub fn new(
        dataset: &'a Dataset,
        subset: &Subset,
        partition: &'a ClassPartition,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if subset.is_empty() {
            return Err(Error::InsufficientData("no examples to batch".into()));
        }
        Ok(BatchPlan {
            dataset,
            partition,
            indices: subset.indices.clone(),
            batch_size,
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.indices.len().div_ceil(self.batch_size)
    }

    pub fn num_examples(&self) -> usize {
        self.indices.len()
    }

    /// The batches of epoch `epoch`; every example appears exactly once.
    pub fn epoch(&self, epoch: usize) -> impl Iterator<Item = MiniBatch> + '_ {
        let mut order = self.indices.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let chunks: Vec<Vec<usize>> = order.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        chunks
            .into_iter()
            .map(move |idx| MiniBatch::from_indices(self.dataset, self.partition, idx))
    }
}
