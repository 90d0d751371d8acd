//! Named network architectures selectable from configuration.

use super::network::{Network, NetworkBuilder};
use crate::error::{Error, Result};

pub trait Architecture: Send + Sync {
    fn id(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// `[channels, height, width]`.
    fn input_shape(&self) -> [usize; 3];

    fn build(&self, num_classes: usize, seed: u64) -> Network<f32>;
}

/// Three bias-free conv/batch-norm stages, max pooling after the first two,
/// global average pooling and a linear head. About 54k parameters for ten
/// classes.
pub struct SmallCnn;

impl Architecture for SmallCnn {
    fn id(&self) -> &'static str {
        "small-cnn"
    }

    fn description(&self) -> &'static str {
        "3x32x32 input, conv24-conv48-conv96 with batch-norm, pooling, global average pooling, linear head"
    }

    fn input_shape(&self) -> [usize; 3] {
        [3, 32, 32]
    }

    fn build(&self, num_classes: usize, seed: u64) -> Network<f32> {
        NetworkBuilder::new(self.id(), self.input_shape(), seed)
            .conv_unbiased("conv1", 24)
            .batch_norm("bn1")
            .relu()
            .max_pool()
            .conv_unbiased("conv2", 48)
            .batch_norm("bn2")
            .relu()
            .max_pool()
            .conv_unbiased("conv3", 96)
            .batch_norm("bn3")
            .relu()
            .global_avg_pool()
            .head(num_classes)
    }
}

/// Every layer type on a 1x4x4 input, under 100 parameters for up to five
/// classes. Used for gradient checks.
pub struct MicroCnn;

impl Architecture for MicroCnn {
    fn id(&self) -> &'static str {
        "micro-cnn"
    }

    fn description(&self) -> &'static str {
        "1x4x4 input, conv2 with batch-norm and pooling, fc4, linear head"
    }

    fn input_shape(&self) -> [usize; 3] {
        [1, 4, 4]
    }

    fn build(&self, num_classes: usize, seed: u64) -> Network<f32> {
        NetworkBuilder::new(self.id(), self.input_shape(), seed)
            .conv("conv1", 2)
            .batch_norm("bn1")
            .relu()
            .max_pool()
            .flatten()
            .linear("fc1", 4)
            .relu()
            .head(num_classes)
    }
}

pub struct ArchRegistry {
    entries: Vec<Box<dyn Architecture>>,
}

impl ArchRegistry {
    pub fn empty() -> Self {
        ArchRegistry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SmallCnn));
        r.register(Box::new(MicroCnn));
        r
    }

    /// Later registrations shadow earlier ones with the same id.
    pub fn register(&mut self, arch: Box<dyn Architecture>) {
        self.entries.retain(|a| a.id() != arch.id());
        self.entries.push(arch);
    }

    pub fn get(&self, id: &str) -> Result<&dyn Architecture> {
        self.entries
            .iter()
            .find(|a| a.id() == id)
            .map(|a| a.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "architecture",
                name: id.to_string(),
            })
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.entries.iter().map(|a| a.id()).collect()
    }
}
