//! Datasets, the limited training subset, augmentations and batching.

mod augment;
mod batch;
mod dataset;
mod dir;
mod subset;
pub mod synth;

pub use augment::{apply_train_augment, augment_unseen, rotate_quarter_turns, AugmentKind, TrainAugment};
pub use batch::{BatchPlan, MiniBatch};
pub use dataset::Dataset;
pub use dir::{export_split, load_split};
pub use subset::{build_limited_subset, LimitedSubsetSpec, Subset, SubsetAmount};
