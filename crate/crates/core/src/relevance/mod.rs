//! Finding the parameters that matter for a class.

mod mask;
mod saliency;
mod search;

pub use mask::{union_masks, LayerSelection, MaskHeader, RelevanceMask};
pub use saliency::{class_gradient_saliency, mean_prediction_loss, training_augmentations, SaliencyMap};
pub use search::{
    ablate_high_low, class_accuracy, search_prefix, select_relevant_params, PrefixChoice, RelevanceSearchConfig,
};

use crate::data::{augment_unseen, AugmentKind};
use crate::error::Result;
use crate::model::Network;

/// Saliency seed for one class, derived from the run seed.
pub fn class_seed(seed: u64, class_id: usize) -> u64 {
    seed.wrapping_add(class_id as u64)
}

/// Relevant parameters of a single class: saliency on augmented images,
/// then the per-tensor search on the same augmented images.
pub fn identify_class(
    model: &Network<f32>,
    class_images: &[f32],
    class_id: usize,
    augmentation: AugmentKind,
    cfg: &RelevanceSearchConfig,
    seed: u64,
) -> Result<(SaliencyMap, RelevanceMask)> {
    let s = class_seed(seed, class_id);
    let saliency = class_gradient_saliency(model, class_images, class_id, Some(augmentation), s)?;
    let augmented = augment_unseen(
        class_images,
        model.input_shape(),
        augmentation,
        s,
        &training_augmentations(model),
    )?;
    let mask = select_relevant_params(model, &saliency, cfg, &augmented)?;
    Ok((saliency, mask))
}

/// Union of the per-class masks. With no classes the mask selects nothing.
pub fn identify_classes(
    model: &Network<f32>,
    classes: &[(usize, Vec<f32>)],
    augmentation: AugmentKind,
    cfg: &RelevanceSearchConfig,
    seed: u64,
) -> Result<RelevanceMask> {
    cfg.validate()?;
    if classes.is_empty() {
        let mut m = RelevanceMask::none(model.params());
        m.header = MaskHeader {
            arch: model.arch().to_string(),
            threshold: cfg.threshold,
            init_fraction: cfg.init_fraction,
            augmentation: augmentation.name().to_string(),
            meta: Default::default(),
        };
        return Ok(m);
    }
    let masks = classes
        .iter()
        .map(|(c, imgs)| identify_class(model, imgs, *c, augmentation, cfg, seed).map(|(_, m)| m))
        .collect::<Result<Vec<_>>>()?;
    union_masks(&masks)
}
