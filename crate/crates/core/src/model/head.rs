use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// State of the classification head beyond its weights.
///
/// `deleted` classes were removed from the head and can never be predicted.
/// `merged_slot` marks a head row that was repurposed as a single catch-all
/// label for several removed classes; a prediction there is never counted
/// as correct for any original class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayout {
    pub deleted: BTreeSet<usize>,
    pub merged_slot: Option<usize>,
}

impl HeadLayout {
    pub fn is_active(&self, class: usize) -> bool {
        !self.deleted.contains(&class)
    }

    /// Active-class flags for a head with `num_classes` outputs.
    pub fn active_flags(&self, num_classes: usize) -> Vec<bool> {
        (0..num_classes).map(|c| self.is_active(c)).collect()
    }

    /// Argmax over the active classes; ties resolve to the lowest id.
    pub fn predict<F: crate::tensor::Real>(&self, logits: &[F]) -> usize {
        argmax_where(logits, |c| self.is_active(c))
    }

    /// Whether predicting `pred` counts as a hit for `label`.
    pub fn is_hit(&self, pred: usize, label: usize) -> bool {
        pred == label && self.merged_slot != Some(pred)
    }
}

pub(crate) fn argmax_where<F: crate::tensor::Real>(
    values: &[F],
    allowed: impl Fn(usize) -> bool,
) -> usize {
    let mut best: Option<(usize, F)> = None;
    for (i, &v) in values.iter().enumerate() {
        if !allowed(i) {
            continue;
        }
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}
