use serde::{Deserialize, Serialize};

use super::mask::{LayerSelection, MaskHeader, RelevanceMask};
use super::saliency::SaliencyMap;
use crate::error::{Error, Result};
use crate::model::{zero_params, Network};
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelevanceSearchConfig {
    /// Share of each tensor zeroed on the first probe.
    pub init_fraction: f64,
    /// A prefix is relevant once class accuracy (a fraction) falls below this.
    pub threshold: f64,
}

impl Default for RelevanceSearchConfig {
    fn default() -> Self {
        RelevanceSearchConfig {
            init_fraction: 0.2,
            threshold: 0.1,
        }
    }
}

impl RelevanceSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "relevance init_fraction must be in (0, 1], got {}",
                self.init_fraction
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "relevance threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn initial_count(&self, n: usize) -> usize {
        ((self.init_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
    }
}

/// Share of `images` (all of class `class_id`) that the head classifies as
/// `class_id`.
pub fn class_accuracy<F: Real>(model: &Network<F>, images: &[F], class_id: usize) -> Result<f64> {
    let n = images.len() / model.input_len().max(1);
    if n == 0 {
        return Err(Error::InsufficientData(format!("no images for class {class_id}")));
    }
    let preds = model.predict(images, n)?;
    let hits = preds.iter().filter(|&&p| model.head.is_hit(p, class_id)).count();
    Ok(hits as f64 / n as f64)
}

/// Outcome of probing one tensor: how many of its most salient entries to
/// take and whether even the whole tensor failed to break the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefixChoice {
    pub count: usize,
    pub saturated: bool,
}

/// Doubling then bisection over prefix sizes of `order`. `breaks(k)` tells
/// whether zeroing the first `k` entries drops accuracy below threshold.
pub fn search_prefix(
    n: usize,
    init: usize,
    already_broken: bool,
    mut breaks: impl FnMut(usize) -> Result<bool>,
) -> Result<PrefixChoice> {
    if n == 0 {
        return Ok(PrefixChoice {
            count: 0,
            saturated: true,
        });
    }
    if already_broken {
        return Ok(PrefixChoice {
            count: init,
            saturated: false,
        });
    }
    let mut k = init;
    let mut lo = None;
    let hi = loop {
        if breaks(k)? {
            break k;
        }
        if k == n {
            return Ok(PrefixChoice {
                count: n,
                saturated: true,
            });
        }
        lo = Some(k);
        k = (2 * k).min(n);
    };
    let Some(mut lo) = lo else {
        return Ok(PrefixChoice {
            count: hi,
            saturated: false,
        });
    };
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if breaks(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(PrefixChoice {
        count: hi,
        saturated: false,
    })
}

/// Per-tensor relevance search for the class the saliency map was computed
/// for. Every tensor is probed with all others intact. The head row and
/// bias of the class are always selected. `eval_images` are the class's
/// augmented limited images; `model` is left untouched.
pub fn select_relevant_params<F: Real>(
    model: &Network<F>,
    saliency: &SaliencyMap,
    cfg: &RelevanceSearchConfig,
    eval_images: &[F],
) -> Result<RelevanceMask> {
    cfg.validate()?;
    saliency.check_layout(model)?;
    let class_id = saliency.class_id;
    let base = class_accuracy(model, eval_images, class_id)?;
    let already_broken = base < cfg.threshold;
    let mut scratch = model.clone();
    let mut mask = RelevanceMask::none(model.params());
    mask.header = MaskHeader {
        arch: model.arch().to_string(),
        threshold: cfg.threshold,
        init_fraction: cfg.init_fraction,
        augmentation: saliency.augmentation.map_or("none".into(), |a| a.name().to_string()),
        meta: Default::default(),
    };

    for t in 0..model.params().len() {
        let original = model.params().tensor(t).data();
        let n = original.len();
        let order = saliency.order(t);
        let choice = search_prefix(n, cfg.initial_count(n), already_broken, |k| {
            let data = scratch.param_data_mut(t);
            data.copy_from_slice(original);
            for &j in &order[..k] {
                data[j] = F::ZERO;
            }
            Ok(class_accuracy(&scratch, eval_images, class_id)? < cfg.threshold)
        })?;
        scratch.param_data_mut(t).copy_from_slice(original);
        let bits = mask.tensor_mut(t);
        for &j in &order[..choice.count] {
            bits[j] = true;
        }
        mask.provenance.push(LayerSelection {
            class_id,
            tensor: model.params().name(t).to_string(),
            selected: choice.count,
            total: n,
            saturated: choice.saturated,
        });
    }

    let (w, b) = model.head_indices();
    let d = model.feature_dim();
    mask.tensor_mut(w)[class_id * d..(class_id + 1) * d].fill(true);
    mask.tensor_mut(b)[class_id] = true;
    Ok(mask)
}

/// Class accuracy after zeroing the `k` globally most salient parameters,
/// and after zeroing the `k` least salient ones.
pub fn ablate_high_low<F: Real>(
    model: &Network<F>,
    saliency: &SaliencyMap,
    k: usize,
    images: &[F],
) -> Result<(f64, f64)> {
    saliency.check_layout(model)?;
    let order = saliency.global_order();
    if k > order.len() {
        return Err(Error::InputShape(format!(
            "cannot zero {k} of {} parameters",
            order.len()
        )));
    }
    let measure = |picked: &[(usize, usize)]| -> Result<f64> {
        let mut mask = RelevanceMask::none(model.params());
        for &(t, j) in picked {
            mask.tensor_mut(t)[j] = true;
        }
        class_accuracy(&zero_params(model, &mask)?, images, saliency.class_id)
    };
    let high = measure(&order[..k])?;
    let low = measure(&order[order.len() - k..])?;
    Ok((high, low))
}
