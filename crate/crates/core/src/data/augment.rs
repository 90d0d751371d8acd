//! Image transforms: the training-time pipeline of the original model and
//! the "unseen" transforms used to probe class-relevant parameters.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label-preserving transforms the original model has not been trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    /// Luminance replicated across the three channels.
    Grayscale,
    VerticalFlip,
    /// Fixed 90 degree counter-clockwise rotation.
    Rotation,
    /// Seeded shear and translation with nearest-neighbor sampling.
    RandomAffine,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 4] = [
        AugmentKind::Grayscale,
        AugmentKind::VerticalFlip,
        AugmentKind::Rotation,
        AugmentKind::RandomAffine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::Grayscale => "grayscale",
            AugmentKind::VerticalFlip => "vertical-flip",
            AugmentKind::Rotation => "rotation",
            AugmentKind::RandomAffine => "random-affine",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "augmentation",
                name: s.to_string(),
            })
    }
}

/// Applies `kind` to every image (NCHW). Fails if the original model saw
/// the same transform during training.
pub fn augment_unseen(
    images: &[f32],
    shape: [usize; 3],
    kind: AugmentKind,
    seed: u64,
    training_augmentations: &[String],
) -> Result<Vec<f32>> {
    if training_augmentations.iter().any(|t| t == kind.name()) {
        return Err(Error::AugmentationConflict(kind.name().into()));
    }
    let [c, h, w] = shape;
    let len = c * h * w;
    if len == 0 || images.len() % len != 0 {
        return Err(Error::InputShape(format!(
            "{} values do not divide into images of shape {shape:?}",
            images.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0f32; images.len()];
    for (src, dst) in images.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
        match kind {
            AugmentKind::Grayscale => {
                if c != 3 {
                    dst.copy_from_slice(src);
                    continue;
                }
                let hw = h * w;
                for p in 0..hw {
                    let (r, g, b) = (src[p] as f64, src[hw + p] as f64, src[2 * hw + p] as f64);
                    let y = (0.299 * r + 0.587 * g + 0.114 * b) as f32;
                    for ch in 0..3 {
                        dst[ch * hw + p] = y;
                    }
                }
            }
            AugmentKind::VerticalFlip => {
                for ch in 0..c {
                    for y in 0..h {
                        let s = &src[(ch * h + (h - 1 - y)) * w..][..w];
                        dst[(ch * h + y) * w..][..w].copy_from_slice(s);
                    }
                }
            }
            AugmentKind::Rotation => rotate_quarter_turns(src, dst, shape, 1)?,
            AugmentKind::RandomAffine => {
                let shear: f64 = rng.gen_range(-0.3..0.3);
                let tx: f64 = rng.gen_range(-3.0..3.0);
                let ty: f64 = rng.gen_range(-3.0..3.0);
                let cy = (h as f64 - 1.0) / 2.0;
                for y in 0..h {
                    for x in 0..w {
                        let sy = y as f64 - ty;
                        let sx = x as f64 - tx - shear * (sy - cy);
                        let (sx, sy) = (sx.round(), sy.round());
                        let valid = sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64;
                        for ch in 0..c {
                            dst[(ch * h + y) * w + x] = if valid {
                                src[(ch * h + sy as usize) * w + sx as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Rotates one image by `turns` quarter turns counter-clockwise.
pub fn rotate_quarter_turns(src: &[f32], dst: &mut [f32], shape: [usize; 3], turns: usize) -> Result<()> {
    let [c, h, w] = shape;
    if h != w {
        return Err(Error::InputShape(format!("rotation needs square images, got {h}x{w}")));
    }
    dst.copy_from_slice(src);
    let mut tmp = src.to_vec();
    for _ in 0..turns % 4 {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    dst[(ch * h + y) * w + x] = tmp[(ch * h + x) * w + (w - 1 - y)];
                }
            }
        }
        tmp.copy_from_slice(dst);
    }
    Ok(())
}

/// Transforms applied while training a model from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainAugment {
    /// Zero-pad by 4 pixels and crop back to the original size.
    RandomCrop,
    HorizontalFlip,
}

impl TrainAugment {
    pub fn name(self) -> &'static str {
        match self {
            TrainAugment::RandomCrop => "random-crop",
            TrainAugment::HorizontalFlip => "horizontal-flip",
        }
    }
}

/// Applies the training pipeline in place to `n` images.
pub fn apply_train_augment(images: &mut [f32], shape: [usize; 3], pipeline: &[TrainAugment], rng: &mut impl Rng) {
    const PAD: i64 = 4;
    let [c, h, w] = shape;
    let len = c * h * w;
    let mut scratch = vec![0f32; len];
    for img in images.chunks_exact_mut(len) {
        for step in pipeline {
            match step {
                TrainAugment::RandomCrop => {
                    let dy = rng.gen_range(-PAD..=PAD);
                    let dx = rng.gen_range(-PAD..=PAD);
                    for ch in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                let (sy, sx) = (y as i64 + dy, x as i64 + dx);
                                scratch[(ch * h + y) * w + x] =
                                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                        img[(ch * h + sy as usize) * w + sx as usize]
                                    } else {
                                        0.0
                                    };
                            }
                        }
                    }
                    img.copy_from_slice(&scratch);
                }
                TrainAugment::HorizontalFlip => {
                    if rng.gen_bool(0.5) {
                        for row in img.chunks_exact_mut(w) {
                            row.reverse();
                        }
                    }
                }
            }
        }
    }
}
