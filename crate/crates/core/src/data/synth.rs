//! Procedural ten-class image set used for desk-scale experiments.
//!
//! Each class is a shape drawn at a random position, scale and rotation on
//! a cluttered, noisy background. A fraction of the instances use the
//! class's own hue; the rest use a random hue, so color is a useful but
//! unreliable cue. Pixel values are quantized to 8 bits so that the set
//! survives a PNG round trip unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::Result;

pub const SHAPES: [&str; 10] = [
    "disk", "square", "ring", "plus", "triangle", "hbars", "vbars", "cross", "diamond", "dots",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
    /// Probability that an instance uses its class hue.
    pub color_fidelity: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_per_class: 500,
            test_per_class: 100,
            seed: 0,
            color_fidelity: 0.2,
            noise: 0.25,
        }
    }
}

const SIZE: usize = 32;

fn inside(shape: usize, u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    let box_ = u.abs() < 0.85 && v.abs() < 0.85;
    match shape {
        0 => r < 0.8,
        1 => u.abs().max(v.abs()) < 0.68,
        2 => (0.5..0.85).contains(&r),
        3 => (u.abs() < 0.25 && v.abs() < 0.85) || (v.abs() < 0.25 && u.abs() < 0.85),
        4 => {
            let up = -v;
            up > -0.6 && up < 0.8 && u.abs() < (0.8 - up) * 0.6
        }
        5 => box_ && ((v + 1.0) * 2.5).rem_euclid(2.0) < 1.0,
        6 => box_ && ((u + 1.0) * 2.5).rem_euclid(2.0) < 1.0,
        7 => box_ && ((u - v).abs() < 0.3 || (u + v).abs() < 0.3),
        8 => u.abs() + v.abs() < 0.85,
        _ => ((u - 0.45).powi(2) + v * v).sqrt() < 0.32 || ((u + 0.45).powi(2) + v * v).sqrt() < 0.32,
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor() as i32;
    let f = h - i as f64;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn render(class: usize, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let noise = Normal::new(0.0, spec.noise.max(1e-12)).unwrap();
    let mut img = vec![[0.0f64; 3]; SIZE * SIZE];

    // Background: a dim two-color gradient.
    let c0 = hsv(rng.gen(), rng.gen_range(0.0..0.5), rng.gen_range(0.15..0.55));
    let c1 = hsv(rng.gen(), rng.gen_range(0.0..0.5), rng.gen_range(0.15..0.55));
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (ga, gb) = (angle.cos(), angle.sin());
    for y in 0..SIZE {
        for x in 0..SIZE {
            let t = 0.5 + ((x as f64 / 31.0 - 0.5) * ga + (y as f64 / 31.0 - 0.5) * gb) * 0.7;
            let px = &mut img[y * SIZE + x];
            for ch in 0..3 {
                px[ch] = c0[ch] * (1.0 - t) + c1[ch] * t;
            }
        }
    }

    // Clutter: a few small faint blobs.
    for _ in 0..rng.gen_range(1..4) {
        let (cx, cy) = (rng.gen_range(0.0..32.0), rng.gen_range(0.0..32.0));
        let rad: f64 = rng.gen_range(1.5..4.0);
        let col = hsv(rng.gen(), rng.gen_range(0.2..0.8), rng.gen_range(0.3..0.8));
        let alpha = rng.gen_range(0.3..0.7);
        for y in 0..SIZE {
            for x in 0..SIZE {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < rad {
                    let px = &mut img[y * SIZE + x];
                    for ch in 0..3 {
                        px[ch] = px[ch] * (1.0 - alpha) + col[ch] * alpha;
                    }
                }
            }
        }
    }

    // Foreground object.
    let hue = if rng.gen_bool(spec.color_fidelity) {
        class as f64 / 10.0 + rng.gen_range(-0.03..0.03)
    } else {
        rng.gen()
    };
    let fg = hsv(hue, rng.gen_range(0.0..1.0), rng.gen_range(0.65..1.0));
    let scale = rng.gen_range(7.0..12.0);
    let (cx, cy) = (16.0 + rng.gen_range(-5.0..5.0), 16.0 + rng.gen_range(-5.0..5.0));
    let rot: f64 = rng.gen_range(-0.3..0.3);
    let (cr, sr) = (rot.cos(), rot.sin());
    for y in 0..SIZE {
        for x in 0..SIZE {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / scale, (y as f64 + 0.5 - cy) / scale);
            let (u, v) = (cr * dx + sr * dy, -sr * dx + cr * dy);
            if inside(class, u, v) {
                img[y * SIZE + x] = fg;
            }
        }
    }

    let mut out = vec![0f32; 3 * SIZE * SIZE];
    for (p, px) in img.iter().enumerate() {
        for ch in 0..3 {
            let v = (px[ch] + noise.sample(rng)).clamp(0.0, 1.0);
            out[ch * SIZE * SIZE + p] = ((v * 255.0).round() / 255.0) as f32;
        }
    }
    out
}

fn build(spec: &SynthSpec, per_class: usize, stream: u64) -> Result<Dataset> {
    let mut images = Vec::with_capacity(10 * per_class * 3 * SIZE * SIZE);
    let mut labels = Vec::with_capacity(10 * per_class);
    for class in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream * 16 + class as u64);
        for _ in 0..per_class {
            images.extend(render(class, spec, &mut rng));
            labels.push(class);
        }
    }
    let names = SHAPES.iter().enumerate().map(|(i, s)| format!("{i:02}-{s}")).collect();
    Dataset::new([3, SIZE, SIZE], names, images, labels)
}

/// `(train, test)` splits drawn from disjoint random streams.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    Ok((build(spec, spec.train_per_class, 1)?, build(spec, spec.test_per_class, 2)?))
}
