//! Supervised training: the original model and the retraining baselines.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_train_augment, BatchPlan, Dataset, Subset, TrainAugment};
use crate::erwp::loss::{cross_entropy, kl_student_teacher};
use crate::error::{Error, Result};
use crate::model::{BnMode, Network, Sgd};
use crate::partition::ClassPartition;

/// Metadata key listing the augmentations a model was trained with.
pub const TRAIN_AUGMENT_KEY: &str = "train_augment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Zero-based epochs after which the rate is multiplied by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub augment: Vec<TrainAugment>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.1,
            milestones: vec![9, 15, 21, 24, 27],
            gamma: 0.2,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 64,
            augment: vec![TrainAugment::RandomCrop, TrainAugment::HorizontalFlip],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Config("training lr and gamma must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("momentum must be in [0, 1) and weight decay non-negative".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * self.gamma.powi(drops as i32)
    }

    pub fn augment_names(&self) -> String {
        self.augment.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")
    }
}

/// Distillation toward a fixed model's logits on a class slice.
#[derive(Debug, Clone, Copy)]
pub struct Distill<'a> {
    pub teacher: &'a Network<f32>,
    pub classes: &'a BTreeSet<usize>,
    pub beta: f64,
    pub kappa: f64,
}

/// What the student is fitted to.
#[derive(Debug, Clone, Default)]
pub struct Target<'a> {
    /// Training label for every dataset label; identity when absent.
    pub label_map: Option<Vec<usize>>,
    pub distill: Option<Distill<'a>>,
}

/// Mean loss of one batch and its logit gradient. Cross-entropy spans the
/// head's active classes only.
fn batch_objective(
    logits: &[f64],
    teacher: Option<&[f64]>,
    labels: &[usize],
    active: &[bool],
    distill: Option<&Distill>,
) -> (f64, Vec<f64>) {
    let c = active.len();
    let inv = 1.0 / labels.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits[i * c..(i + 1) * c];
        let (ce, d) = cross_entropy(row, y, Some(active));
        total += ce * inv;
        for (k, dk) in d.into_iter().enumerate() {
            if active[k] {
                grad[i * c + k] += dk * inv;
            }
        }
        if let (Some(kd), Some(t)) = (distill, teacher) {
            let ids: Vec<usize> = kd.classes.iter().copied().collect();
            let s: Vec<f64> = ids.iter().map(|&k| row[k]).collect();
            let tt: Vec<f64> = ids.iter().map(|&k| t[i * c + k]).collect();
            let (kl, dkl) = kl_student_teacher(&s, &tt, kd.kappa);
            total += kd.beta * kl * inv;
            for (&k, d) in ids.iter().zip(dkl) {
                grad[i * c + k] += kd.beta * d * inv;
            }
        }
    }
    (total, grad)
}

/// Trains every parameter of `net` on `subset` with SGD and batch-statistic
/// batch norm. Returns the mean loss of each epoch.
pub fn train_supervised(
    net: &mut Network<f32>,
    ds: &Dataset,
    subset: &Subset,
    partition: &ClassPartition,
    cfg: &TrainConfig,
    target: &Target,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let c = net.num_classes();
    if let Some(map) = &target.label_map {
        if map.len() != ds.num_classes() || map.iter().any(|&m| m >= c) {
            return Err(Error::Spec("label map does not fit the head".into()));
        }
    }
    let distill = target.distill.filter(|d| d.beta != 0.0);
    let plan = BatchPlan::new(ds, subset, partition, cfg.batch_size, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let (mut sum, mut batches) = (0.0, 0usize);
        for mut batch in plan.epoch(epoch) {
            let n = batch.size();
            apply_train_augment(&mut batch.images, ds.shape(), &cfg.augment, &mut rng);
            let labels: Vec<usize> = match &target.label_map {
                Some(map) => batch.labels.iter().map(|&l| map[l]).collect(),
                None => batch.labels.clone(),
            };
            let teacher = distill
                .map(|d| d.teacher.forward(&batch.images, n, BnMode::Eval, false))
                .transpose()?
                .map(|p| p.logits.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>());
            let active = net.head.active_flags(c);
            let pass = net.forward(&batch.images, n, BnMode::Batch, true)?;
            let logits: Vec<f64> = pass.logits.iter().map(|&v| f64::from(v)).collect();
            let (loss, dlogits) = batch_objective(&logits, teacher.as_deref(), &labels, &active, distill.as_ref());
            if !loss.is_finite() {
                return Err(Error::Config(format!("training diverged at epoch {epoch}")));
            }
            let dlogits: Vec<f32> = dlogits.into_iter().map(|v| v as f32).collect();
            let grads = net.backward(&pass, &dlogits)?;
            opt.step(net, &grads, None, lr)?;
            net.commit_bn_stats(&pass);
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::info!("train epoch {}/{} lr {lr:e} loss {mean:.4}", epoch + 1, cfg.epochs);
        history.push(mean);
    }
    Ok(history)
}

/// Trains a freshly initialized `net` on every example of `ds` and records
/// the training augmentations in its metadata.
pub fn train_original(net: &mut Network<f32>, ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Vec<f64>> {
    let all = Subset {
        indices: (0..ds.len()).collect(),
    };
    let partition = ClassPartition::new(ds.num_classes(), [])?;
    let history = train_supervised(net, ds, &all, &partition, cfg, &Target::default(), seed)?;
    net.meta.insert(TRAIN_AUGMENT_KEY.into(), cfg.augment_names());
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 0.1);
        assert_eq!(cfg.lr_at(8), 0.1);
        assert!((cfg.lr_at(9) - 0.02).abs() < 1e-15);
        assert!((cfg.lr_at(29) - 0.1 * 0.2f64.powi(5)).abs() < 1e-15);
    }

    #[test]
    fn inactive_classes_get_no_gradient() {
        let active = [true, false, true];
        let (_, g) = batch_objective(&[1.0, 5.0, 0.0], None, &[0], &active, None);
        assert_eq!(g[1], 0.0);
        assert!((g[0] + g[2]).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_distillation_changes_nothing() {
        let teacher = [3.0, -1.0, 0.0];
        let classes = BTreeSet::from([0, 1]);
        let net = crate::model::NetworkBuilder::new("t", [1, 1, 1], 0).flatten().head(3);
        let kd = Distill {
            teacher: &net,
            classes: &classes,
            beta: 0.0,
            kappa: 2.0,
        };
        let plain = batch_objective(&[0.5, 0.2, -0.1], None, &[1], &[true; 3], None);
        let with = batch_objective(&[0.5, 0.2, -0.1], Some(&teacher), &[1], &[true; 3], Some(&kd));
        assert_eq!(plain, with);
    }
}
