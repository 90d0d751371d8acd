use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::loss::{erwp_objective, KdDirection, LossBreakdown, LossComponents, ObjectiveSpec};
use crate::data::{BatchPlan, Dataset, MiniBatch, Subset};
use crate::error::{Error, Result};
use crate::eval::{Evaluator, MetricTriple};
use crate::model::{BnMode, Grads, ModelPair, Network, Sgd};
use crate::partition::ClassPartition;
use crate::relevance::RelevanceMask;
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnlearnConfig {
    pub beta: f64,
    pub kappa: f64,
    pub lr: f64,
    pub epochs: usize,
    /// `(epoch, lr)` pairs; each rate applies from that zero-based epoch on.
    pub lr_schedule: Vec<(usize, f64)>,
    /// Set by the caller's run seed, never read from a config file.
    #[serde(skip)]
    pub seed: u64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Batch norm during unlearning. `Eval` keeps running statistics frozen.
    pub bn_mode: BnMode,
    pub components: LossComponents,
    pub kd_direction: KdDirection,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            beta: 10.0,
            kappa: 2.0,
            lr: 1e-4,
            epochs: 10,
            lr_schedule: Vec::new(),
            seed: 0,
            batch_size: 64,
            momentum: 0.9,
            bn_mode: BnMode::Eval,
            components: LossComponents::default(),
            kd_direction: KdDirection::default(),
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.lr > 0.0) || self.lr_schedule.iter().any(|&(_, lr)| !(lr > 0.0)) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .filter(|&&(e, _)| e <= epoch)
            .max_by_key(|&&(e, _)| e)
            .map_or(self.lr, |&(_, lr)| lr)
    }

    pub fn objective(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            beta: self.beta,
            kappa: self.kappa,
            components: self.components,
            direction: self.kd_direction,
        }
    }
}

/// Loss and parameter gradients of the unlearning objective for one batch.
/// `teacher_logits` are row-major over the full label set.
pub fn objective_gradients<F: Real>(
    student: &Network<F>,
    teacher_logits: &[f64],
    images: &[F],
    labels: &[usize],
    partition: &ClassPartition,
    spec: &ObjectiveSpec,
    bn: BnMode,
) -> Result<(LossBreakdown, Grads<F>)> {
    let pass = student.forward(images, labels.len(), bn, true)?;
    let logits: Vec<f64> = pass.logits.iter().map(|v| v.to_f64()).collect();
    let (losses, dlogits) = erwp_objective(&logits, teacher_logits, labels, partition, spec)?;
    let dlogits: Vec<F> = dlogits.into_iter().map(F::from_f64).collect();
    Ok((losses, student.backward(&pass, &dlogits)?))
}

fn teacher_logits(pair: &ModelPair, batch: &MiniBatch, cfg: &UnlearnConfig) -> Result<Vec<f64>> {
    if !cfg.components.kd {
        return Ok(vec![0.0; batch.size() * pair.teacher().num_classes()]);
    }
    let t = pair.teacher().forward(&batch.images, batch.size(), BnMode::Eval, false)?;
    Ok(t.logits.iter().map(|&v| f64::from(v)).collect())
}

/// One pass over `batches`, updating only the masked student entries.
pub fn erwp_epoch(
    pair: &mut ModelPair,
    batches: impl IntoIterator<Item = MiniBatch>,
    mask: &RelevanceMask,
    partition: &ClassPartition,
    cfg: &UnlearnConfig,
    opt: &mut Sgd<f32>,
    lr: f64,
) -> Result<Vec<LossBreakdown>> {
    mask.check_layout(pair.student.params())?;
    let spec = cfg.objective();
    let mut out = Vec::new();
    for batch in batches {
        let t = teacher_logits(pair, &batch, cfg)?;
        let pass = pair.student.forward(&batch.images, batch.size(), cfg.bn_mode, true)?;
        let logits: Vec<f64> = pass.logits.iter().map(|&v| f64::from(v)).collect();
        let (losses, dlogits) = erwp_objective(&logits, &t, &batch.labels, partition, &spec)?;
        if !losses.is_finite() {
            return Err(Error::Config(format!("non-finite loss {losses:?}; lower the learning rate")));
        }
        let dlogits: Vec<f32> = dlogits.into_iter().map(|v| v as f32).collect();
        let grads = pair.student.backward(&pass, &dlogits)?;
        opt.step(&mut pair.student, &grads, Some(mask), lr)?;
        if cfg.bn_mode == BnMode::Batch {
            pair.student.commit_bn_stats(&pass);
        }
        out.push(losses);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub losses: Vec<LossBreakdown>,
    pub metrics: Option<MetricTriple>,
}

impl EpochRecord {
    pub fn mean(&self, f: impl Fn(&LossBreakdown) -> f64) -> f64 {
        self.losses.iter().map(f).sum::<f64>() / self.losses.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub student: Network<f32>,
    /// Metrics of the untouched student, when an evaluator was given.
    pub initial: Option<MetricTriple>,
    pub history: Vec<EpochRecord>,
}

impl UnlearnOutcome {
    /// Starting metrics followed by the metrics after every epoch.
    pub fn metric_curve(&self) -> Vec<MetricTriple> {
        self.initial
            .iter()
            .copied()
            .chain(self.history.iter().filter_map(|r| r.metrics))
            .collect()
    }
}

/// Runs `cfg.epochs` epochs over the limited subset, scoring the student
/// after each epoch when `evaluator` is given.
pub fn erwp_run(
    mut pair: ModelPair,
    train: &Dataset,
    subset: &Subset,
    mask: &RelevanceMask,
    partition: &ClassPartition,
    cfg: &UnlearnConfig,
    evaluator: Option<&Evaluator>,
) -> Result<UnlearnOutcome> {
    cfg.validate()?;
    mask.check_layout(pair.student.params())?;
    if partition.num_classes() != pair.student.num_classes() {
        return Err(Error::InvalidPartition(format!(
            "partition has {} classes, model has {}",
            partition.num_classes(),
            pair.student.num_classes()
        )));
    }
    let plan = BatchPlan::new(train, subset, partition, cfg.batch_size, cfg.seed)?;
    let initial = evaluator.map(|e| e.metrics(&pair.student)).transpose()?;
    let mut opt = Sgd::new(cfg.momentum, 0.0);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let losses = erwp_epoch(&mut pair, plan.epoch(epoch), mask, partition, cfg, &mut opt, lr)?;
        let metrics = evaluator.map(|e| e.metrics(&pair.student)).transpose()?;
        log::info!(
            "unlearn epoch {}/{} lr {lr:e} mean total {:.4}{}",
            epoch + 1,
            cfg.epochs,
            losses.iter().map(|l| l.total).sum::<f64>() / losses.len() as f64,
            metrics.map_or(String::new(), |m| format!(
                " FA_e {:.2} FPA_e {:.2} CA_ne {:.2}",
                m.fa_e, m.fpa_e, m.ca_ne
            ))
        );
        history.push(EpochRecord {
            epoch,
            lr,
            losses,
            metrics,
        });
    }
    Ok(UnlearnOutcome {
        student: pair.into_student(),
        initial,
        history,
    })
}

/// `epoch,batch,l_c_e,l_c_ne,l_kd_e,l_kd_ne,total`, one row per batch.
pub fn loss_history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,batch,l_c_e,l_c_ne,l_kd_e,l_kd_ne,total\n");
    for r in history {
        for (b, l) in r.losses.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{b},{},{},{},{},{}",
                r.epoch, l.l_c_e, l.l_c_ne, l.l_kd_e, l.l_kd_ne, l.total
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_drops_from_its_epoch_on() {
        let cfg = UnlearnConfig {
            lr: 1.1e-4,
            lr_schedule: vec![(2, 1.1e-5)],
            ..Default::default()
        };
        assert_eq!(cfg.lr_at(0), 1.1e-4);
        assert_eq!(cfg.lr_at(1), 1.1e-4);
        assert_eq!(cfg.lr_at(2), 1.1e-5);
        assert_eq!(cfg.lr_at(9), 1.1e-5);
    }

    #[test]
    fn defaults() {
        let cfg = UnlearnConfig::default();
        assert_eq!((cfg.beta, cfg.kappa, cfg.lr, cfg.epochs), (10.0, 2.0, 1e-4, 10));
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for cfg in [
            UnlearnConfig { kappa: 0.0, ..Default::default() },
            UnlearnConfig { beta: -1.0, ..Default::default() },
            UnlearnConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }
}
