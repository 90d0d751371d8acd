//! Reference methods run under the same protocol as ERwP, behind one
//! [`Unlearner`] interface.

mod table;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use table::{compare_table, ComparisonTable, MethodGroup};

use crate::data::{Dataset, Subset};
use crate::erwp::{erwp_run, UnlearnConfig};
use crate::error::{Error, Result};
use crate::eval::{Evaluator, MetricTriple};
use crate::model::{Architecture, ModelPair, Network};
use crate::partition::ClassPartition;
use crate::relevance::RelevanceMask;
use crate::train::{train_supervised, Distill, Target, TrainConfig};

/// Everything a method may draw on.
pub struct UnlearnContext<'a> {
    pub original: &'a Network<f32>,
    pub arch: &'a dyn Architecture,
    pub train: &'a Dataset,
    pub subset: &'a Subset,
    pub partition: &'a ClassPartition,
    pub unlearn: &'a UnlearnConfig,
    /// Schedule of the original model, reused by the full-schedule methods.
    pub train_cfg: &'a TrainConfig,
    pub mask: Option<&'a RelevanceMask>,
    pub evaluator: Option<&'a Evaluator<'a>>,
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub model: Network<f32>,
    /// Starting metrics then one entry per epoch; empty when not tracked.
    pub per_epoch: Vec<MetricTriple>,
    pub meta: BTreeMap<String, String>,
}

impl MethodOutput {
    fn plain(model: Network<f32>) -> Self {
        MethodOutput {
            model,
            per_epoch: Vec::new(),
            meta: BTreeMap::new(),
        }
    }
}

pub trait Unlearner: Send + Sync {
    fn id(&self) -> &str;

    fn group(&self) -> MethodGroup;

    fn run(&self, ctx: &UnlearnContext) -> Result<MethodOutput>;
}

pub struct Erwp;

impl Unlearner for Erwp {
    fn id(&self) -> &str {
        "ERwP"
    }

    fn group(&self) -> MethodGroup {
        MethodGroup::Proposed
    }

    fn run(&self, ctx: &UnlearnContext) -> Result<MethodOutput> {
        let mask = ctx
            .mask
            .ok_or_else(|| Error::Mask("ERwP needs a relevance mask".into()))?;
        let out = erwp_run(
            ModelPair::from_original(ctx.original),
            ctx.train,
            ctx.subset,
            mask,
            ctx.partition,
            ctx.unlearn,
            ctx.evaluator,
        )?;
        let per_epoch = out.metric_curve();
        let mut o = MethodOutput::plain(out.student);
        o.per_epoch = per_epoch;
        o.meta.insert("mask_selected".into(), mask.count().to_string());
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Random,
    OriginalWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    NoTraining,
    FullTrain,
    FineTune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataScope {
    None,
    RemainingOnly,
    AllWithMergedExcluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub id: &'static str,
    pub init: Init,
    pub schedule: Schedule,
    pub uses_kd: bool,
    pub data_scope: DataScope,
}

const fn spec(id: &'static str, init: Init, schedule: Schedule, uses_kd: bool, data_scope: DataScope) -> BaselineSpec {
    BaselineSpec {
        id,
        init,
        schedule,
        uses_kd,
        data_scope,
    }
}

/// The nine reference baselines in table order.
pub const BASELINES: [BaselineSpec; 9] = [
    spec("WD", Init::OriginalWeights, Schedule::NoTraining, false, DataScope::None),
    spec("TSLNRC", Init::Random, Schedule::FullTrain, false, DataScope::RemainingOnly),
    spec("TSLNRC-KD", Init::Random, Schedule::FullTrain, true, DataScope::RemainingOnly),
    spec("TOLNRC", Init::OriginalWeights, Schedule::FullTrain, false, DataScope::RemainingOnly),
    spec("TOLNRC-KD", Init::OriginalWeights, Schedule::FullTrain, true, DataScope::RemainingOnly),
    spec("FOLMRCSC", Init::OriginalWeights, Schedule::FineTune, false, DataScope::AllWithMergedExcluded),
    spec("FOLMRCSC-KD", Init::OriginalWeights, Schedule::FineTune, true, DataScope::AllWithMergedExcluded),
    spec("FOLNRC", Init::OriginalWeights, Schedule::FineTune, false, DataScope::RemainingOnly),
    spec("FOLNRC-KD", Init::OriginalWeights, Schedule::FineTune, true, DataScope::RemainingOnly),
];

impl BaselineSpec {
    pub fn by_id(id: &str) -> Result<BaselineSpec> {
        BASELINES.iter().copied().find(|s| s.id == id).ok_or_else(|| Error::Unknown {
            kind: "baseline",
            name: id.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.schedule {
            Schedule::NoTraining => self.init == Init::OriginalWeights && !self.uses_kd && self.data_scope == DataScope::None,
            Schedule::FullTrain => self.data_scope == DataScope::RemainingOnly,
            Schedule::FineTune => self.init == Init::OriginalWeights && self.data_scope != DataScope::None,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Spec(format!("inconsistent baseline {self:?}")))
        }
    }

    pub fn group(&self) -> MethodGroup {
        match self.schedule {
            Schedule::NoTraining => MethodGroup::NoTraining,
            Schedule::FullTrain => MethodGroup::FullTrainSchedule,
            Schedule::FineTune => MethodGroup::FineTuning,
        }
    }
}

/// Zeroes the head rows and biases of `classes`.
fn zero_head_rows(net: &mut Network<f32>, classes: &BTreeSet<usize>) {
    let (w, b) = net.head_indices();
    let d = net.feature_dim();
    for &c in classes {
        net.param_data_mut(w)[c * d..(c + 1) * d].fill(0.0);
        net.param_data_mut(b)[c] = 0.0;
    }
}

/// Removes the excluded classes from the head; only head tensors change.
pub fn weight_deletion(original: &Network<f32>, partition: &ClassPartition) -> Network<f32> {
    let mut net = original.clone();
    zero_head_rows(&mut net, partition.excluded());
    net.head.deleted.extend(partition.excluded().iter().copied());
    net
}

/// Label map sending every excluded class to `slot` and the rest to
/// themselves.
pub fn merged_label_map(partition: &ClassPartition, slot: usize) -> Vec<usize> {
    (0..partition.num_classes())
        .map(|c| if partition.is_excluded(c) { slot } else { c })
        .collect()
}

/// Seed of the fresh initialization used by random-init baselines. Never
/// equal to the original's.
pub fn fresh_init_seed(original_seed: u64, run_seed: u64) -> u64 {
    let s = original_seed.wrapping_add(1).wrapping_add(run_seed.wrapping_mul(0x9e37_79b9));
    if s == original_seed {
        s ^ 1
    } else {
        s
    }
}

fn fine_tune_config(u: &UnlearnConfig) -> TrainConfig {
    TrainConfig {
        epochs: u.epochs,
        lr: u.lr,
        milestones: Vec::new(),
        gamma: 1.0,
        momentum: u.momentum,
        weight_decay: 0.0,
        batch_size: u.batch_size,
        augment: Vec::new(),
    }
}

pub struct Baseline(pub BaselineSpec);

impl Unlearner for Baseline {
    fn id(&self) -> &str {
        self.0.id
    }

    fn group(&self) -> MethodGroup {
        self.0.group()
    }

    fn run(&self, ctx: &UnlearnContext) -> Result<MethodOutput> {
        let s = &self.0;
        s.validate()?;
        if s.schedule == Schedule::NoTraining {
            return Ok(MethodOutput::plain(weight_deletion(ctx.original, ctx.partition)));
        }
        let mut meta = BTreeMap::new();
        let mut net = match s.init {
            Init::OriginalWeights => ctx.original.clone(),
            Init::Random => {
                let seed = fresh_init_seed(ctx.original.seed, ctx.unlearn.seed);
                meta.insert("init_seed".into(), seed.to_string());
                ctx.arch.build(ctx.original.num_classes(), seed)
            }
        };
        net.meta = ctx.original.meta.clone();
        let (subset, label_map) = match s.data_scope {
            DataScope::RemainingOnly => (ctx.subset.filter(ctx.train, |l| !ctx.partition.is_excluded(l)), None),
            DataScope::AllWithMergedExcluded => {
                let slot = *ctx
                    .partition
                    .excluded()
                    .first()
                    .ok_or_else(|| Error::InvalidPartition("merging needs an excluded class".into()))?;
                zero_head_rows(&mut net, ctx.partition.excluded());
                net.head.deleted.extend(ctx.partition.excluded().iter().copied().filter(|&c| c != slot));
                net.head.merged_slot = Some(slot);
                meta.insert("merged_slot".into(), slot.to_string());
                (ctx.subset.clone(), Some(merged_label_map(ctx.partition, slot)))
            }
            DataScope::None => unreachable!("validated"),
        };
        let cfg = match s.schedule {
            Schedule::FullTrain => ctx.train_cfg.clone(),
            _ => fine_tune_config(ctx.unlearn),
        };
        meta.insert("epochs".into(), cfg.epochs.to_string());
        meta.insert("lr".into(), format!("{:e}", cfg.lr));
        let distill = s.uses_kd.then_some(Distill {
            teacher: ctx.original,
            classes: ctx.partition.remaining(),
            beta: ctx.unlearn.beta,
            kappa: ctx.unlearn.kappa,
        });
        let target = Target { label_map, distill };
        train_supervised(&mut net, ctx.train, &subset, ctx.partition, &cfg, &target, ctx.unlearn.seed)?;
        let mut out = MethodOutput::plain(net);
        out.meta = meta;
        Ok(out)
    }
}

/// Retrains from scratch on the full training data of the remaining
/// classes. Breaks the limited-data setting; an analysis reference only.
pub struct FullDataReference;

impl Unlearner for FullDataReference {
    fn id(&self) -> &str {
        "FDR"
    }

    fn group(&self) -> MethodGroup {
        MethodGroup::Reference
    }

    fn run(&self, ctx: &UnlearnContext) -> Result<MethodOutput> {
        let seed = fresh_init_seed(ctx.original.seed, ctx.unlearn.seed);
        let mut net = ctx.arch.build(ctx.original.num_classes(), seed);
        let all = Subset {
            indices: (0..ctx.train.len()).collect(),
        }
        .filter(ctx.train, |l| !ctx.partition.is_excluded(l));
        train_supervised(&mut net, ctx.train, &all, ctx.partition, ctx.train_cfg, &Target::default(), ctx.unlearn.seed)?;
        let mut out = MethodOutput::plain(net);
        out.meta.insert("init_seed".into(), seed.to_string());
        out.meta.insert("uses_full_data".into(), "true".into());
        Ok(out)
    }
}

pub struct UnlearnerRegistry {
    entries: Vec<Box<dyn Unlearner>>,
}

impl UnlearnerRegistry {
    pub fn empty() -> Self {
        UnlearnerRegistry { entries: Vec::new() }
    }

    /// ERwP, the nine baselines and the full-data reference.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Erwp));
        for s in BASELINES {
            r.register(Box::new(Baseline(s)));
        }
        r.register(Box::new(FullDataReference));
        r
    }

    /// Later registrations shadow earlier ones with the same id.
    pub fn register(&mut self, u: Box<dyn Unlearner>) {
        self.entries.retain(|e| e.id() != u.id());
        self.entries.push(u);
    }

    pub fn get(&self, id: &str) -> Result<&dyn Unlearner> {
        self.entries
            .iter()
            .find(|e| e.id() == id)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: id.to_string(),
            })
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id()).collect()
    }
}
