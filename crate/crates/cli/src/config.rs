//! The run configuration file.
//!
//! A TOML document with dotted sections. Every section rejects unknown keys.
//!
//! ```toml
//! seed = 0
//! out_dir = "runs/desk"
//! architecture = "small-cnn"
//! baselines = ["WD", "FOLNRC"]
//!
//! [data.synthetic]
//! noise = 0.25
//!
//! [partition]
//! excluded_last_k = 2
//!
//! [subset]
//! fraction = 0.1
//!
//! [unlearn]
//! lr = 8e-4
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use classforget_core::data::synth::SynthSpec;
use classforget_core::data::{AugmentKind, LimitedSubsetSpec, SubsetAmount};
use classforget_core::erwp::UnlearnConfig;
use classforget_core::eval::Gates;
use classforget_core::relevance::RelevanceSearchConfig;
use classforget_core::train::TrainConfig;
use classforget_core::{ClassPartition, Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding `train/` and `test/` image folders. The procedural
    /// set is generated when absent.
    pub dir: Option<PathBuf>,
    pub synthetic: SynthSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub excluded_last_k: Option<usize>,
    pub excluded: Option<Vec<usize>>,
}

impl PartitionConfig {
    pub fn build(&self, num_classes: usize) -> Result<ClassPartition> {
        match (self.excluded_last_k, &self.excluded) {
            (Some(k), None) => ClassPartition::tail(num_classes, k),
            (None, Some(ids)) => ClassPartition::new(num_classes, ids.iter().copied()),
            _ => Err(Error::Config(
                "partition needs exactly one of excluded_last_k and excluded".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetConfig {
    pub fraction: Option<f64>,
    pub per_class: Option<usize>,
}

impl SubsetConfig {
    pub fn spec(&self, seed: u64) -> Result<LimitedSubsetSpec> {
        let amount = match (self.fraction, self.per_class) {
            (Some(f), None) => SubsetAmount::Fraction(f),
            (None, Some(k)) => SubsetAmount::PerClass(k),
            (None, None) => SubsetAmount::Fraction(0.1),
            _ => return Err(Error::Config("subset takes fraction or per_class, not both".into())),
        };
        let spec = LimitedSubsetSpec { amount, seed };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelevanceConfig {
    pub init_fraction: f64,
    pub threshold: f64,
    pub augmentation: AugmentKind,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        let d = RelevanceSearchConfig::default();
        RelevanceConfig {
            init_fraction: d.init_fraction,
            threshold: d.threshold,
            augmentation: AugmentKind::Grayscale,
        }
    }
}

impl RelevanceConfig {
    pub fn search(&self) -> RelevanceSearchConfig {
        RelevanceSearchConfig {
            init_fraction: self.init_fraction,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// L2-normalize features before prototype distances.
    pub l2_normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives subset sampling, initialization, relevance augmentation and
    /// batch shuffling. Procedural data has its own seed in
    /// `[data.synthetic]`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub architecture: String,
    pub baselines: Vec<String>,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub subset: SubsetConfig,
    pub relevance: RelevanceConfig,
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub gates: Gates,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/desk"),
            architecture: "small-cnn".into(),
            baselines: Vec::new(),
            data: DataConfig::default(),
            partition: PartitionConfig {
                excluded_last_k: Some(2),
                excluded: None,
            },
            subset: SubsetConfig::default(),
            relevance: RelevanceConfig::default(),
            train: TrainConfig::default(),
            unlearn: UnlearnConfig::default(),
            gates: Gates::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.out_dir = base.join(&cfg.out_dir);
        if let Some(d) = &cfg.data.dir {
            cfg.data.dir = Some(base.join(d));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.unlearn.validate()?;
        self.relevance.search().validate()?;
        self.subset.spec(self.seed)?;
        if self.partition.excluded_last_k.is_some() == self.partition.excluded.is_some() {
            return Err(Error::Config(
                "partition needs exactly one of excluded_last_k and excluded".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The unlearning settings with the run seed applied.
    pub fn unlearn_config(&self) -> UnlearnConfig {
        UnlearnConfig {
            seed: self.seed,
            ..self.unlearn.clone()
        }
    }
}
