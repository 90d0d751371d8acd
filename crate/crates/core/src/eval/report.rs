use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricTriple;
use crate::error::{Error, Result};
use crate::io_util;
use crate::partition::ClassPartition;

/// Pass thresholds, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gates {
    /// CA_ne may fall at most this far below the original's.
    pub ca_ne_margin: f64,
    /// FA_e must not exceed this.
    pub fa_e_ceiling: f64,
    /// FPA_e must fall at least this far below the original's.
    pub fpa_e_drop: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Gates {
            ca_ne_margin: 3.0,
            fa_e_ceiling: 2.0,
            fpa_e_drop: 15.0,
        }
    }
}

impl Gates {
    pub fn check(&self, m: &MetricTriple, original: &MetricTriple) -> GateOutcome {
        GateOutcome {
            ca_ne: m.ca_ne >= original.ca_ne - self.ca_ne_margin,
            fa_e: m.fa_e <= self.fa_e_ceiling,
            fpa_e: m.fpa_e <= original.fpa_e - self.fpa_e_drop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub ca_ne: bool,
    pub fa_e: bool,
    pub fpa_e: bool,
}

impl GateOutcome {
    pub fn all_pass(&self) -> bool {
        self.ca_ne && self.fa_e && self.fpa_e
    }

    /// The first failing gate in protocol order.
    pub fn first_failure(&self) -> Option<&'static str> {
        [("CA_ne", self.ca_ne), ("FA_e", self.fa_e), ("FPA_e", self.fpa_e)]
            .into_iter()
            .find(|(_, ok)| !ok)
            .map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub metrics: MetricTriple,
    pub original: Option<MetricTriple>,
    pub gates: Option<GateOutcome>,
    /// Metrics before the first epoch and after each one.
    pub per_epoch: Vec<MetricTriple>,
    pub num_classes: usize,
    pub excluded: Vec<usize>,
    pub meta: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn new(method: &str, metrics: MetricTriple, partition: &ClassPartition) -> Self {
        MetricsReport {
            method: method.to_string(),
            metrics,
            original: None,
            gates: None,
            per_epoch: Vec::new(),
            num_classes: partition.num_classes(),
            excluded: partition.excluded().iter().copied().collect(),
            meta: BTreeMap::new(),
        }
    }

    pub fn same_partition(&self, other: &MetricsReport) -> bool {
        self.num_classes == other.num_classes && self.excluded == other.excluded
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad report: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io_util::read_string(path)?)
    }

    /// `epoch,fa_e,fpa_e,ca_ne` with epoch 0 the starting model.
    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,fa_e,fpa_e,ca_ne\n");
        for (e, m) in self.per_epoch.iter().enumerate() {
            let _ = writeln!(s, "{e},{:.4},{:.4},{:.4}", m.fa_e, m.fpa_e, m.ca_ne);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(fa_e: f64, fpa_e: f64, ca_ne: f64) -> MetricTriple {
        MetricTriple { fa_e, fpa_e, ca_ne }
    }

    #[test]
    fn self_comparison_passes_only_the_constraint_gate() {
        let m = triple(80.0, 75.0, 82.0);
        let g = Gates::default().check(&m, &m);
        assert_eq!(
            g,
            GateOutcome {
                ca_ne: true,
                fa_e: false,
                fpa_e: false
            }
        );
        assert_eq!(g.first_failure(), Some("FA_e"));
    }

    #[test]
    fn weight_deletion_pattern() {
        let original = triple(80.0, 75.0, 82.0);
        let g = Gates::default().check(&triple(0.0, 75.0, 83.0), &original);
        assert!(g.ca_ne && g.fa_e && !g.fpa_e);
    }

    #[test]
    fn json_round_trip() {
        let p = ClassPartition::tail(10, 2).unwrap();
        let mut r = MetricsReport::new("erwp", triple(1.0, 20.0, 80.0), &p);
        r.per_epoch = vec![triple(80.0, 70.0, 81.0), triple(1.0, 20.0, 80.0)];
        r.meta.insert("seed".into(), "7".into());
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(r.epochs_csv().lines().count(), 3);
    }
}
