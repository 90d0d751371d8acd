//! Forgetting accuracy (FA_e), prototype forgetting accuracy (FPA_e) and
//! constraint accuracy (CA_ne).

mod report;

pub use report::{GateOutcome, Gates, MetricsReport};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Subset};
use crate::error::{Error, Result};
use crate::model::{HeadLayout, Network};
use crate::partition::ClassPartition;

/// The three protocol metrics, all percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTriple {
    pub fa_e: f64,
    pub fpa_e: f64,
    pub ca_ne: f64,
}

fn percent(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

/// Head accuracy over the rows of `labels` whose class is in `ids`, with
/// argmax over the active head classes, further restricted to
/// `restrict_argmax_to` when given.
pub fn fc_accuracy_from_logits(
    logits: &[f32],
    labels: &[usize],
    num_classes: usize,
    head: &HeadLayout,
    ids: &BTreeSet<usize>,
    restrict_argmax_to: Option<&BTreeSet<usize>>,
) -> Result<f64> {
    let (mut hits, mut total) = (0, 0);
    for (row, &y) in logits.chunks_exact(num_classes).zip(labels) {
        if !ids.contains(&y) {
            continue;
        }
        total += 1;
        let pred = crate::model::head_argmax(row, |c| {
            head.is_active(c) && restrict_argmax_to.map_or(true, |r| r.contains(&c))
        });
        if head.is_hit(pred, y) {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData(format!("no test examples of classes {ids:?}")));
    }
    Ok(percent(hits, total))
}

/// Top-1 head accuracy on the test examples of classes `ids`.
pub fn fc_accuracy(
    model: &Network<f32>,
    test: &Dataset,
    ids: &BTreeSet<usize>,
    restrict_argmax_to: Option<&BTreeSet<usize>>,
) -> Result<f64> {
    let rows = test.indices_of(ids);
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("no test examples of classes {ids:?}")));
    }
    let logits = model.logits(&test.gather(&rows), rows.len())?;
    fc_accuracy_from_logits(
        &logits,
        &test.gather_labels(&rows),
        model.num_classes(),
        &model.head,
        ids,
        restrict_argmax_to,
    )
}

/// Mean penultimate feature per class.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub classes: Vec<usize>,
    pub dim: usize,
    pub prototypes: Vec<Vec<f64>>,
    /// Features are scaled to unit length before averaging and matching.
    pub l2_normalize: bool,
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl PrototypeBank {
    /// Averages `features` (row-major, `dim` wide) per label. Every class in
    /// `classes` needs at least one row.
    pub fn from_features(
        features: &[f64],
        labels: &[usize],
        dim: usize,
        classes: &[usize],
        l2_normalize: bool,
    ) -> Result<Self> {
        let mut sums = vec![vec![0.0; dim]; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        for (row, &y) in features.chunks_exact(dim).zip(labels) {
            if let Some(k) = classes.iter().position(|&c| c == y) {
                let mut f = row.to_vec();
                if l2_normalize {
                    normalize(&mut f);
                }
                sums[k].iter_mut().zip(&f).for_each(|(s, v)| *s += v);
                counts[k] += 1;
            }
        }
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InsufficientData(format!(
                "no limited examples of class {} for its prototype",
                classes[k]
            )));
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
        Ok(PrototypeBank {
            classes: classes.to_vec(),
            dim,
            prototypes: sums,
            l2_normalize,
        })
    }

    /// Class of the nearest prototype by Euclidean distance; ties go to the
    /// earlier class in the bank.
    pub fn nearest(&self, feature: &[f64]) -> usize {
        let mut f = feature.to_vec();
        if self.l2_normalize {
            normalize(&mut f);
        }
        let mut best = (f64::INFINITY, 0);
        for (c, p) in self.classes.iter().zip(&self.prototypes) {
            let d: f64 = p.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, *c);
            }
        }
        best.1
    }

    /// Share (percent) of rows with label in `ids` whose nearest prototype
    /// is their own class.
    pub fn accuracy(&self, features: &[f64], labels: &[usize], ids: &BTreeSet<usize>) -> Result<f64> {
        let (mut hits, mut total) = (0, 0);
        for (row, &y) in features.chunks_exact(self.dim).zip(labels) {
            if ids.contains(&y) {
                total += 1;
                if self.nearest(row) == y {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            return Err(Error::InsufficientData(format!("no test examples of classes {ids:?}")));
        }
        Ok(percent(hits, total))
    }
}

fn features_of(model: &Network<f32>, ds: &Dataset, rows: &[usize]) -> Result<(Vec<f32>, Vec<f64>)> {
    let (logits, feats) = model.evaluate_chunked(&ds.gather(rows), rows.len())?;
    Ok((logits, feats.into_iter().map(f64::from).collect()))
}

/// Prototypes of every class of `ds` from the limited subset.
pub fn build_prototypes(
    model: &Network<f32>,
    ds: &Dataset,
    subset: &Subset,
    l2_normalize: bool,
) -> Result<PrototypeBank> {
    let (_, feats) = features_of(model, ds, &subset.indices)?;
    let classes: Vec<usize> = (0..ds.num_classes()).collect();
    PrototypeBank::from_features(
        &feats,
        &ds.gather_labels(&subset.indices),
        model.feature_dim(),
        &classes,
        l2_normalize,
    )
}

/// Nearest-prototype accuracy on the test examples of classes `ids`.
pub fn prototype_accuracy(
    model: &Network<f32>,
    bank: &PrototypeBank,
    test: &Dataset,
    ids: &BTreeSet<usize>,
) -> Result<f64> {
    let rows = test.indices_of(ids);
    let (_, feats) = features_of(model, test, &rows)?;
    bank.accuracy(&feats, &test.gather_labels(&rows), ids)
}

/// Data needed to score a model under the protocol.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a> {
    pub train: &'a Dataset,
    /// Limited subset whose features define the prototypes.
    pub subset: &'a Subset,
    pub test: &'a Dataset,
    pub partition: &'a ClassPartition,
    pub l2_normalize: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(train: &'a Dataset, subset: &'a Subset, test: &'a Dataset, partition: &'a ClassPartition) -> Self {
        Evaluator {
            train,
            subset,
            test,
            partition,
            l2_normalize: false,
        }
    }

    /// CA_ne, FA_e and FPA_e from one pass over the test set.
    pub fn metrics(&self, model: &Network<f32>) -> Result<MetricTriple> {
        if self.partition.num_classes() != model.num_classes() {
            return Err(Error::InvalidPartition(format!(
                "partition has {} classes, model has {}",
                self.partition.num_classes(),
                model.num_classes()
            )));
        }
        let rows: Vec<usize> = (0..self.test.len()).collect();
        let (logits, feats) = features_of(model, self.test, &rows)?;
        let labels = self.test.labels();
        let c = model.num_classes();
        let ca_ne = fc_accuracy_from_logits(&logits, labels, c, &model.head, self.partition.remaining(), None)?;
        let fa_e = fc_accuracy_from_logits(&logits, labels, c, &model.head, self.partition.excluded(), None)?;
        let bank = build_prototypes(model, self.train, self.subset, self.l2_normalize)?;
        let fpa_e = bank.accuracy(&feats, labels, self.partition.excluded())?;
        Ok(MetricTriple { fa_e, fpa_e, ca_ne })
    }
}

/// Scores `model` against `original` and applies the gates in protocol
/// order: CA_ne, then FA_e, then FPA_e.
pub fn evaluate_protocol(
    model: &Network<f32>,
    original: &Network<f32>,
    eval: &Evaluator,
    gates: &Gates,
    method: &str,
) -> Result<MetricsReport> {
    let reference = eval.metrics(original)?;
    let metrics = eval.metrics(model)?;
    let mut report = MetricsReport::new(method, metrics, eval.partition);
    report.original = Some(reference);
    report.gates = Some(gates.check(&metrics, &reference));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn prototype_is_the_class_mean() {
        let bank = PrototypeBank::from_features(&[0.0, 0.0, 2.0, 0.0, 7.0, 7.0], &[0, 0, 1], 2, &[0, 1], false).unwrap();
        assert_eq!(bank.prototypes[0], vec![1.0, 0.0]);
        assert_eq!(bank.prototypes[1], vec![7.0, 7.0]);
    }

    #[test]
    fn duplicated_example_keeps_the_prototype() {
        let one = PrototypeBank::from_features(&[3.0, -1.0], &[0], 2, &[0], false).unwrap();
        let two = PrototypeBank::from_features(&[3.0, -1.0, 3.0, -1.0], &[0, 0], 2, &[0], false).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn missing_class_has_no_prototype() {
        let r = PrototypeBank::from_features(&[1.0, 1.0], &[0], 2, &[0, 1], false);
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn nearest_prototype_wins() {
        let bank = PrototypeBank {
            classes: vec![0, 1],
            dim: 2,
            prototypes: vec![vec![0.0, 0.0], vec![4.0, 0.0]],
            l2_normalize: false,
        };
        let ids = BTreeSet::from([0]);
        assert_eq!(bank.accuracy(&[1.0, 0.0], &[0], &ids).unwrap(), 100.0);
    }

    #[test]
    fn deleted_classes_never_win_the_argmax() {
        let head = HeadLayout {
            deleted: BTreeSet::from([2]),
            merged_slot: None,
        };
        let logits = [0.0, 1.0, 9.0, 5.0, 1.0, 9.0];
        let acc = fc_accuracy_from_logits(&logits, &[1, 2], 3, &head, &BTreeSet::from([1, 2]), None).unwrap();
        assert_abs_diff_eq!(acc, 50.0);
    }

    #[test]
    fn merged_slot_is_never_a_hit() {
        let head = HeadLayout {
            deleted: BTreeSet::new(),
            merged_slot: Some(1),
        };
        let acc = fc_accuracy_from_logits(&[0.0, 3.0], &[1], 2, &head, &BTreeSet::from([1]), None).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn restricted_argmax() {
        let head = HeadLayout::default();
        let only = BTreeSet::from([0, 1]);
        let acc = fc_accuracy_from_logits(&[1.0, 0.0, 5.0], &[0], 3, &head, &BTreeSet::from([0]), Some(&only)).unwrap();
        assert_eq!(acc, 100.0);
    }

    #[test]
    fn uniform_random_predictions_sit_near_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let logits: Vec<f32> = (0..n * 100).map(|_| rng.gen()).collect();
        let labels: Vec<usize> = (0..n).map(|i| 80 + i % 20).collect();
        let ids: BTreeSet<usize> = (80..100).collect();
        let acc = fc_accuracy_from_logits(&logits, &labels, 100, &HeadLayout::default(), &ids, None).unwrap();
        assert!((acc - 1.0).abs() < 0.3, "{acc}");
    }

    fn rotate(v: &[f64], angle: f64, shift: (f64, f64)) -> Vec<f64> {
        let (s, c) = angle.sin_cos();
        v.chunks(2)
            .flat_map(|p| [c * p[0] - s * p[1] + shift.0, s * p[0] + c * p[1] + shift.1])
            .collect()
    }

    proptest! {
        #[test]
        fn rigid_motion_keeps_nearest_prototype_accuracy(
            feats in prop::collection::vec(-5.0f64..5.0, 40),
            labels in prop::collection::vec(0usize..3, 20),
            angle in 0.0f64..std::f64::consts::TAU,
            dx in -10.0f64..10.0,
            dy in -10.0f64..10.0,
        ) {
            prop_assume!((0..3).all(|c| labels.contains(&c)));
            let ids = BTreeSet::from([0, 1, 2]);
            let bank = PrototypeBank::from_features(&feats, &labels, 2, &[0, 1, 2], false).unwrap();
            let moved = rotate(&feats, angle, (dx, dy));
            let moved_bank = PrototypeBank {
                prototypes: bank.prototypes.iter().map(|p| rotate(p, angle, (dx, dy))).collect(),
                ..bank.clone()
            };
            // Exact ties can flip under rounding; only compare clear cases.
            let margin_ok = feats.chunks(2).all(|f| {
                let mut d: Vec<f64> = bank.prototypes.iter().map(|p| (p[0]-f[0]).powi(2) + (p[1]-f[1]).powi(2)).collect();
                d.sort_by(f64::total_cmp);
                d[1] - d[0] > 1e-6
            });
            prop_assume!(margin_ok);
            let a = bank.accuracy(&feats, &labels, &ids).unwrap();
            let b = moved_bank.accuracy(&moved, &labels, &ids).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
