//! Per-parameter boolean selection over a model's named tensors.
//!
//! Mask files are plain text so they can be diffed and audited:
//!
//! ```text
//! classforget-mask 1
//! arch small-cnn
//! threshold 0.1
//! init_fraction 0.2
//! augmentation grayscale
//! meta <key> <value>
//! select <class> <tensor> <selected> <total> <saturated 0|1>
//! tensor <name> <len> <count>: <flat index> ...
//! end
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util;
use crate::model::ParamStore;
use crate::tensor::Real;

const MAGIC: &str = "classforget-mask 1";

/// One layer's outcome of the relevance search for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSelection {
    pub class_id: usize,
    pub tensor: String,
    pub selected: usize,
    pub total: usize,
    /// Zeroing the whole tensor did not push the class below threshold.
    pub saturated: bool,
}

impl LayerSelection {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.selected as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskHeader {
    pub arch: String,
    pub threshold: f64,
    pub init_fraction: f64,
    pub augmentation: String,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMask {
    names: Vec<String>,
    bits: Vec<Vec<bool>>,
    pub header: MaskHeader,
    pub provenance: Vec<LayerSelection>,
}

impl RelevanceMask {
    fn filled<F: Real>(params: &ParamStore<F>, value: bool) -> Self {
        RelevanceMask {
            names: params.names().map(str::to_string).collect(),
            bits: params.iter().map(|(_, t)| vec![value; t.len()]).collect(),
            header: MaskHeader::default(),
            provenance: Vec::new(),
        }
    }

    /// Selects nothing.
    pub fn none<F: Real>(params: &ParamStore<F>) -> Self {
        Self::filled(params, false)
    }

    /// Selects every parameter.
    pub fn all<F: Real>(params: &ParamStore<F>) -> Self {
        Self::filled(params, true)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, i: usize) -> &[bool] {
        &self.bits[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [bool] {
        &mut self.bits[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of selected scalars.
    pub fn count(&self) -> usize {
        self.bits.iter().map(|t| t.iter().filter(|&&b| b).count()).sum()
    }

    pub fn total(&self) -> usize {
        self.bits.iter().map(Vec::len).sum()
    }

    pub fn tensor_count(&self, i: usize) -> usize {
        self.bits[i].iter().filter(|&&b| b).count()
    }

    pub fn check_layout<F: Real>(&self, params: &ParamStore<F>) -> Result<()> {
        let ok = self.len() == params.len()
            && self
                .names
                .iter()
                .zip(&self.bits)
                .zip(params.iter())
                .all(|((n, b), (pn, pt))| n == pn && b.len() == pt.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Mask("mask tensors do not match the model's parameters".into()))
        }
    }

    fn check_same(&self, other: &RelevanceMask) -> Result<()> {
        if self.names != other.names || self.bits.iter().zip(&other.bits).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Mask("masks cover different tensors".into()));
        }
        Ok(())
    }

    /// Entrywise OR. Provenance is concatenated in argument order; the
    /// header comes from the first mask.
    pub fn union(masks: &[RelevanceMask]) -> Result<RelevanceMask> {
        let (first, rest) = masks
            .split_first()
            .ok_or_else(|| Error::Mask("union of zero masks".into()))?;
        let mut out = first.clone();
        for m in rest {
            out.check_same(m)?;
            for (a, b) in out.bits.iter_mut().zip(&m.bits) {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x |= y;
                }
            }
            out.provenance.extend(m.provenance.iter().cloned());
        }
        Ok(out)
    }

    /// Same selection, ignoring header and provenance.
    pub fn same_selection(&self, other: &RelevanceMask) -> bool {
        self.names == other.names && self.bits == other.bits
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut s = format!(
            "{MAGIC}\narch {}\nthreshold {}\ninit_fraction {}\naugmentation {}\n",
            h.arch, h.threshold, h.init_fraction, h.augmentation
        );
        for (k, v) in &h.meta {
            s.push_str(&format!("meta {k} {v}\n"));
        }
        for p in &self.provenance {
            s.push_str(&format!(
                "select {} {} {} {} {}\n",
                p.class_id, p.tensor, p.selected, p.total, p.saturated as u8
            ));
        }
        for (name, bits) in self.names.iter().zip(&self.bits) {
            let idx: Vec<String> = bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i.to_string())
                .collect();
            s.push_str(&format!("tensor {name} {} {}:", bits.len(), idx.len()));
            for i in idx {
                s.push(' ');
                s.push_str(&i);
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<RelevanceMask> {
        let bad = |line: &str| Error::Mask(format!("malformed mask line `{line}`"));
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Mask("not a mask file".into()));
        }
        let mut m = RelevanceMask {
            names: Vec::new(),
            bits: Vec::new(),
            header: MaskHeader::default(),
            provenance: Vec::new(),
        };
        let mut ended = false;
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "arch" => m.header.arch = rest.to_string(),
                "threshold" => m.header.threshold = rest.parse().map_err(|_| bad(line))?,
                "init_fraction" => m.header.init_fraction = rest.parse().map_err(|_| bad(line))?,
                "augmentation" => m.header.augmentation = rest.to_string(),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    m.header.meta.insert(k.to_string(), v.to_string());
                }
                "select" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let [class, tensor, sel, total, sat] = f.as_slice() else {
                        return Err(bad(line));
                    };
                    m.provenance.push(LayerSelection {
                        class_id: class.parse().map_err(|_| bad(line))?,
                        tensor: tensor.to_string(),
                        selected: sel.parse().map_err(|_| bad(line))?,
                        total: total.parse().map_err(|_| bad(line))?,
                        saturated: *sat == "1",
                    });
                }
                "tensor" => {
                    let (head, idx) = rest.split_once(':').ok_or_else(|| bad(line))?;
                    let f: Vec<&str> = head.split(' ').collect();
                    let [name, len, count] = f.as_slice() else {
                        return Err(bad(line));
                    };
                    let len: usize = len.parse().map_err(|_| bad(line))?;
                    let count: usize = count.parse().map_err(|_| bad(line))?;
                    let mut bits = vec![false; len];
                    let mut seen = 0;
                    for tok in idx.split_whitespace() {
                        let i: usize = tok.parse().map_err(|_| bad(line))?;
                        *bits.get_mut(i).ok_or_else(|| bad(line))? = true;
                        seen += 1;
                    }
                    if seen != count {
                        return Err(bad(line));
                    }
                    m.names.push(name.to_string());
                    m.bits.push(bits);
                }
                "end" => {
                    ended = true;
                    break;
                }
                _ => return Err(bad(line)),
            }
        }
        if !ended {
            return Err(Error::Mask("mask file is truncated".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<RelevanceMask> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Mask(format!("cannot read mask {}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

/// Entrywise OR of several masks.
pub fn union_masks(masks: &[RelevanceMask]) -> Result<RelevanceMask> {
    RelevanceMask::union(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn store() -> ParamStore<f32> {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::zeros(&[2, 3])).unwrap();
        p.insert("b", Tensor::zeros(&[4])).unwrap();
        p
    }

    fn mask_from(bits: &[bool]) -> RelevanceMask {
        let mut m = RelevanceMask::none(&store());
        m.tensor_mut(0).copy_from_slice(&bits[..6]);
        m.tensor_mut(1).copy_from_slice(&bits[6..]);
        m
    }

    #[test]
    fn union_of_singletons() {
        let mut a = RelevanceMask::none(&store());
        a.tensor_mut(0)[1] = true;
        let mut b = RelevanceMask::none(&store());
        b.tensor_mut(1)[3] = true;
        let u = union_masks(&[a, b]).unwrap();
        assert_eq!(u.count(), 2);
        assert!(u.tensor(0)[1] && u.tensor(1)[3]);
    }

    #[test]
    fn union_rejects_mismatched_masks() {
        let mut other = ParamStore::<f32>::new();
        other.insert("a", Tensor::zeros(&[6])).unwrap();
        let r = union_masks(&[RelevanceMask::none(&store()), RelevanceMask::none(&other)]);
        assert!(matches!(r, Err(Error::Mask(_))));
    }

    #[test]
    fn text_round_trip_keeps_header_and_provenance() {
        let mut m = mask_from(&[true, false, false, true, false, false, false, true, true, false]);
        m.header = MaskHeader {
            arch: "small-cnn".into(),
            threshold: 0.1,
            init_fraction: 0.2,
            augmentation: "grayscale".into(),
            meta: BTreeMap::from([("seed".to_string(), "7".to_string())]),
        };
        m.provenance.push(LayerSelection {
            class_id: 8,
            tensor: "a".into(),
            selected: 2,
            total: 6,
            saturated: false,
        });
        let back = RelevanceMask::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            RelevanceMask::from_text(&m.to_text().replace("end\n", "")),
            Err(Error::Mask(_))
        ));
    }

    proptest! {
        #[test]
        fn union_is_a_semilattice(
            a in prop::collection::vec(any::<bool>(), 10),
            b in prop::collection::vec(any::<bool>(), 10),
            c in prop::collection::vec(any::<bool>(), 10),
        ) {
            let (a, b, c) = (mask_from(&a), mask_from(&b), mask_from(&c));
            let none = RelevanceMask::none(&store());
            let ab = union_masks(&[a.clone(), b.clone()]).unwrap();
            let ba = union_masks(&[b.clone(), a.clone()]).unwrap();
            prop_assert!(ab.same_selection(&ba));
            let ab_c = union_masks(&[ab, c.clone()]).unwrap();
            let a_bc = union_masks(&[a.clone(), union_masks(&[b, c]).unwrap()]).unwrap();
            prop_assert!(ab_c.same_selection(&a_bc));
            prop_assert!(union_masks(&[a.clone(), a.clone()]).unwrap().same_selection(&a));
            prop_assert!(union_masks(&[a.clone(), none]).unwrap().same_selection(&a));
        }
    }
}
