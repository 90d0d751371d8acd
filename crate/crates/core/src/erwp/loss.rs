//! Loss terms over row-major logit matrices (`S x num_classes`).
//!
//! Every function works in `f64` regardless of the model's scalar type and
//! returns the gradient with respect to the logits alongside the value, so
//! that callers can backpropagate through any [`crate::model::Network`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::ClassPartition;

/// Per-batch loss values.
///
/// `l_c = (l_c_e + l_c_ne) / S`, `l_kd = (l_kd_e + l_kd_ne) / S` and
/// `total = l_c + beta * l_kd`. Terms switched off by [`LossComponents`]
/// are reported as zero so the identities always hold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_c_e: f64,
    pub l_c_ne: f64,
    pub l_c: f64,
    pub l_kd_e: f64,
    pub l_kd_ne: f64,
    pub l_kd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_c_e, self.l_c_ne, self.l_c, self.l_kd_e, self.l_kd_ne, self.l_kd, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Which terms of the objective are active. All on is the full method; the
/// others exist for component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossComponents {
    pub excluded_ce: bool,
    pub remaining_ce: bool,
    pub kd: bool,
}

impl Default for LossComponents {
    fn default() -> Self {
        LossComponents {
            excluded_ce: true,
            remaining_ce: true,
            kd: true,
        }
    }
}

/// Direction of the distillation divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdDirection {
    /// `KL(softmax(student / k) || softmax(teacher / k))`.
    #[default]
    StudentTeacher,
    /// `KL(softmax(teacher / k) || softmax(student / k))`.
    TeacherStudent,
}

/// Numerically stable `log softmax(z / temperature)` over the entries where
/// `allowed` is true; disallowed entries get `-inf`.
pub fn log_softmax(z: &[f64], temperature: f64, allowed: Option<&[bool]>) -> Vec<f64> {
    let ok = |i: usize| allowed.map_or(true, |a| a[i]);
    let max = z
        .iter()
        .enumerate()
        .filter(|(i, _)| ok(*i))
        .map(|(_, v)| v / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z
        .iter()
        .enumerate()
        .filter(|(i, _)| ok(*i))
        .map(|(_, v)| (v / temperature - max).exp())
        .sum();
    let lse = max + sum.ln();
    z.iter()
        .enumerate()
        .map(|(i, v)| if ok(i) { v / temperature - lse } else { f64::NEG_INFINITY })
        .collect()
}

/// Cross-entropy of one logit row against `label`, and its gradient.
pub fn cross_entropy(logits: &[f64], label: usize, allowed: Option<&[bool]>) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits, 1.0, allowed);
    let grad = lp
        .iter()
        .enumerate()
        .map(|(i, &l)| l.exp() - if i == label { 1.0 } else { 0.0 })
        .collect();
    (-lp[label], grad)
}

/// `KL(softmax(s / kappa) || softmax(t / kappa))` and its gradient with
/// respect to `s`.
pub fn kl_student_teacher(s: &[f64], t: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let ls = log_softmax(s, kappa, None);
    let lt = log_softmax(t, kappa, None);
    let ps: Vec<f64> = ls.iter().map(|v| v.exp()).collect();
    let diff: Vec<f64> = ls.iter().zip(&lt).map(|(a, b)| a - b).collect();
    let kl: f64 = ps.iter().zip(&diff).map(|(p, d)| p * d).sum();
    let grad = ps.iter().zip(&diff).map(|(p, d)| p * (d - kl) / kappa).collect();
    (kl.max(0.0), grad)
}

/// `KL(softmax(t / kappa) || softmax(s / kappa))` and its gradient with
/// respect to `s`.
pub fn kl_teacher_student(s: &[f64], t: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let ls = log_softmax(s, kappa, None);
    let lt = log_softmax(t, kappa, None);
    let pt: Vec<f64> = lt.iter().map(|v| v.exp()).collect();
    let kl: f64 = pt.iter().zip(lt.iter().zip(&ls)).map(|(p, (a, b))| p * (a - b)).sum();
    let grad = ls.iter().zip(&pt).map(|(l, p)| (l.exp() - p) / kappa).collect();
    (kl.max(0.0), grad)
}

fn kd_pair(s: &[f64], t: &[f64], kappa: f64, dir: KdDirection) -> (f64, Vec<f64>) {
    match dir {
        KdDirection::StudentTeacher => kl_student_teacher(s, t, kappa),
        KdDirection::TeacherStudent => kl_teacher_student(s, t, kappa),
    }
}

fn check_batch(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<usize> {
    let s = labels.len();
    if s == 0 {
        return Err(Error::EmptyBatch);
    }
    if logits.len() != s * num_classes {
        return Err(Error::InputShape(format!(
            "{} logits for {s} examples of {num_classes} classes",
            logits.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidClass { id: bad, num_classes });
    }
    Ok(s)
}

/// `(l_c_e, l_c_ne, l_c)`: negated cross-entropy summed over excluded
/// examples, cross-entropy summed over remaining examples, and their sum
/// divided by the batch size. Cross-entropy spans all class logits.
pub fn classification_loss(
    logits: &[f64],
    labels: &[usize],
    partition: &ClassPartition,
) -> Result<(f64, f64, f64)> {
    let c = partition.num_classes();
    let s = check_batch(logits, labels, c)?;
    let (mut le, mut lne) = (0.0, 0.0);
    for (i, &y) in labels.iter().enumerate() {
        let (ce, _) = cross_entropy(&logits[i * c..(i + 1) * c], y, None);
        if partition.is_excluded(y) {
            le -= ce;
        } else {
            lne += ce;
        }
    }
    Ok((le, lne, (le + lne) / s as f64))
}

/// `(l_kd_e, l_kd_ne, l_kd)`: distillation of the remaining-class logit
/// slice, summed separately over excluded and remaining examples.
pub fn kd_loss(
    student: &[f64],
    teacher: &[f64],
    labels: &[usize],
    partition: &ClassPartition,
    kappa: f64,
) -> Result<(f64, f64, f64)> {
    let b = erwp_objective(
        student,
        teacher,
        labels,
        partition,
        &ObjectiveSpec {
            beta: 1.0,
            kappa,
            components: LossComponents {
                excluded_ce: false,
                remaining_ce: false,
                kd: true,
            },
            direction: KdDirection::StudentTeacher,
        },
    )?
    .0;
    Ok((b.l_kd_e, b.l_kd_ne, b.l_kd))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub beta: f64,
    pub kappa: f64,
    pub components: LossComponents,
    pub direction: KdDirection,
}

/// The total unlearning objective `l_c + beta * l_kd` and its gradient with
/// respect to the student logits.
pub fn erwp_objective(
    student: &[f64],
    teacher: &[f64],
    labels: &[usize],
    partition: &ClassPartition,
    spec: &ObjectiveSpec,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let c = partition.num_classes();
    let s = check_batch(student, labels, c)?;
    let comps = spec.components;
    if comps.kd {
        if teacher.len() != student.len() {
            return Err(Error::InputShape("teacher and student logits differ in size".into()));
        }
        if partition.n_remaining() == 0 {
            return Err(Error::InvalidPartition("no remaining classes to distill".into()));
        }
        if !(spec.kappa > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", spec.kappa)));
        }
    }
    let inv_s = 1.0 / s as f64;
    let remaining: Vec<usize> = partition.remaining().iter().copied().collect();
    let mut out = LossBreakdown::default();
    let mut grad = vec![0.0; student.len()];

    for (i, &y) in labels.iter().enumerate() {
        let row = &student[i * c..(i + 1) * c];
        let g = &mut grad[i * c..(i + 1) * c];
        let excluded = partition.is_excluded(y);
        if (excluded && comps.excluded_ce) || (!excluded && comps.remaining_ce) {
            let (ce, dce) = cross_entropy(row, y, None);
            let sign = if excluded { -1.0 } else { 1.0 };
            if excluded {
                out.l_c_e -= ce;
            } else {
                out.l_c_ne += ce;
            }
            for (gj, d) in g.iter_mut().zip(dce) {
                *gj += sign * d * inv_s;
            }
        }
        if comps.kd {
            let s_sl: Vec<f64> = remaining.iter().map(|&k| row[k]).collect();
            let t_sl: Vec<f64> = remaining.iter().map(|&k| teacher[i * c + k]).collect();
            let (kl, dkl) = kd_pair(&s_sl, &t_sl, spec.kappa, spec.direction);
            if excluded {
                out.l_kd_e += kl;
            } else {
                out.l_kd_ne += kl;
            }
            for (&k, d) in remaining.iter().zip(dkl) {
                g[k] += spec.beta * d * inv_s;
            }
        }
    }
    out.l_c = (out.l_c_e + out.l_c_ne) * inv_s;
    out.l_kd = (out.l_kd_e + out.l_kd_ne) * inv_s;
    out.total = out.l_c + spec.beta * out.l_kd;
    Ok((out, grad))
}
