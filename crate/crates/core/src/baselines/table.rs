use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::BASELINES;
use crate::error::{Error, Result};
use crate::eval::{MetricTriple, MetricsReport};

/// Row groups of the comparison table, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodGroup {
    Original,
    NoTraining,
    FullTrainSchedule,
    FineTuning,
    Proposed,
    Reference,
    Other,
}

impl MethodGroup {
    pub fn label(self) -> &'static str {
        match self {
            MethodGroup::Original => "original",
            MethodGroup::NoTraining => "no training",
            MethodGroup::FullTrainSchedule => "full train schedule",
            MethodGroup::FineTuning => "only fine-tuning",
            MethodGroup::Proposed => "ERwP",
            MethodGroup::Reference => "reference (full data, outside the limited-data setting)",
            MethodGroup::Other => "other",
        }
    }

    pub fn of(method: &str) -> MethodGroup {
        match method {
            "original" => MethodGroup::Original,
            "ERwP" => MethodGroup::Proposed,
            "FDR" => MethodGroup::Reference,
            m => BASELINES
                .iter()
                .find(|s| s.id == m)
                .map_or(MethodGroup::Other, |s| s.group()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub group: MethodGroup,
    pub method: String,
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

fn rank(method: &str) -> usize {
    BASELINES.iter().position(|s| s.id == method).unwrap_or(usize::MAX)
}

/// Orders the reports into table rows. All reports must share one
/// partition.
pub fn compare_table(reports: &BTreeMap<String, MetricsReport>) -> Result<ComparisonTable> {
    let mut it = reports.values();
    let first = it.next().ok_or_else(|| Error::Comparison("no reports".into()))?;
    if let Some(r) = it.find(|r| !r.same_partition(first)) {
        return Err(Error::Comparison(format!(
            "`{}` excludes {:?} of {} classes, `{}` excludes {:?} of {}",
            first.method, first.excluded, first.num_classes, r.method, r.excluded, r.num_classes
        )));
    }
    let mut rows: Vec<TableRow> = reports
        .iter()
        .map(|(id, r)| TableRow {
            group: MethodGroup::of(id),
            method: id.clone(),
            metrics: r.metrics,
        })
        .collect();
    rows.sort_by(|a, b| (a.group, rank(&a.method), &a.method).cmp(&(b.group, rank(&b.method), &b.method)));
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,method,fa_e,fpa_e,ca_ne\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.2},{:.2},{:.2}",
                r.group.label(),
                r.method,
                r.metrics.fa_e,
                r.metrics.fpa_e,
                r.metrics.ca_ne
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", "method", "FA_e", "FPA_e", "CA_ne");
        let mut group = None;
        for r in &self.rows {
            if group != Some(r.group) {
                let _ = writeln!(s, "-- {}", r.group.label());
                group = Some(r.group);
            }
            let _ = writeln!(
                s,
                "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}",
                r.method, r.metrics.fa_e, r.metrics.fpa_e, r.metrics.ca_ne
            );
        }
        s
    }
}
