//! Per-sample movement between a reference and a compared model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SubsetSelection;
use crate::error::{Error, Result};
use crate::geometry::{GeometrySample, GeometrySnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    BothWrong,
    RefCorrectOnly,
    CmpCorrectOnly,
    BothCorrect,
}

impl Category {
    pub fn of(reference_correct: bool, compared_correct: bool) -> Self {
        match (reference_correct, compared_correct) {
            (false, false) => Category::BothWrong,
            (true, false) => Category::RefCorrectOnly,
            (false, true) => Category::CmpCorrectOnly,
            (true, true) => Category::BothCorrect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub sample_id: u64,
    #[serde(rename = "ref")]
    pub reference: GeometrySample,
    #[serde(rename = "cmp")]
    pub compared: GeometrySample,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub reference_id: String,
    pub compared_id: String,
    pub dataset_id: String,
    pub class_label: usize,
    pub pairs: Vec<TrajectoryPair>,
    pub counts: BTreeMap<Category, usize>,
    /// Class samples present in the reference snapshot only.
    pub missing_in_compared: Vec<u64>,
    /// Class samples present in the compared snapshot only.
    pub missing_in_reference: Vec<u64>,
}

/// Joins two snapshots of the same dataset on sample id, keeping samples
/// whose true label is `class_label`.
pub fn trajectories(
    reference: &GeometrySnapshot,
    compared: &GeometrySnapshot,
    class_label: usize,
) -> Result<TrajectoryReport> {
    if reference.dataset_id != compared.dataset_id {
        return Err(Error::InvalidArgument(format!(
            "snapshots are over different datasets: '{}' vs '{}'",
            reference.dataset_id, compared.dataset_id
        )));
    }
    if reference.class_count != compared.class_count {
        return Err(Error::InvalidArgument(format!(
            "class counts differ: {} vs {}",
            reference.class_count, compared.class_count
        )));
    }
    if class_label >= reference.class_count {
        return Err(Error::LabelOutOfRange {
            label: class_label,
            classes: reference.class_count,
        });
    }
    let mut pairs = Vec::new();
    let mut missing_in_compared = Vec::new();
    for r in reference.of_class(class_label) {
        match compared.get(r.sample_id) {
            Some(c) => {
                if c.true_label != r.true_label {
                    return Err(Error::InvalidArgument(format!(
                        "sample {} has label {} in one snapshot and {} in the other",
                        r.sample_id, r.true_label, c.true_label
                    )));
                }
                pairs.push(TrajectoryPair {
                    sample_id: r.sample_id,
                    reference: r.clone(),
                    compared: c.clone(),
                    category: Category::of(r.correct, c.correct),
                })
            }
            None => missing_in_compared.push(r.sample_id),
        }
    }
    let missing_in_reference = compared
        .of_class(class_label)
        .filter(|c| reference.get(c.sample_id).is_none())
        .map(|c| c.sample_id)
        .collect();
    let mut counts: BTreeMap<Category, usize> = [
        Category::BothWrong,
        Category::RefCorrectOnly,
        Category::CmpCorrectOnly,
        Category::BothCorrect,
    ]
    .into_iter()
    .map(|c| (c, 0))
    .collect();
    for p in &pairs {
        *counts.get_mut(&p.category).unwrap() += 1;
    }
    Ok(TrajectoryReport {
        reference_id: reference.combination_id.clone(),
        compared_id: compared.combination_id.clone(),
        dataset_id: reference.dataset_id.clone(),
        class_label,
        pairs,
        counts,
        missing_in_compared,
        missing_in_reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Angle to the true class direction.
    AngleTrue,
    Length,
    Margin,
}

impl Metric {
    pub fn of(self, s: &GeometrySample) -> f64 {
        match self {
            Metric::AngleTrue => s.angle_to_true(),
            Metric::Length => s.length,
            Metric::Margin => s.margin,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle_true" | "angle" => Ok(Metric::AngleTrue),
            "length" => Ok(Metric::Length),
            "margin" => Ok(Metric::Margin),
            _ => Err(Error::InvalidArgument(format!("unknown metric '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "threshold")]
pub enum Predicate {
    Increased,
    Decreased,
    Unchanged,
    /// `|Δ| ≥ t`.
    AbsAtLeast(f64),
}

impl Predicate {
    pub fn holds(self, delta: f64) -> bool {
        match self {
            Predicate::Increased => delta > 0.0,
            Predicate::Decreased => delta < 0.0,
            Predicate::Unchanged => delta == 0.0,
            Predicate::AbsAtLeast(t) => delta.abs() >= t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSelection {
    pub metric: Metric,
    pub predicate: Predicate,
    /// Ascending.
    pub sample_ids: Vec<u64>,
    /// Pairs skipped because either side is degenerate.
    pub excluded_degenerate: usize,
    pub warning: Option<String>,
}

impl MetricSelection {
    /// Fails on an empty selection, since stored subsets are non-empty.
    pub fn into_subset(self, id: impl Into<String>, note: impl Into<String>) -> Result<SubsetSelection> {
        SubsetSelection::new(id, self.sample_ids, note)
    }
}

/// Samples whose `cmp − ref` metric difference satisfies `predicate`.
/// An empty result is returned with a warning rather than an error.
pub fn metric_difference_select(pairs: &[TrajectoryPair], metric: Metric, predicate: Predicate) -> MetricSelection {
    let mut ids = Vec::new();
    let mut excluded = 0;
    for p in pairs {
        if p.reference.degenerate || p.compared.degenerate {
            excluded += 1;
            continue;
        }
        if predicate.holds(metric.of(&p.compared) - metric.of(&p.reference)) {
            ids.push(p.sample_id);
        }
    }
    ids.sort_unstable();
    MetricSelection {
        metric,
        predicate,
        warning: ids.is_empty().then(|| "selection is empty".to_string()),
        sample_ids: ids,
        excluded_degenerate: excluded,
    }
}
