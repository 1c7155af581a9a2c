//! Accuracy-vs-prune-rate histograms per corruption and pruning method.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Combination, SubsetSelection, CLEAN};
use crate::corruption::{VariantKey, SEVERITIES};
use crate::error::{Error, Result};
use crate::geometry::GeometrySnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityMode {
    /// One row per type, counting all five severities together.
    #[default]
    Aggregate,
    /// One row per (type, severity).
    PerSeverity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub combination_id: String,
    pub prune_rate: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodHistogram {
    pub method: String,
    pub max_accuracy: f64,
    /// Sorted by prune rate, then combination id.
    pub entries: Vec<HistogramEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    /// `clean` or a corruption type.
    pub corruption: String,
    pub severity: Option<u8>,
    /// Best method first.
    pub ranking: Vec<String>,
    /// Same order as `ranking`.
    pub methods: Vec<MethodHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub subset_id: Option<String>,
    pub subset_size: Option<usize>,
    pub mode: SeverityMode,
    pub rows: Vec<EvaluationRow>,
}

impl EvaluationTable {
    pub fn row(&self, corruption: &str, severity: Option<u8>) -> Option<&EvaluationRow> {
        self.rows
            .iter()
            .find(|r| r.corruption == corruption && r.severity == severity)
    }

    pub fn cell(&self, corruption: &str, severity: Option<u8>, combination_id: &str) -> Option<&HistogramEntry> {
        self.row(corruption, severity)?
            .methods
            .iter()
            .flat_map(|m| &m.entries)
            .find(|e| e.combination_id == combination_id)
    }
}

/// Builds the table from each combination's snapshots. Every combination
/// needs a `clean` snapshot and all five severities of every corruption
/// type that appears anywhere.
pub fn evaluation_table(
    combos: &[(Combination, Vec<GeometrySnapshot>)],
    subset: Option<&SubsetSelection>,
    mode: SeverityMode,
) -> Result<EvaluationTable> {
    if combos.is_empty() {
        return Err(Error::InsufficientData("no combinations".into()));
    }
    let mut types = BTreeSet::new();
    for (_, snaps) in combos {
        for s in snaps {
            if let Some(k) = VariantKey::parse_dataset_id(&s.dataset_id) {
                types.insert(k.corruption);
            }
        }
    }
    let mut row_keys: Vec<(String, Option<u8>)> = vec![(CLEAN.to_string(), None)];
    for t in &types {
        match mode {
            SeverityMode::Aggregate => row_keys.push((t.clone(), None)),
            SeverityMode::PerSeverity => row_keys.extend(SEVERITIES.iter().map(|&s| (t.clone(), Some(s)))),
        }
    }
    let mut rows = Vec::new();
    for (corruption, severity) in row_keys {
        let datasets: Vec<String> = if corruption == CLEAN {
            vec![CLEAN.to_string()]
        } else {
            match severity {
                Some(s) => vec![VariantKey::new(corruption.clone(), s).dataset_id()],
                None => SEVERITIES
                    .iter()
                    .map(|&s| VariantKey::new(corruption.clone(), s).dataset_id())
                    .collect(),
            }
        };
        let mut by_method: BTreeMap<String, Vec<HistogramEntry>> = BTreeMap::new();
        for (combo, snaps) in combos {
            let (mut correct, mut total) = (0, 0);
            for d in &datasets {
                let snap = snaps.iter().find(|s| &s.dataset_id == d).ok_or_else(|| {
                    Error::NotFound(format!("snapshot '{d}' of combination '{}'", combo.id))
                })?;
                for s in &snap.samples {
                    if subset.is_none_or(|sel| sel.contains(s.sample_id)) {
                        total += 1;
                        correct += usize::from(s.correct);
                    }
                }
            }
            if total == 0 {
                return Err(Error::InsufficientData(format!(
                    "no subset samples in '{}' of '{}'",
                    corruption, combo.id
                )));
            }
            by_method
                .entry(combo.method.name().to_string())
                .or_default()
                .push(HistogramEntry {
                    combination_id: combo.id.clone(),
                    prune_rate: combo.prune_rate,
                    accuracy: correct as f64 / total as f64,
                    correct,
                    total,
                });
        }
        let mut methods: Vec<MethodHistogram> = by_method
            .into_iter()
            .map(|(method, mut entries)| {
                entries.sort_by(|a, b| {
                    a.prune_rate
                        .total_cmp(&b.prune_rate)
                        .then_with(|| a.combination_id.cmp(&b.combination_id))
                });
                let max_accuracy = entries.iter().map(|e| e.accuracy).fold(0.0, f64::max);
                MethodHistogram {
                    method,
                    max_accuracy,
                    entries,
                }
            })
            .collect();
        methods.sort_by(|a, b| {
            b.max_accuracy
                .total_cmp(&a.max_accuracy)
                .then_with(|| a.method.cmp(&b.method))
        });
        rows.push(EvaluationRow {
            corruption,
            severity,
            ranking: methods.iter().map(|m| m.method.clone()).collect(),
            methods,
        });
    }
    Ok(EvaluationTable {
        subset_id: subset.map(|s| s.id.clone()),
        subset_size: subset.map(|s| s.len()),
        mode,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub combination_id: String,
    pub method: String,
    pub prune_rate: f64,
    pub full: f64,
    pub subset: f64,
    /// `subset − full`; positive is an improvement on the subset.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub corruption: String,
    pub severity: Option<u8>,
    pub cells: Vec<DeltaCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDelta {
    pub subset_id: Option<String>,
    pub rows: Vec<DeltaRow>,
}

/// Per-cell accuracy difference between a subset table and the full table.
pub fn subset_delta(full: &EvaluationTable, subset: &EvaluationTable) -> Result<SubsetDelta> {
    let mut rows = Vec::new();
    for row in &full.rows {
        let other = subset.row(&row.corruption, row.severity).ok_or_else(|| {
            Error::InvalidArgument(format!("subset table has no row '{}'", row.corruption))
        })?;
        let mut cells = Vec::new();
        for m in &row.methods {
            for e in &m.entries {
                let s = other
                    .methods
                    .iter()
                    .flat_map(|m| &m.entries)
                    .find(|o| o.combination_id == e.combination_id)
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "subset table has no cell for '{}' in '{}'",
                            e.combination_id, row.corruption
                        ))
                    })?;
                cells.push(DeltaCell {
                    combination_id: e.combination_id.clone(),
                    method: m.method.clone(),
                    prune_rate: e.prune_rate,
                    full: e.accuracy,
                    subset: s.accuracy,
                    delta: s.accuracy - e.accuracy,
                });
            }
        }
        rows.push(DeltaRow {
            corruption: row.corruption.clone(),
            severity: row.severity,
            cells,
        });
    }
    Ok(SubsetDelta {
        subset_id: subset.subset_id.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySample;
    use crate::registry::PruneMethod;

    fn combo(id: &str, method: PruneMethod, rate: f64) -> Combination {
        Combination {
            id: id.into(),
            architecture: "mlp".into(),
            method,
            prune_rate: rate,
            dataset_id: "train".into(),
            checkpoint: "checkpoint".into(),
            clean_accuracy: 1.0,
        }
    }

    fn snap(combo: &str, dataset: &str, correct: &[bool]) -> GeometrySnapshot {
        let samples = correct
            .iter()
            .enumerate()
            .map(|(i, &c)| GeometrySample {
                sample_id: i as u64,
                true_label: 0,
                predicted_label: if c { 0 } else { 1 },
                angles: vec![10.0, 80.0],
                length: 1.0,
                margin: if c { 1.0 } else { -1.0 },
                correct: c,
                degenerate: false,
            })
            .collect();
        GeometrySnapshot::new(combo, dataset, 2, 0, samples).unwrap()
    }

    fn suite(combo: &str, clean: &[bool], noisy: &[bool]) -> Vec<GeometrySnapshot> {
        let mut v = vec![snap(combo, "clean", clean)];
        for s in 1..=5 {
            v.push(snap(combo, &format!("blur-s{s}"), noisy));
        }
        v
    }

    #[test]
    fn always_correct_gives_ones() {
        let t = [true; 4];
        let table = evaluation_table(&[(combo("a", PruneMethod::None, 0.0), suite("a", &t, &t))], None, SeverityMode::Aggregate).unwrap();
        assert_eq!(table.rows.len(), 2);
        for r in &table.rows {
            assert_eq!(r.methods[0].entries[0].accuracy, 1.0);
        }
        assert_eq!(table.cell("blur", None, "a").unwrap().total, 20);
    }

    #[test]
    fn ranking_by_max_accuracy_then_name() {
        let combos = vec![
            (combo("a", PruneMethod::Magnitude, 0.5), suite("a", &[true, true], &[true, false])),
            (combo("b", PruneMethod::Taylor, 0.5), suite("b", &[true, false], &[true, true])),
        ];
        let table = evaluation_table(&combos, None, SeverityMode::Aggregate).unwrap();
        assert_eq!(table.row("clean", None).unwrap().ranking, vec!["magnitude", "taylor"]);
        assert_eq!(table.row("blur", None).unwrap().ranking, vec!["taylor", "magnitude"]);
        let mut rev = combos.clone();
        rev.reverse();
        assert_eq!(evaluation_table(&rev, None, SeverityMode::Aggregate).unwrap(), table);
        // tie on clean when both are perfect: alphabetical
        let tie = vec![
            (combo("z", PruneMethod::Taylor, 0.1), suite("z", &[true], &[true])),
            (combo("y", PruneMethod::Random, 0.1), suite("y", &[true], &[true])),
        ];
        let t = evaluation_table(&tie, None, SeverityMode::Aggregate).unwrap();
        assert_eq!(t.rows[0].ranking, vec!["random", "taylor"]);
    }

    #[test]
    fn missing_cell_is_an_error() {
        let mut s = suite("a", &[true], &[true]);
        s.pop();
        let err = evaluation_table(&[(combo("a", PruneMethod::None, 0.0), s)], None, SeverityMode::Aggregate).unwrap_err();
        assert!(err.to_string().contains("blur-s5"), "{err}");
    }

    #[test]
    fn subset_deltas() {
        // full 0.9, subset 0.95
        let mut clean = vec![true; 40];
        for c in &mut clean[..4] {
            *c = false;
        }
        let combos = vec![(combo("a", PruneMethod::None, 0.0), suite("a", &clean, &clean))];
        let full = evaluation_table(&combos, None, SeverityMode::Aggregate).unwrap();
        let sel = SubsetSelection::new("s", 3..23, "").unwrap();
        let sub = evaluation_table(&combos, Some(&sel), SeverityMode::Aggregate).unwrap();
        let d = subset_delta(&full, &sub).unwrap();
        assert!((d.rows[0].cells[0].delta - 0.05).abs() < 1e-12);

        let same = subset_delta(&full, &full).unwrap();
        assert!(same.rows.iter().flat_map(|r| &r.cells).all(|c| c.delta == 0.0));

        let wrong = SubsetSelection::new("w", 0..4, "").unwrap();
        let sub = evaluation_table(&combos, Some(&wrong), SeverityMode::Aggregate).unwrap();
        let d = subset_delta(&full, &sub).unwrap();
        assert!((d.rows[0].cells[0].delta + 0.9).abs() < 1e-12);
    }

    #[test]
    fn per_severity_rows() {
        let t = [true; 3];
        let table = evaluation_table(&[(combo("a", PruneMethod::None, 0.0), suite("a", &t, &t))], None, SeverityMode::PerSeverity).unwrap();
        assert_eq!(table.rows.len(), 6);
        assert_eq!(table.cell("blur", Some(3), "a").unwrap().total, 3);
    }
}
