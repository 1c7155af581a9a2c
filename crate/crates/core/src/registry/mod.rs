//! File-based store of combinations (a trained or pruned model plus its
//! geometry snapshots) and the aggregations served to the workbench.
//!
//! ```text
//! <root>/<combo-id>/manifest.json
//! <root>/<combo-id>/checkpoint/          network container
//! <root>/<combo-id>/snapshot-<dataset>.bin
//! <root>/_subsets/<subset-id>.json
//! ```
//!
//! Every file referenced by a manifest carries its SHA-256, checked on load.
//! Combination directories are assembled under a temporary name and renamed
//! into place; snapshot and manifest files are written by rename as well.

mod table;
mod trajectory;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptedDataset, RobustnessRecord, VariantKey};
use crate::error::{Error, Result};
use crate::geometry::{geometry_snapshot, snapshot_from_bytes, snapshot_to_bytes, GeometrySnapshot};
use crate::io::{read_file, read_json, sha256_hex, temp_sibling, write_atomic, write_json_atomic};
use crate::nn::{checkpoint, LabeledDataset, Network};
use crate::stats::{self, CorrelationReport, DensityCurve};

pub use table::{
    evaluation_table, subset_delta, DeltaCell, DeltaRow, EvaluationRow, EvaluationTable,
    HistogramEntry, MethodHistogram, SeverityMode, SubsetDelta,
};
pub use trajectory::{
    metric_difference_select, trajectories, Category, Metric, MetricSelection, Predicate,
    TrajectoryPair, TrajectoryReport,
};

pub const CLEAN: &str = "clean";
const MANIFEST_FORMAT: &str = "prunelens-combination";
const SUBSET_DIR: &str = "_subsets";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMethod {
    None,
    Random,
    Magnitude,
    Taylor,
    Mpt,
}

impl PruneMethod {
    pub fn name(self) -> &'static str {
        match self {
            PruneMethod::None => "none",
            PruneMethod::Random => "random",
            PruneMethod::Magnitude => "magnitude",
            PruneMethod::Taylor => "taylor",
            PruneMethod::Mpt => "mpt",
        }
    }
}

impl std::str::FromStr for PruneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PruneMethod::None,
            PruneMethod::Random,
            PruneMethod::Magnitude,
            PruneMethod::Taylor,
            PruneMethod::Mpt,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown pruning method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub id: String,
    pub architecture: String,
    pub method: PruneMethod,
    pub prune_rate: f64,
    /// Dataset the model was trained on.
    pub dataset_id: String,
    /// Relative to the combination directory.
    pub checkpoint: String,
    pub clean_accuracy: f64,
}

impl Combination {
    pub fn validate(&self) -> Result<()> {
        validate_id(&self.id)?;
        if !(0.0..1.0).contains(&self.prune_rate) {
            return Err(Error::InvalidArgument(format!(
                "prune rate {} outside [0, 1)",
                self.prune_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.clean_accuracy) {
            return Err(Error::InvalidArgument(format!(
                "accuracy {} outside [0, 1]",
                self.clean_accuracy
            )));
        }
        Ok(())
    }
}

/// Ids start with an ASCII letter or digit, followed by letters, digits,
/// `_`, `.` or `-`.
pub fn validate_id(id: &str) -> Result<()> {
    let mut chars = id.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'));
    if !ok || id.len() > 128 {
        return Err(Error::InvalidArgument(format!("invalid id '{id}'")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub dataset_id: String,
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
    pub num_samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationManifest {
    pub format: String,
    pub version: u32,
    pub combination: Combination,
    /// Hash of the checkpoint container's own manifest, which in turn
    /// hashes each blob.
    pub checkpoint_sha256: String,
    pub created_at: u64,
    pub snapshots: Vec<SnapshotEntry>,
}

impl CombinationManifest {
    pub fn snapshot(&self, dataset_id: &str) -> Option<&SnapshotEntry> {
        self.snapshots.iter().find(|s| s.dataset_id == dataset_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub id: String,
    /// Ascending, no duplicates.
    pub sample_ids: Vec<u64>,
    pub note: String,
}

impl SubsetSelection {
    pub fn new(id: impl Into<String>, sample_ids: impl IntoIterator<Item = u64>, note: impl Into<String>) -> Result<Self> {
        let id = id.into();
        validate_id(&id)?;
        let set: BTreeSet<u64> = sample_ids.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidArgument(format!("subset '{id}' is empty")));
        }
        Ok(SubsetSelection {
            id,
            sample_ids: set.into_iter().collect(),
            note: note.into(),
        })
    }

    pub fn contains(&self, id: u64) -> bool {
        self.sample_ids.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginShift {
    pub combination_id: String,
    pub clean_accuracy: f64,
    pub total_pairs: usize,
    pub excluded: usize,
    pub trimmed_count: usize,
    pub median: f64,
    pub mean: f64,
    pub density: DensityCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginShiftComparison {
    pub reference: MarginShift,
    pub compared: MarginShift,
    pub accuracy_gap: f64,
    /// `compared.median <= reference.median`.
    pub compared_shifts_less: bool,
}

#[derive(Debug, Clone)]
pub struct Registry {
    root: PathBuf,
}

impl Registry {
    /// Opens an existing registry directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::NotFound(format!("registry root {}", root.display())));
        }
        Ok(Registry { root })
    }

    /// Creates the root directory if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Registry { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn combo_dir(&self, id: &str) -> Result<PathBuf> {
        validate_id(id)?;
        Ok(self.root.join(id))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.combo_dir(id).map(|d| d.join("manifest.json").is_file()).unwrap_or(false)
    }

    /// Stores a new combination with its network and any snapshots.
    pub fn register(
        &self,
        combination: Combination,
        net: &Network,
        snapshots: &[GeometrySnapshot],
        created_at: u64,
    ) -> Result<String> {
        combination.validate()?;
        let dir = self.combo_dir(&combination.id)?;
        if dir.exists() {
            return Err(Error::Duplicate(format!("combination '{}'", combination.id)));
        }
        let tmp = temp_sibling(&dir);
        let result = (|| {
            fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut combination = combination.clone();
            combination.checkpoint = "checkpoint".into();
            checkpoint::save_checkpoint(net, &tmp.join("checkpoint"))?;
            let ckpt_hash = sha256_hex(&read_file(&tmp.join("checkpoint").join("manifest.json"))?);
            let mut entries = Vec::new();
            let mut seen = BTreeSet::new();
            for snap in snapshots {
                check_snapshot_for(&combination.id, net, snap)?;
                if !seen.insert(snap.dataset_id.clone()) {
                    return Err(Error::Duplicate(format!("snapshot for dataset '{}'", snap.dataset_id)));
                }
                entries.push(write_snapshot_file(&tmp, snap)?);
            }
            let manifest = CombinationManifest {
                format: MANIFEST_FORMAT.into(),
                version: 1,
                combination,
                checkpoint_sha256: ckpt_hash,
                created_at,
                snapshots: entries,
            };
            write_json_atomic(&tmp.join("manifest.json"), &manifest)
        })();
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        if dir.exists() {
            let _ = fs::remove_dir_all(&tmp);
            return Err(Error::Duplicate(format!("combination '{}'", combination.id)));
        }
        fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
        Ok(combination.id)
    }

    /// Adds a snapshot to an existing combination. Fails if one already
    /// exists for the dataset.
    pub fn add_snapshot(&self, snap: &GeometrySnapshot) -> Result<SnapshotEntry> {
        let mut manifest = self.manifest(&snap.combination_id)?;
        if manifest.snapshot(&snap.dataset_id).is_some() {
            return Err(Error::Duplicate(format!(
                "snapshot '{}' of '{}'",
                snap.dataset_id, snap.combination_id
            )));
        }
        let net = self.load_network(&snap.combination_id)?;
        check_snapshot_for(&snap.combination_id, &net, snap)?;
        let dir = self.combo_dir(&snap.combination_id)?;
        let entry = write_snapshot_file(&dir, snap)?;
        manifest.snapshots.push(entry.clone());
        write_json_atomic(&dir.join("manifest.json"), &manifest)?;
        Ok(entry)
    }

    pub fn manifest(&self, id: &str) -> Result<CombinationManifest> {
        let path = self.combo_dir(id)?.join("manifest.json");
        if !path.is_file() {
            return Err(Error::NotFound(format!("combination '{id}'")));
        }
        let m: CombinationManifest = read_json(&path)?;
        if m.format != MANIFEST_FORMAT || m.combination.id != id {
            return Err(Error::format(&path, "not a manifest for this combination"));
        }
        Ok(m)
    }

    /// All combinations, sorted by id.
    pub fn list(&self) -> Result<Vec<Combination>> {
        Ok(self.manifests()?.into_iter().map(|m| m.combination).collect())
    }

    pub fn manifests(&self) -> Result<Vec<CombinationManifest>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if validate_id(&name).is_ok() && entry.path().join("manifest.json").is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        ids.iter().map(|id| self.manifest(id)).collect()
    }

    pub fn load_network(&self, id: &str) -> Result<Network> {
        let m = self.manifest(id)?;
        let dir = self.combo_dir(id)?.join(&m.combination.checkpoint);
        let manifest_path = dir.join("manifest.json");
        let found = sha256_hex(&read_file(&manifest_path)?);
        if found != m.checkpoint_sha256 {
            return Err(Error::HashMismatch {
                path: manifest_path,
                expected: m.checkpoint_sha256,
                found,
            });
        }
        checkpoint::load_checkpoint(&dir)
    }

    /// Raw snapshot file after its hash has been checked.
    pub fn snapshot_bytes(&self, id: &str, dataset_id: &str) -> Result<Vec<u8>> {
        let m = self.manifest(id)?;
        let entry = m
            .snapshot(dataset_id)
            .ok_or_else(|| Error::NotFound(format!("snapshot '{dataset_id}' of '{id}'")))?;
        let path = self.combo_dir(id)?.join(&entry.file);
        let bytes = read_file(&path)?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(Error::HashMismatch {
                path,
                expected: entry.sha256.clone(),
                found,
            });
        }
        Ok(bytes)
    }

    pub fn load_snapshot(&self, id: &str, dataset_id: &str) -> Result<GeometrySnapshot> {
        let bytes = self.snapshot_bytes(id, dataset_id)?;
        let path = self.combo_dir(id)?.join(format!("snapshot-{dataset_id}.bin"));
        snapshot_from_bytes(&bytes, &path)
    }

    pub fn load_snapshots(&self, id: &str) -> Result<Vec<GeometrySnapshot>> {
        let m = self.manifest(id)?;
        m.snapshots
            .iter()
            .map(|s| self.load_snapshot(id, &s.dataset_id))
            .collect()
    }

    /// Corrupted snapshots of a combination with their variant keys.
    pub fn corrupted_snapshots(&self, id: &str) -> Result<Vec<(VariantKey, GeometrySnapshot)>> {
        let m = self.manifest(id)?;
        m.snapshots
            .iter()
            .filter_map(|s| VariantKey::parse_dataset_id(&s.dataset_id))
            .map(|k| Ok((k.clone(), self.load_snapshot(id, &k.dataset_id())?)))
            .collect()
    }

    /// Robustness per sample, counted from the correct flags of every
    /// corrupted snapshot.
    pub fn robustness(&self, id: &str) -> Result<Vec<RobustnessRecord>> {
        let clean = self.load_snapshot(id, CLEAN)?;
        let corrupted = self.corrupted_snapshots(id)?;
        robustness_from_snapshots(&clean, corrupted.iter().map(|(_, s)| s))
    }

    pub fn correlations(&self, id: &str) -> Result<CorrelationReport> {
        let clean = self.load_snapshot(id, CLEAN)?;
        stats::metric_robustness_correlations(&clean, &self.robustness(id)?)
    }

    pub fn margin_shift(&self, id: &str) -> Result<MarginShift> {
        let m = self.manifest(id)?;
        let clean = self.load_snapshot(id, CLEAN)?;
        let corrupted = self.corrupted_snapshots(id)?;
        let refs: Vec<(VariantKey, &GeometrySnapshot)> =
            corrupted.iter().map(|(k, s)| (k.clone(), s)).collect();
        let r = stats::relative_margin_change(&clean, &refs)?;
        Ok(MarginShift {
            combination_id: id.to_string(),
            clean_accuracy: m.combination.clean_accuracy,
            total_pairs: r.total_pairs,
            excluded: r.excluded,
            trimmed_count: r.total_pairs - r.excluded - r.values.len(),
            median: r.median,
            mean: r.mean,
            density: r.density,
        })
    }

    pub fn compare_margin_shift(&self, reference: &str, compared: &str) -> Result<MarginShiftComparison> {
        let reference = self.margin_shift(reference)?;
        let compared = self.margin_shift(compared)?;
        Ok(MarginShiftComparison {
            accuracy_gap: (compared.clean_accuracy - reference.clean_accuracy).abs(),
            compared_shifts_less: compared.median <= reference.median,
            reference,
            compared,
        })
    }

    /// Evaluation table over every registered combination. Rows are `clean`
    /// plus each corruption type found in any combination.
    pub fn evaluation_table(&self, subset: Option<&SubsetSelection>, mode: SeverityMode) -> Result<EvaluationTable> {
        let mut cells = Vec::new();
        for m in self.manifests()? {
            let snaps = self.load_snapshots(&m.combination.id)?;
            cells.push((m.combination, snaps));
        }
        evaluation_table(&cells, subset, mode)
    }

    pub fn trajectories(
        &self,
        reference: &str,
        compared: &str,
        class_label: usize,
        dataset_id: &str,
    ) -> Result<TrajectoryReport> {
        let r = self.load_snapshot(reference, dataset_id)?;
        let c = self.load_snapshot(compared, dataset_id)?;
        trajectories(&r, &c, class_label)
    }

    fn subset_path(&self, id: &str) -> Result<PathBuf> {
        validate_id(id)?;
        Ok(self.root.join(SUBSET_DIR).join(format!("{id}.json")))
    }

    /// Stores a subset after checking every id against the clean snapshot of
    /// each combination. Fails with [`Error::UnknownSample`] naming the first
    /// unknown id.
    pub fn save_subset(&self, subset: &SubsetSelection) -> Result<()> {
        validate_id(&subset.id)?;
        if subset.is_empty() {
            return Err(Error::InvalidArgument(format!("subset '{}' is empty", subset.id)));
        }
        let mut known = BTreeSet::new();
        for m in self.manifests()? {
            if m.snapshot(CLEAN).is_some() {
                known.extend(self.load_snapshot(&m.combination.id, CLEAN)?.sample_ids());
            }
        }
        if let Some(&bad) = subset.sample_ids.iter().find(|id| !known.contains(id)) {
            return Err(Error::UnknownSample(bad));
        }
        let path = self.subset_path(&subset.id)?;
        if path.exists() {
            return Err(Error::Duplicate(format!("subset '{}'", subset.id)));
        }
        write_json_atomic(&path, subset)
    }

    pub fn load_subset(&self, id: &str) -> Result<SubsetSelection> {
        let path = self.subset_path(id)?;
        if !path.is_file() {
            return Err(Error::NotFound(format!("subset '{id}'")));
        }
        read_json(&path)
    }

    pub fn list_subsets(&self) -> Result<Vec<String>> {
        let dir = self.root.join(SUBSET_DIR);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                if validate_id(id).is_ok() {
                    out.push(id.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

fn check_snapshot_for(id: &str, net: &Network, snap: &GeometrySnapshot) -> Result<()> {
    if snap.combination_id != id {
        return Err(Error::InvalidArgument(format!(
            "snapshot belongs to '{}', not '{id}'",
            snap.combination_id
        )));
    }
    if snap.class_count != net.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "snapshot has {} classes, network {}",
            snap.class_count,
            net.num_classes()
        )));
    }
    if snap.dataset_id != CLEAN && VariantKey::parse_dataset_id(&snap.dataset_id).is_none() {
        validate_id(&snap.dataset_id)?;
    }
    Ok(())
}

fn write_snapshot_file(dir: &Path, snap: &GeometrySnapshot) -> Result<SnapshotEntry> {
    let file = format!("snapshot-{}.bin", snap.dataset_id);
    let bytes = snapshot_to_bytes(snap)?;
    write_atomic(&dir.join(&file), &bytes)?;
    Ok(SnapshotEntry {
        dataset_id: snap.dataset_id.clone(),
        file,
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
        num_samples: snap.samples.len(),
        accuracy: snap.accuracy(),
    })
}

/// Snapshots of `net` on the clean data (dataset id `clean`) and on every
/// variant of `suite` (ids `<type>-s<k>`), ready for [`Registry::register`].
pub fn snapshot_suite(
    net: &Network,
    combination_id: &str,
    clean: &LabeledDataset,
    suite: Option<&CorruptedDataset>,
    created_at: u64,
) -> Result<Vec<GeometrySnapshot>> {
    let mut clean_snap = geometry_snapshot(net, clean, combination_id, created_at)?;
    clean_snap.dataset_id = CLEAN.to_string();
    let mut out = vec![clean_snap];
    if let Some(suite) = suite {
        suite.check_aligned(clean)?;
        for key in suite.keys() {
            out.push(geometry_snapshot(net, &suite.dataset(key)?, combination_id, created_at)?);
        }
    }
    Ok(out)
}

/// Counts, for each sample of `clean`, how many corrupted snapshots mark it
/// correct.
pub fn robustness_from_snapshots<'a>(
    clean: &GeometrySnapshot,
    corrupted: impl IntoIterator<Item = &'a GeometrySnapshot>,
) -> Result<Vec<RobustnessRecord>> {
    let mut counts: BTreeMap<u64, usize> = clean.samples.iter().map(|s| (s.sample_id, 0)).collect();
    let mut max = 0;
    for snap in corrupted {
        max += 1;
        for s in &snap.samples {
            match counts.get_mut(&s.sample_id) {
                Some(c) => *c += usize::from(s.correct),
                None => return Err(Error::UnknownSample(s.sample_id)),
            }
        }
    }
    if max == 0 {
        return Err(Error::InsufficientData("no corrupted snapshots".into()));
    }
    Ok(counts
        .into_iter()
        .map(|(sample_id, correct_count)| RobustnessRecord {
            sample_id,
            correct_count,
            max_count: max,
        })
        .collect())
}
