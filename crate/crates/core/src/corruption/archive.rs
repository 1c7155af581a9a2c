//! Directory archive of a corrupted suite.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<type>-s<severity>.f32   N x D little-endian f32, row-major
//! ```
//!
//! The manifest carries labels and sample ids so an archive can be loaded
//! without its base dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorruptedDataset, VariantKey, SEVERITIES};
use crate::error::{Error, Result};
use crate::io::{f32s_to_le, le_f32s, read_file, read_json, temp_sibling, write_atomic, write_json_atomic};
use crate::nn::{ImageShape, Matrix};

pub const ARCHIVE_FORMAT: &str = "prunelens-corruptions";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    #[serde(rename = "type")]
    pub corruption: String,
    pub severity: u8,
    pub file: String,
    pub shape: [usize; 2],
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format: String,
    pub version: u32,
    pub base_dataset_id: String,
    pub image_shape: ImageShape,
    pub num_samples: usize,
    pub num_classes: usize,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<u64>,
    pub types: Vec<String>,
    pub arrays: Vec<ArchiveEntry>,
}

/// Writes `suite` into a fresh directory `dir`. The directory is assembled
/// under a temporary name and renamed into place.
pub fn export_archive(suite: &CorruptedDataset, dir: &Path) -> Result<ArchiveManifest> {
    if dir.exists() {
        return Err(Error::Duplicate(format!("{} already exists", dir.display())));
    }
    let tmp = temp_sibling(dir);
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let result = (|| {
        let mut arrays = Vec::new();
        for key in suite.keys() {
            let m = suite.variant(key).expect("key from suite");
            let file = format!("{}.f32", key.dataset_id());
            write_atomic(&tmp.join(&file), &f32s_to_le(m.as_slice()))?;
            arrays.push(ArchiveEntry {
                corruption: key.corruption.clone(),
                severity: key.severity,
                file,
                shape: [m.rows(), m.cols()],
                dtype: "f32le".into(),
            });
        }
        let manifest = ArchiveManifest {
            format: ARCHIVE_FORMAT.into(),
            version: ARCHIVE_VERSION,
            base_dataset_id: suite.base_id().to_string(),
            image_shape: suite.image_shape(),
            num_samples: suite.num_samples(),
            num_classes: suite.num_classes(),
            labels: suite.labels().to_vec(),
            sample_ids: suite.sample_ids().to_vec(),
            types: suite.types().to_vec(),
            arrays,
        };
        write_json_atomic(&tmp.join("manifest.json"), &manifest)?;
        Ok(manifest)
    })();
    match result {
        Ok(m) => {
            fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
            Ok(m)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

/// Loads and validates an archive directory.
pub fn ingest_archive(dir: &Path) -> Result<CorruptedDataset> {
    let manifest_path = dir.join("manifest.json");
    let m: ArchiveManifest = read_json(&manifest_path)?;
    if m.format != ARCHIVE_FORMAT || m.version != ARCHIVE_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported archive {} v{}", m.format, m.version),
        ));
    }
    if m.labels.len() != m.num_samples || m.sample_ids.len() != m.num_samples {
        return Err(Error::Archive(format!(
            "manifest lists {} samples but {} labels and {} ids",
            m.num_samples,
            m.labels.len(),
            m.sample_ids.len()
        )));
    }
    let mut seen: BTreeMap<String, BTreeSet<u8>> = m.types.iter().map(|t| (t.clone(), BTreeSet::new())).collect();
    for e in &m.arrays {
        let Some(sevs) = seen.get_mut(&e.corruption) else {
            return Err(Error::Archive(format!(
                "array {} has type '{}' not listed in types",
                e.file, e.corruption
            )));
        };
        if !SEVERITIES.contains(&e.severity) {
            return Err(Error::Archive(format!("array {} has severity {}", e.file, e.severity)));
        }
        if !sevs.insert(e.severity) {
            return Err(Error::Archive(format!(
                "type '{}' severity {} listed twice",
                e.corruption, e.severity
            )));
        }
    }
    for (t, sevs) in &seen {
        if let Some(s) = SEVERITIES.iter().find(|s| !sevs.contains(s)) {
            return Err(Error::Archive(format!("type '{t}' is missing severity {s}")));
        }
    }
    let d = m.image_shape.len();
    let mut variants = BTreeMap::new();
    for e in &m.arrays {
        if e.dtype != "f32le" {
            return Err(Error::Archive(format!("array {} has dtype {}", e.file, e.dtype)));
        }
        if e.shape != [m.num_samples, d] {
            return Err(Error::Archive(format!(
                "array {} has shape {:?}, expected [{}, {}]",
                e.file, e.shape, m.num_samples, d
            )));
        }
        if e.file.contains('/') || e.file.contains('\\') || e.file.starts_with('.') {
            return Err(Error::Archive(format!("array file name '{}' is not a plain name", e.file)));
        }
        let path = dir.join(&e.file);
        let bytes = read_file(&path)?;
        let expected = m.num_samples * d * 4;
        if bytes.len() != expected {
            return Err(Error::format(
                &path,
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let values = le_f32s(&bytes);
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::format(&path, format!("pixel {v} outside [0, 1]")));
        }
        variants.insert(
            VariantKey::new(e.corruption.clone(), e.severity),
            Matrix::from_vec(m.num_samples, d, values)?,
        );
    }
    CorruptedDataset::new(
        m.base_dataset_id,
        m.image_shape,
        m.labels,
        m.sample_ids,
        m.num_classes,
        variants,
    )
}
