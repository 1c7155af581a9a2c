//! Checkpoint container: a directory holding `manifest.json` plus one
//! binary blob per layer.
//!
//! Network blob `layer-<i>.bin` (little-endian):
//!
//! ```text
//! weights  rows*cols x f32   row-major, masked entries are 0.0
//! bias     rows x f32        only when the manifest says has_bias
//! mask     rows*cols x u8    0 = pruned, 1 = kept
//! ```
//!
//! Mask containers use the same manifest with `kind = "mask"` and blobs
//! `mask-<i>.bin` holding only the `rows*cols` mask bytes. Every blob's
//! SHA-256 is recorded in the manifest and checked on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{f32s_to_le, le_f32s, read_file, read_json, sha256_hex, write_atomic, write_json_atomic};
use crate::nn::{Layer, Matrix, Network, NetworkSpec};

pub const FORMAT: &str = "prunelens-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Network,
    Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub has_bias: bool,
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
    /// Number of zero mask bits.
    pub masked: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub format: String,
    pub version: u32,
    pub kind: ContainerKind,
    pub spec: NetworkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prunable_layers: Option<Vec<usize>>,
    pub layers: Vec<LayerEntry>,
}

impl ContainerManifest {
    pub fn sparsity(&self) -> f64 {
        let total: usize = self.layers.iter().map(|l| l.total).sum();
        let masked: usize = self.layers.iter().map(|l| l.masked).sum();
        if total == 0 {
            0.0
        } else {
            masked as f64 / total as f64
        }
    }
}

pub(crate) fn mask_bytes(mask: &Matrix) -> Vec<u8> {
    mask.as_slice().iter().map(|&m| u8::from(m != 0.0)).collect()
}

fn mask_from_bytes(rows: usize, cols: usize, raw: &[u8], path: &Path) -> Result<Matrix> {
    let mut data = Vec::with_capacity(raw.len());
    for &b in raw {
        match b {
            0 => data.push(0.0),
            1 => data.push(1.0),
            other => return Err(Error::format(path, format!("mask byte {other} is not 0 or 1"))),
        }
    }
    Matrix::from_vec(rows, cols, data)
}

pub(crate) fn write_container(
    dir: &Path,
    kind: ContainerKind,
    spec: &NetworkSpec,
    prunable_layers: Option<Vec<usize>>,
    blobs: Vec<(LayerEntry, Vec<u8>)>,
) -> Result<ContainerManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::with_capacity(blobs.len());
    for (mut entry, bytes) in blobs {
        entry.bytes = bytes.len();
        entry.sha256 = sha256_hex(&bytes);
        write_atomic(&dir.join(&entry.file), &bytes)?;
        layers.push(entry);
    }
    let manifest = ContainerManifest {
        format: FORMAT.to_string(),
        version: VERSION,
        kind,
        spec: spec.clone(),
        prunable_layers,
        layers,
    };
    write_json_atomic(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ContainerManifest> {
    let path = dir.join(MANIFEST);
    let manifest: ContainerManifest = read_json(&path)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported container {} v{}", manifest.format, manifest.version),
        ));
    }
    Ok(manifest)
}

/// Reads a blob and checks its recorded length and hash.
pub(crate) fn read_blob(dir: &Path, entry: &LayerEntry) -> Result<Vec<u8>> {
    let path = dir.join(&entry.file);
    let bytes = read_file(&path)?;
    if bytes.len() != entry.bytes {
        return Err(Error::format(
            &path,
            format!("expected {} bytes, found {}", entry.bytes, bytes.len()),
        ));
    }
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

pub(crate) fn read_mask_layers(dir: &Path, manifest: &ContainerManifest) -> Result<Vec<Matrix>> {
    manifest
        .layers
        .iter()
        .map(|e| {
            let raw = read_blob(dir, e)?;
            mask_from_bytes(e.rows, e.cols, &raw, &dir.join(&e.file))
        })
        .collect()
}

pub fn save_checkpoint(net: &Network, dir: &Path) -> Result<ContainerManifest> {
    let blobs = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let (rows, cols) = layer.weights().shape();
            let mut bytes = f32s_to_le(layer.weights().as_slice());
            if let Some(b) = layer.bias() {
                bytes.extend(f32s_to_le(b));
            }
            bytes.extend(mask_bytes(layer.mask()));
            let masked = layer.mask().as_slice().iter().filter(|&&m| m == 0.0).count();
            let entry = LayerEntry {
                index: i,
                rows,
                cols,
                has_bias: layer.bias().is_some(),
                file: format!("layer-{i}.bin"),
                bytes: 0,
                sha256: String::new(),
                masked,
                total: rows * cols,
            };
            (entry, bytes)
        })
        .collect();
    write_container(dir, ContainerKind::Network, net.spec(), None, blobs)
}

pub fn load_checkpoint(dir: &Path) -> Result<Network> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != ContainerKind::Network {
        return Err(Error::format(dir.join(MANIFEST), "container holds a mask, not a network"));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, e) in manifest.layers.iter().enumerate() {
        let path = dir.join(&e.file);
        if e.index != i {
            return Err(Error::format(&path, format!("layer index {} at position {i}", e.index)));
        }
        let raw = read_blob(dir, e)?;
        let n = e.rows * e.cols;
        let bias_len = if e.has_bias { e.rows } else { 0 };
        let expected = 4 * n + 4 * bias_len + n;
        if raw.len() != expected {
            return Err(Error::format(
                &path,
                format!("expected {expected} bytes, found {}", raw.len()),
            ));
        }
        let weights = Matrix::from_vec(e.rows, e.cols, le_f32s(&raw[..4 * n]))?;
        let bias = e
            .has_bias
            .then(|| le_f32s(&raw[4 * n..4 * n + 4 * bias_len]));
        let mask = mask_from_bytes(e.rows, e.cols, &raw[4 * (n + bias_len)..], &path)?;
        if weights
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .any(|(&w, &m)| m == 0.0 && w != 0.0)
        {
            return Err(Error::format(&path, "masked weight is non-zero"));
        }
        layers.push(Layer::new(weights, bias, mask)?);
    }
    Network::from_layers(manifest.spec, layers)
}
