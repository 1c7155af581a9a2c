//! Snapshot file: a JSON manifest followed by columnar little-endian arrays.
//!
//! ```text
//! magic         b"PLSN"
//! version       u32 = 1
//! manifest_len  u32
//! manifest      manifest_len bytes of JSON (SnapshotHeader)
//! sample_id     N x u64
//! true_label    N x u32
//! predicted     N x u32
//! flags         N x u8     bit 0 = correct, bit 1 = degenerate
//! length        N x f64
//! margin        N x f64    signed
//! angles        C*N x f64  class-major: all N angles to class 0, then class 1, ...
//! ```
//!
//! Degenerate samples store NaN angles. Encoding is deterministic, so a
//! decode/encode cycle reproduces the bytes exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeometrySample, GeometrySnapshot};
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic, ByteReader};

const MAGIC: &[u8; 4] = b"PLSN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Column {
    name: String,
    dtype: String,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotHeader {
    combination_id: String,
    dataset_id: String,
    class_count: usize,
    num_samples: usize,
    created_at: u64,
    columns: Vec<Column>,
}

fn columns(n: usize, c: usize) -> Vec<Column> {
    [
        ("sample_id", "u64", n),
        ("true_label", "u32", n),
        ("predicted_label", "u32", n),
        ("flags", "u8", n),
        ("length", "f64", n),
        ("margin", "f64", n),
        ("angles", "f64", c * n),
    ]
    .into_iter()
    .map(|(name, dtype, count)| Column {
        name: name.into(),
        dtype: dtype.into(),
        count,
    })
    .collect()
}

pub fn snapshot_to_bytes(snap: &GeometrySnapshot) -> Result<Vec<u8>> {
    let n = snap.samples.len();
    let c = snap.class_count;
    let header = SnapshotHeader {
        combination_id: snap.combination_id.clone(),
        dataset_id: snap.dataset_id.clone(),
        class_count: c,
        num_samples: n,
        created_at: snap.created_at,
        columns: columns(n, c),
    };
    let manifest = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + manifest.len() + n * (8 + 4 + 4 + 1 + 16 + 8 * c));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    for s in &snap.samples {
        out.extend_from_slice(&s.sample_id.to_le_bytes());
    }
    for s in &snap.samples {
        out.extend_from_slice(&(s.true_label as u32).to_le_bytes());
    }
    for s in &snap.samples {
        out.extend_from_slice(&(s.predicted_label as u32).to_le_bytes());
    }
    for s in &snap.samples {
        out.push(u8::from(s.correct) | (u8::from(s.degenerate) << 1));
    }
    for s in &snap.samples {
        out.extend_from_slice(&s.length.to_le_bytes());
    }
    for s in &snap.samples {
        out.extend_from_slice(&s.margin.to_le_bytes());
    }
    for class in 0..c {
        for s in &snap.samples {
            out.extend_from_slice(&s.angles[class].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn snapshot_from_bytes(bytes: &[u8], origin: &Path) -> Result<GeometrySnapshot> {
    let mut r = ByteReader::new(bytes, origin);
    if r.take(4)? != MAGIC {
        return Err(Error::format(origin, "not a snapshot file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(origin, format!("unsupported snapshot version {version}")));
    }
    let len = r.u32()? as usize;
    let header: SnapshotHeader = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::format(origin, format!("bad manifest: {e}")))?;
    let (n, c) = (header.num_samples, header.class_count);
    if header.columns != columns(n, c) {
        return Err(Error::format(origin, "unexpected column layout"));
    }
    let ids = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let truth = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let pred = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let flags = r.take(n)?.to_vec();
    let lengths = r.f64_vec(n)?;
    let margins = r.f64_vec(n)?;
    let angles = r.f64_vec(c * n)?;
    r.finish()?;
    let samples = (0..n)
        .map(|i| {
            let correct = flags[i] & 1 != 0;
            let predicted = pred[i] as usize;
            if predicted >= c || (correct != (truth[i] == pred[i])) {
                return Err(Error::format(origin, format!("inconsistent labels for sample {}", ids[i])));
            }
            Ok(GeometrySample {
                sample_id: ids[i],
                true_label: truth[i] as usize,
                predicted_label: predicted,
                angles: (0..c).map(|class| angles[class * n + i]).collect(),
                length: lengths[i],
                margin: margins[i],
                correct,
                degenerate: flags[i] & 2 != 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GeometrySnapshot::new(
        header.combination_id,
        header.dataset_id,
        c,
        header.created_at,
        samples,
    )
}

pub fn write_snapshot(snap: &GeometrySnapshot, path: &Path) -> Result<Vec<u8>> {
    let bytes = snapshot_to_bytes(snap)?;
    write_atomic(path, &bytes)?;
    Ok(bytes)
}

pub fn read_snapshot(path: &Path) -> Result<GeometrySnapshot> {
    snapshot_from_bytes(&read_file(path)?, path)
}
