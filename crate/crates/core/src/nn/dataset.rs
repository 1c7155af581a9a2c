//! Labeled datasets and their on-disk form.
//!
//! Dataset file layout (all integers little-endian):
//!
//! ```text
//! magic      b"PLDS"
//! version    u32 = 1
//! rows       u64                    N
//! cols       u64                    input dimension
//! classes    u64
//! shape      3 x u32                image height, width, channels (0,0,0 = not an image)
//! id_len     u32, id bytes (utf-8)  dataset id
//! ids        N x u64
//! labels     N x u32
//! inputs     N*cols x f32           row-major
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic, ByteReader};
use crate::nn::Matrix;

const MAGIC: &[u8; 4] = b"PLDS";
const VERSION: u32 = 1;

/// Height, width and channel count of an image stored as a flattened
/// HWC row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    id: String,
    inputs: Matrix,
    labels: Vec<usize>,
    sample_ids: Vec<u64>,
    num_classes: usize,
    image_shape: Option<ImageShape>,
}

impl LabeledDataset {
    pub fn new(
        id: impl Into<String>,
        inputs: Matrix,
        labels: Vec<usize>,
        sample_ids: Vec<u64>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = inputs.rows();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if labels.len() != n || sample_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{n} inputs, {} labels, {} ids",
                labels.len(),
                sample_ids.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = sample_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Duplicate(format!("sample id {dup}")));
        }
        Ok(LabeledDataset {
            id: id.into(),
            inputs,
            labels,
            sample_ids,
            num_classes,
            image_shape: None,
        })
    }

    /// Same dataset with sequential ids `0..N`.
    pub fn with_sequential_ids(
        id: impl Into<String>,
        inputs: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let ids = (0..inputs.rows() as u64).collect();
        LabeledDataset::new(id, inputs, labels, ids, num_classes)
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.len() != self.inputs.cols() {
            return Err(Error::Dimension(format!(
                "image shape {shape:?} does not match input width {}",
                self.inputs.cols()
            )));
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows by index, keeping ids, labels and image shape.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty subset".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange(format!(
                "row {bad} of {}",
                self.len()
            )));
        }
        let mut out = LabeledDataset::new(
            self.id.clone(),
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.sample_ids[i]).collect(),
            self.num_classes,
        )?;
        out.image_shape = self.image_shape;
        Ok(out)
    }

    /// Same ids and labels with different inputs (e.g. a corrupted copy).
    pub fn with_inputs(&self, id: impl Into<String>, inputs: Matrix) -> Result<LabeledDataset> {
        if inputs.shape() != self.inputs.shape() {
            return Err(Error::Dimension(format!(
                "replacement inputs {:?} vs {:?}",
                inputs.shape(),
                self.inputs.shape()
            )));
        }
        Ok(LabeledDataset {
            id: id.into(),
            inputs,
            labels: self.labels.clone(),
            sample_ids: self.sample_ids.clone(),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(64 + n * (12 + 4 * self.input_dim()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.input_dim() as u64).to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u64).to_le_bytes());
        let shape = self.image_shape.unwrap_or(ImageShape::new(0, 0, 0));
        for d in [shape.height, shape.width, shape.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.id.as_bytes());
        for id in &self.sample_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        for v in self.inputs.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<LabeledDataset> {
        let mut r = ByteReader::new(bytes, origin);
        if r.take(4)? != MAGIC {
            return Err(Error::format(origin, "not a dataset file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(origin, format!("unsupported version {version}")));
        }
        let n = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let classes = r.u64()? as usize;
        let (h, w, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let id_len = r.u32()? as usize;
        let id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| Error::format(origin, "dataset id is not utf-8"))?;
        let ids = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let labels = (0..n)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let data = r.f32_vec(n * cols)?;
        r.finish()?;
        let ds = LabeledDataset::new(id, Matrix::from_vec(n, cols, data)?, labels, ids, classes)?;
        if h * w * c > 0 {
            ds.with_image_shape(ImageShape::new(h, w, c))
        } else {
            Ok(ds)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<LabeledDataset> {
        LabeledDataset::from_bytes(&read_file(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        LabeledDataset::new("tiny", x, vec![0, 1, 1], vec![10, 11, 12], 2).unwrap()
    }

    #[test]
    fn validates_labels_and_ids() {
        let x = Matrix::zeros(2, 2);
        assert!(matches!(
            LabeledDataset::new("d", x.clone(), vec![0, 2], vec![0, 1], 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
        assert!(matches!(
            LabeledDataset::new("d", x.clone(), vec![0, 1], vec![3, 3], 2),
            Err(Error::Duplicate(_))
        ));
        assert!(LabeledDataset::new("d", Matrix::zeros(0, 2), vec![], vec![], 2).is_err());
    }

    #[test]
    fn bytes_round_trip() {
        let ds = tiny().with_image_shape(ImageShape::new(1, 2, 1)).unwrap();
        let back = LabeledDataset::from_bytes(&ds.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = tiny().to_bytes();
        let err = LabeledDataset::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem"));
        assert!(err.is_err());
    }

    #[test]
    fn subset_keeps_ids() {
        let s = tiny().subset(&[2, 0]).unwrap();
        assert_eq!(s.sample_ids(), &[12, 10]);
        assert_eq!(s.labels(), &[1, 0]);
    }
}
