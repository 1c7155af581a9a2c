//! Latent geometry of the penultimate feature space.
//!
//! With a bias-free classifier the logit of class `j` is
//! `W_j · X = ‖W_j‖ ‖X‖ cos θ_j`, so a prediction is fully described by the
//! feature length `‖X‖`, the angles `θ_j` to the class directions `W_j`,
//! and the distance from `X` to the nearest decision hyperplane
//! `(W_p − W_j) · X = 0`.

mod store;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use store::{read_snapshot, snapshot_from_bytes, snapshot_to_bytes, write_snapshot};

use crate::error::{Error, Result};
use crate::nn::{argmax, LabeledDataset, Matrix, Network};

/// Norms at or below this are treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDirections {
    directions: Matrix,
    rows: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl ClassDirections {
    pub fn new(directions: Matrix) -> Result<Self> {
        let rows: Vec<Vec<f64>> = directions
            .row_iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let norms: Vec<f64> = rows.iter().map(|r| norm(r)).collect();
        if let Some(j) = norms.iter().position(|&n| n <= DEGENERATE_EPS) {
            return Err(Error::ZeroClassDirection(j));
        }
        Ok(ClassDirections {
            directions,
            rows,
            norms,
        })
    }

    pub fn directions(&self) -> &Matrix {
        &self.directions
    }

    pub fn direction(&self, class: usize) -> &[f64] {
        &self.rows[class]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn num_classes(&self) -> usize {
        self.directions.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.directions.cols()
    }

    /// `W_j · X` for every class, accumulated in the same order as the
    /// network's forward pass.
    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|w| dot(w, features)).collect()
    }
}

/// Rows of the final, bias-free layer.
pub fn class_directions(net: &Network) -> Result<ClassDirections> {
    ClassDirections::new(net.classifier().weights().clone())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angle between a feature vector and a direction, in degrees.
pub fn angle(x: &[f64], direction: &[f64]) -> Result<f64> {
    if x.len() != direction.len() {
        return Err(Error::Dimension(format!(
            "feature of length {} vs direction of length {}",
            x.len(),
            direction.len()
        )));
    }
    let nx = norm(x);
    if nx <= DEGENERATE_EPS {
        return Err(Error::DegenerateFeature(nx));
    }
    let nw = norm(direction);
    if nw <= DEGENERATE_EPS {
        return Err(Error::InvalidArgument("zero-length direction".into()));
    }
    Ok((dot(x, direction) / (nx * nw)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Distance from `x` to the nearest hyperplane `(W_p − W_j) · X = 0`,
/// `j ≠ predicted`. Non-negative when `predicted` is the argmax for `x`.
pub fn margin(x: &[f64], dirs: &ClassDirections, predicted: usize) -> Result<f64> {
    let c = dirs.num_classes();
    if predicted >= c {
        return Err(Error::LabelOutOfRange {
            label: predicted,
            classes: c,
        });
    }
    if x.len() != dirs.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature of length {} for {}-dim directions",
            x.len(),
            dirs.feature_dim()
        )));
    }
    let wp = dirs.direction(predicted);
    let mut best = f64::INFINITY;
    for j in (0..c).filter(|&j| j != predicted) {
        let wj = dirs.direction(j);
        let diff: Vec<f64> = wp.iter().zip(wj).map(|(a, b)| a - b).collect();
        let denom = norm(&diff);
        if denom <= DEGENERATE_EPS {
            return Err(Error::CoincidentDirections(predicted.min(j), predicted.max(j)));
        }
        best = best.min(dot(&diff, x) / denom);
    }
    Ok(best)
}

/// `distance` with the sign of correctness: negative for a misprediction.
pub fn signed_margin(distance: f64, correct: bool) -> f64 {
    if correct {
        distance
    } else {
        -distance
    }
}

/// `P(y = i | x)` through the angle/length decomposition
/// `1 / (Σ_{j≠i} exp(‖X‖ (C_j cos θ_j − C_i cos θ_i)) + 1)`.
pub fn decompose_probability(x: &[f64], dirs: &ClassDirections, class: usize) -> Result<f64> {
    let c = dirs.num_classes();
    if class >= c {
        return Err(Error::LabelOutOfRange { label: class, classes: c });
    }
    let length = norm(x);
    if length <= DEGENERATE_EPS {
        return Err(Error::DegenerateFeature(length));
    }
    let cosines = (0..c)
        .map(|j| angle(x, dirs.direction(j)).map(|a| a.to_radians().cos()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(decompose_from_polar(length, dirs.norms(), &cosines, class))
}

/// The same decomposition from precomputed length, norms and cosines.
pub fn decompose_from_polar(length: f64, norms: &[f64], cosines: &[f64], class: usize) -> f64 {
    let own = norms[class] * cosines[class];
    let sum: f64 = (0..norms.len())
        .filter(|&j| j != class)
        .map(|j| (length * (norms[j] * cosines[j] - own)).exp())
        .sum();
    1.0 / (sum + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySample {
    pub sample_id: u64,
    pub true_label: usize,
    pub predicted_label: usize,
    /// Degrees to every class direction; NaN (`null` in JSON) when degenerate.
    #[serde(with = "nan_as_null")]
    pub angles: Vec<f64>,
    pub length: f64,
    /// Signed distance to the decision boundary: negative on misprediction.
    pub margin: f64,
    pub correct: bool,
    pub degenerate: bool,
}

impl GeometrySample {
    pub fn angle_to_true(&self) -> f64 {
        self.angles[self.true_label]
    }

    pub fn boundary_distance(&self) -> f64 {
        self.margin.abs()
    }

    /// Builds the record for one feature row.
    pub fn measure(
        sample_id: u64,
        true_label: usize,
        features: &[f64],
        dirs: &ClassDirections,
    ) -> Result<GeometrySample> {
        let c = dirs.num_classes();
        let logits = dirs.logits(features);
        let predicted = argmax(&logits);
        let length = norm(features);
        let degenerate = length <= DEGENERATE_EPS;
        let angles = if degenerate {
            vec![f64::NAN; c]
        } else {
            (0..c)
                .map(|j| angle(features, dirs.direction(j)))
                .collect::<Result<Vec<_>>>()?
        };
        let correct = predicted == true_label;
        let distance = margin(features, dirs, predicted)?.max(0.0);
        Ok(GeometrySample {
            sample_id,
            true_label,
            predicted_label: predicted,
            angles,
            length,
            margin: signed_margin(distance, correct),
            correct,
            degenerate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySnapshot {
    pub combination_id: String,
    pub dataset_id: String,
    pub class_count: usize,
    /// Unix seconds.
    pub created_at: u64,
    pub samples: Vec<GeometrySample>,
}

impl GeometrySnapshot {
    pub fn new(
        combination_id: impl Into<String>,
        dataset_id: impl Into<String>,
        class_count: usize,
        created_at: u64,
        mut samples: Vec<GeometrySample>,
    ) -> Result<Self> {
        samples.sort_by_key(|s| s.sample_id);
        if samples.windows(2).any(|w| w[0].sample_id == w[1].sample_id) {
            return Err(Error::Duplicate("sample id in snapshot".into()));
        }
        if let Some(s) = samples
            .iter()
            .find(|s| s.true_label >= class_count || s.angles.len() != class_count)
        {
            return Err(Error::InvalidArgument(format!(
                "sample {} does not fit {class_count} classes",
                s.sample_id
            )));
        }
        Ok(GeometrySnapshot {
            combination_id: combination_id.into(),
            dataset_id: dataset_id.into(),
            class_count,
            created_at,
            samples,
        })
    }

    pub fn accuracy(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.correct).count() as f64 / self.samples.len() as f64
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for s in &self.samples {
            h[s.true_label] += 1;
        }
        h
    }

    pub fn get(&self, sample_id: u64) -> Option<&GeometrySample> {
        self.samples
            .binary_search_by_key(&sample_id, |s| s.sample_id)
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn sample_ids(&self) -> HashSet<u64> {
        self.samples.iter().map(|s| s.sample_id).collect()
    }

    pub fn of_class(&self, class: usize) -> impl Iterator<Item = &GeometrySample> {
        self.samples.iter().filter(move |s| s.true_label == class)
    }
}

/// Measures every sample of `data` on `net`. Degenerate features are kept
/// and flagged. Samples come out ordered by id.
pub fn geometry_snapshot(
    net: &Network,
    data: &LabeledDataset,
    combination_id: &str,
    created_at: u64,
) -> Result<GeometrySnapshot> {
    if data.num_classes() != net.num_classes() {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, network {}",
            data.num_classes(),
            net.num_classes()
        )));
    }
    let dirs = class_directions(net)?;
    let features = net.trace(data.inputs())?.into_features();
    let m = dirs.feature_dim();
    let samples = features
        .chunks_exact(m)
        .zip(data.labels().iter().zip(data.sample_ids()))
        .map(|(f, (&label, &id))| GeometrySample::measure(id, label, f, &dirs))
        .collect::<Result<Vec<_>>>()?;
    GeometrySnapshot::new(
        combination_id,
        data.id(),
        net.num_classes(),
        created_at,
        samples,
    )
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| (!x.is_nan()).then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}
