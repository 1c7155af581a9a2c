//! Image corruptions at five severities, suites of corrupted variants and
//! per-sample robustness counts.
//!
//! Images are flat HWC arrays with pixels in `[0, 1]`. Every corruption
//! clamps its output back into that range.

mod archive;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ImageShape, LabeledDataset, Matrix, Network};

pub use archive::{export_archive, ingest_archive, ArchiveEntry, ArchiveManifest};

pub const SEVERITIES: [u8; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionType {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    GaussianBlur,
    Brightness,
    Contrast,
    Pixelate,
    Occlusion,
}

/// Default desk suite: six of the eight implemented types.
pub const DEFAULT_SUITE: [CorruptionType; 6] = [
    CorruptionType::GaussianNoise,
    CorruptionType::ShotNoise,
    CorruptionType::ImpulseNoise,
    CorruptionType::GaussianBlur,
    CorruptionType::Contrast,
    CorruptionType::Pixelate,
];

impl CorruptionType {
    pub const ALL: [CorruptionType; 8] = [
        CorruptionType::GaussianNoise,
        CorruptionType::ShotNoise,
        CorruptionType::ImpulseNoise,
        CorruptionType::GaussianBlur,
        CorruptionType::Brightness,
        CorruptionType::Contrast,
        CorruptionType::Pixelate,
        CorruptionType::Occlusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionType::GaussianNoise => "gaussian_noise",
            CorruptionType::ShotNoise => "shot_noise",
            CorruptionType::ImpulseNoise => "impulse_noise",
            CorruptionType::GaussianBlur => "gaussian_blur",
            CorruptionType::Brightness => "brightness",
            CorruptionType::Contrast => "contrast",
            CorruptionType::Pixelate => "pixelate",
            CorruptionType::Occlusion => "occlusion",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    /// Parameter per severity 1..=5.
    ///
    /// | type | parameter | unit |
    /// |---|---|---|
    /// | gaussian_noise | 0.04 0.06 0.08 0.09 0.10 | noise std |
    /// | shot_noise | 500 250 100 75 50 | photons per unit intensity |
    /// | impulse_noise | 0.01 0.02 0.03 0.05 0.07 | salt-and-pepper fraction |
    /// | gaussian_blur | 0.4 0.6 0.7 0.8 1.0 | kernel std in pixels |
    /// | brightness | 0.05 0.10 0.15 0.20 0.25 | additive offset |
    /// | contrast | 0.75 0.5 0.4 0.3 0.15 | scale about the image mean |
    /// | pixelate | 0.9 0.75 0.6 0.5 0.4 | resolution factor |
    /// | occlusion | 0.1 0.2 0.3 0.4 0.5 | square side / shorter image side |
    pub fn table(self) -> [f64; 5] {
        match self {
            CorruptionType::GaussianNoise => [0.04, 0.06, 0.08, 0.09, 0.10],
            CorruptionType::ShotNoise => [500.0, 250.0, 100.0, 75.0, 50.0],
            CorruptionType::ImpulseNoise => [0.01, 0.02, 0.03, 0.05, 0.07],
            CorruptionType::GaussianBlur => [0.4, 0.6, 0.7, 0.8, 1.0],
            CorruptionType::Brightness => [0.05, 0.10, 0.15, 0.20, 0.25],
            CorruptionType::Contrast => [0.75, 0.5, 0.4, 0.3, 0.15],
            CorruptionType::Pixelate => [0.9, 0.75, 0.6, 0.5, 0.4],
            CorruptionType::Occlusion => [0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    pub fn parameter(self, severity: u8) -> Result<f64> {
        check_severity(severity)?;
        Ok(self.table()[severity as usize - 1])
    }
}

impl fmt::Display for CorruptionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownCorruption(s.to_string()))
    }
}

fn check_severity(severity: u8) -> Result<()> {
    if !(1..=5).contains(&severity) {
        return Err(Error::Severity(severity));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionType,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionType, severity: u8, seed: u64) -> Result<Self> {
        check_severity(severity)?;
        Ok(CorruptionSpec {
            kind,
            severity,
            seed,
        })
    }

    pub fn parse(kind: &str, severity: u8, seed: u64) -> Result<Self> {
        Self::new(kind.parse()?, severity, seed)
    }

    pub fn parameter(&self) -> f64 {
        self.kind.table()[self.severity as usize - 1]
    }
}

fn check_image(image: &[f32], shape: ImageShape) -> Result<()> {
    if image.len() != shape.len() {
        return Err(Error::Dimension(format!(
            "image has {} values, shape {}x{}x{} needs {}",
            image.len(),
            shape.height,
            shape.width,
            shape.channels,
            shape.len()
        )));
    }
    if let Some(v) = image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("pixel {v} outside [0, 1]")));
    }
    Ok(())
}

/// Applies `spec` to one image.
pub fn corrupt(image: &[f32], shape: ImageShape, spec: &CorruptionSpec) -> Result<Vec<f32>> {
    corrupt_with_parameter(image, shape, spec.kind, spec.parameter(), spec.seed)
}

/// Like [`corrupt`] but with the table lookup replaced by an explicit
/// parameter. A zero noise std, blur std or brightness offset, or a contrast
/// or pixelate factor of 1, is the identity.
pub fn corrupt_with_parameter(
    image: &[f32],
    shape: ImageShape,
    kind: CorruptionType,
    parameter: f64,
    seed: u64,
) -> Result<Vec<f32>> {
    check_image(image, shape)?;
    if !parameter.is_finite() || parameter < 0.0 {
        return Err(Error::InvalidArgument(format!("corruption parameter {parameter}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src: Vec<f64> = image.iter().map(|&v| v as f64).collect();
    let out: Vec<f64> = match kind {
        CorruptionType::GaussianNoise => {
            if parameter == 0.0 {
                src
            } else {
                let normal = Normal::new(0.0, parameter).expect("positive std");
                src.iter().map(|v| v + normal.sample(&mut rng)).collect()
            }
        }
        CorruptionType::ShotNoise => {
            if parameter == 0.0 {
                return Err(Error::InvalidArgument("shot noise needs a positive photon count".into()));
            }
            src.iter()
                .map(|&v| {
                    let lambda = v * parameter;
                    if lambda <= 0.0 {
                        0.0
                    } else {
                        Poisson::new(lambda).expect("positive rate").sample(&mut rng) / parameter
                    }
                })
                .collect()
        }
        CorruptionType::ImpulseNoise => src
            .iter()
            .map(|&v| {
                if rng.random::<f64>() < parameter {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            })
            .collect(),
        CorruptionType::GaussianBlur => gaussian_blur(&src, shape, parameter),
        CorruptionType::Brightness => src.iter().map(|v| v + parameter).collect(),
        CorruptionType::Contrast => {
            let mean = src.iter().sum::<f64>() / src.len() as f64;
            src.iter().map(|v| (v - mean) * parameter + mean).collect()
        }
        CorruptionType::Pixelate => pixelate(&src, shape, parameter)?,
        CorruptionType::Occlusion => occlude(&src, shape, parameter, &mut rng),
    };
    Ok(out.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect())
}

fn at(shape: ImageShape, y: usize, x: usize, c: usize) -> usize {
    (y * shape.width + x) * shape.channels + c
}

/// Separable blur with a kernel truncated at 3σ and edge replication.
fn gaussian_blur(src: &[f64], shape: ImageShape, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (h, w) = (shape.height as isize, shape.width as isize);
    let pass = |input: &[f64], horizontal: bool| {
        let mut out = vec![0.0; input.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..shape.channels {
                    let mut acc = 0.0;
                    for (k, d) in kernel.iter().zip(-radius..=radius) {
                        let (yy, xx) = if horizontal {
                            (y, (x + d).clamp(0, w - 1))
                        } else {
                            ((y + d).clamp(0, h - 1), x)
                        };
                        acc += k * input[at(shape, yy as usize, xx as usize, c)];
                    }
                    out[at(shape, y as usize, x as usize, c)] = acc;
                }
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Box-average down to `⌊factor · side⌋` (at least 1), then nearest-neighbour
/// back up.
fn pixelate(src: &[f64], shape: ImageShape, factor: f64) -> Result<Vec<f64>> {
    if factor <= 0.0 || factor > 1.0 {
        return Err(Error::InvalidArgument(format!("pixelate factor {factor} outside (0, 1]")));
    }
    let (h, w) = (shape.height, shape.width);
    let sh = ((h as f64 * factor + 1e-9).floor() as usize).max(1);
    let sw = ((w as f64 * factor + 1e-9).floor() as usize).max(1);
    let cell = |i: usize, small: usize, big: usize| (i * big / small, ((i + 1) * big / small).max(i * big / small + 1));
    let mut small = vec![0.0; sh * sw * shape.channels];
    for i in 0..sh {
        let (y0, y1) = cell(i, sh, h);
        for j in 0..sw {
            let (x0, x1) = cell(j, sw, w);
            for c in 0..shape.channels {
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += src[at(shape, y, x, c)];
                    }
                }
                small[(i * sw + j) * shape.channels + c] = acc / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    // each full-size pixel takes the value of the block it was averaged into
    let owner = |small: usize, big: usize| {
        let mut map = vec![0; big];
        for i in 0..small {
            let (a, b) = cell(i, small, big);
            map[a..b].fill(i);
        }
        map
    };
    let (rows, cols) = (owner(sh, h), owner(sw, w));
    let mut out = vec![0.0; src.len()];
    for (y, &i) in rows.iter().enumerate() {
        for (x, &j) in cols.iter().enumerate() {
            for c in 0..shape.channels {
                out[at(shape, y, x, c)] = small[(i * sw + j) * shape.channels + c];
            }
        }
    }
    Ok(out)
}

/// Zeroes a square whose side is `fraction` of the shorter image side.
fn occlude(src: &[f64], shape: ImageShape, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let side = ((shape.height.min(shape.width) as f64 * fraction).round() as usize)
        .min(shape.height.min(shape.width));
    let mut out = src.to_vec();
    if side == 0 {
        return out;
    }
    let y0 = rng.random_range(0..=shape.height - side);
    let x0 = rng.random_range(0..=shape.width - side);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            for c in 0..shape.channels {
                out[at(shape, y, x, c)] = 0.0;
            }
        }
    }
    out
}

/// Seed for one (sample, type, severity) variant.
pub fn variant_seed(base: u64, sample_id: u64, kind: CorruptionType, severity: u8) -> u64 {
    let mut z = base;
    for part in [sample_id, kind.index() as u64, severity as u64] {
        z = splitmix(z ^ splitmix(part));
    }
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of one corrupted copy of a dataset. Types are plain names so that
/// archives can carry corruptions this crate does not implement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariantKey {
    pub corruption: String,
    pub severity: u8,
}

impl VariantKey {
    pub fn new(corruption: impl Into<String>, severity: u8) -> Self {
        VariantKey {
            corruption: corruption.into(),
            severity,
        }
    }

    /// Dataset id used for snapshots, e.g. `gaussian_noise-s3`.
    pub fn dataset_id(&self) -> String {
        format!("{}-s{}", self.corruption, self.severity)
    }

    pub fn parse_dataset_id(id: &str) -> Option<VariantKey> {
        let (name, sev) = id.rsplit_once("-s")?;
        let severity: u8 = sev.parse().ok()?;
        ((1..=5).contains(&severity) && !name.is_empty()).then(|| VariantKey::new(name, severity))
    }
}

/// Every sample of a base dataset under every (type, severity) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedDataset {
    base_id: String,
    image_shape: ImageShape,
    labels: Vec<usize>,
    sample_ids: Vec<u64>,
    num_classes: usize,
    types: Vec<String>,
    /// One `N × D` matrix per key, rows aligned with `sample_ids`.
    variants: BTreeMap<VariantKey, Matrix>,
}

impl CorruptedDataset {
    pub fn new(
        base_id: impl Into<String>,
        image_shape: ImageShape,
        labels: Vec<usize>,
        sample_ids: Vec<u64>,
        num_classes: usize,
        variants: BTreeMap<VariantKey, Matrix>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 || sample_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels and {} sample ids",
                n,
                sample_ids.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: num_classes,
            });
        }
        let mut types: Vec<String> = Vec::new();
        for key in variants.keys() {
            if !types.contains(&key.corruption) {
                types.push(key.corruption.clone());
            }
        }
        if types.is_empty() {
            return Err(Error::InvalidArgument("a suite needs at least one corruption type".into()));
        }
        for t in &types {
            for s in SEVERITIES {
                if !variants.contains_key(&VariantKey::new(t.clone(), s)) {
                    return Err(Error::Archive(format!("type '{t}' is missing severity {s}")));
                }
            }
        }
        for (key, m) in &variants {
            check_severity(key.severity)?;
            if m.shape() != (n, image_shape.len()) {
                return Err(Error::Dimension(format!(
                    "{} is {}x{}, expected {}x{}",
                    key.dataset_id(),
                    m.rows(),
                    m.cols(),
                    n,
                    image_shape.len()
                )));
            }
            if let Some(v) = m.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Archive(format!(
                    "{} has pixel {v} outside [0, 1]",
                    key.dataset_id()
                )));
            }
        }
        Ok(CorruptedDataset {
            base_id: base_id.into(),
            image_shape,
            labels,
            sample_ids,
            num_classes,
            types,
            variants,
        })
    }

    pub fn base_id(&self) -> &str {
        &self.base_id
    }

    pub fn image_shape(&self) -> ImageShape {
        self.image_shape
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

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    /// Type names in key order.
    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn variants_per_sample(&self) -> usize {
        self.types.len() * SEVERITIES.len()
    }

    pub fn total_variants(&self) -> usize {
        self.variants_per_sample() * self.num_samples()
    }

    pub fn keys(&self) -> impl Iterator<Item = &VariantKey> {
        self.variants.keys()
    }

    pub fn variant(&self, key: &VariantKey) -> Option<&Matrix> {
        self.variants.get(key)
    }

    /// The corrupted copy as a dataset, keeping the base sample ids.
    pub fn dataset(&self, key: &VariantKey) -> Result<LabeledDataset> {
        let inputs = self
            .variants
            .get(key)
            .ok_or_else(|| Error::NotFound(format!("variant {}", key.dataset_id())))?
            .clone();
        LabeledDataset::new(
            key.dataset_id(),
            inputs,
            self.labels.clone(),
            self.sample_ids.clone(),
            self.num_classes,
        )?
        .with_image_shape(self.image_shape)
    }

    /// Fails unless labels and sample ids match `base` row for row.
    pub fn check_aligned(&self, base: &LabeledDataset) -> Result<()> {
        if base.len() != self.num_samples() {
            return Err(Error::Dimension(format!(
                "suite has {} samples, base dataset {}",
                self.num_samples(),
                base.len()
            )));
        }
        if base.labels() != self.labels.as_slice() || base.sample_ids() != self.sample_ids.as_slice() {
            return Err(Error::InvalidArgument(format!(
                "suite labels or ids differ from dataset '{}'",
                base.id()
            )));
        }
        Ok(())
    }
}

/// Corrupts every sample of `data` with every type at all five severities.
/// Types are processed on separate threads; output does not depend on
/// scheduling since each variant has its own seed.
pub fn build_suite(data: &LabeledDataset, types: &[CorruptionType], seed: u64) -> Result<CorruptedDataset> {
    if types.is_empty() {
        return Err(Error::InvalidArgument("a suite needs at least one corruption type".into()));
    }
    let shape = data
        .image_shape()
        .ok_or_else(|| Error::InvalidArgument(format!("dataset '{}' has no image shape", data.id())))?;
    let mut unique = types.to_vec();
    unique.sort();
    unique.dedup();
    let results: Vec<Result<Vec<(VariantKey, Matrix)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = unique
            .iter()
            .map(|&kind| {
                scope.spawn(move || {
                    SEVERITIES
                        .iter()
                        .map(|&severity| {
                            let mut out = Vec::with_capacity(data.len() * shape.len());
                            for (i, &id) in data.sample_ids().iter().enumerate() {
                                let spec = CorruptionSpec::new(
                                    kind,
                                    severity,
                                    variant_seed(seed, id, kind, severity),
                                )?;
                                out.extend(corrupt(data.inputs().row(i), shape, &spec)?);
                            }
                            Ok((
                                VariantKey::new(kind.name(), severity),
                                Matrix::from_vec(data.len(), shape.len(), out)?,
                            ))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("corruption worker panicked")).collect()
    });
    let mut variants = BTreeMap::new();
    for r in results {
        variants.extend(r?);
    }
    CorruptedDataset::new(
        data.id(),
        shape,
        data.labels().to_vec(),
        data.sample_ids().to_vec(),
        data.num_classes(),
        variants,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    pub sample_id: u64,
    pub correct_count: usize,
    pub max_count: usize,
}

/// Number of corrupted variants of each sample that `net` classifies
/// correctly. The clean image is not counted.
pub fn per_sample_robustness(net: &Network, suite: &CorruptedDataset) -> Result<Vec<RobustnessRecord>> {
    if net.num_classes() != suite.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "network has {} classes, suite {}",
            net.num_classes(),
            suite.num_classes()
        )));
    }
    let mut counts = vec![0usize; suite.num_samples()];
    for m in suite.variants.values() {
        for (i, p) in net.predict(m)?.into_iter().enumerate() {
            if p == suite.labels[i] {
                counts[i] += 1;
            }
        }
    }
    let max = suite.variants_per_sample();
    Ok(suite
        .sample_ids
        .iter()
        .zip(counts)
        .map(|(&sample_id, correct_count)| RobustnessRecord {
            sample_id,
            correct_count,
            max_count: max,
        })
        .collect())
}

pub fn aggregate_robustness(records: &[RobustnessRecord]) -> usize {
    records.iter().map(|r| r.correct_count).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ImageShape {
        ImageShape::new(6, 5, 2)
    }

    fn ramp() -> Vec<f32> {
        (0..60).map(|i| i as f32 / 59.0).collect()
    }

    #[test]
    fn brightness_table_lookup() {
        let img = vec![0.5f32; 60];
        let spec = CorruptionSpec::parse("brightness", 1, 0).unwrap();
        let out = corrupt(&img, shape(), &spec).unwrap();
        assert!(out.iter().all(|&v| (v - 0.55).abs() < 1e-6));
        let out = corrupt(&vec![0.9f32; 60], shape(), &CorruptionSpec::parse("brightness", 5, 0).unwrap()).unwrap();
        assert!(out.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = ramp();
        let out = corrupt_with_parameter(&img, shape(), CorruptionType::GaussianNoise, 0.0, 9).unwrap();
        assert_eq!(out, img);
        for (kind, p) in [
            (CorruptionType::GaussianBlur, 0.0),
            (CorruptionType::Contrast, 1.0),
            (CorruptionType::Pixelate, 1.0),
            (CorruptionType::Occlusion, 0.0),
            (CorruptionType::ImpulseNoise, 0.0),
        ] {
            let out = corrupt_with_parameter(&img, shape(), kind, p, 9).unwrap();
            for (a, b) in out.iter().zip(&img) {
                assert!((a - b).abs() < 1e-6, "{kind}");
            }
        }
    }

    #[test]
    fn deterministic_and_clamped() {
        let img = ramp();
        for kind in CorruptionType::ALL {
            for s in SEVERITIES {
                let spec = CorruptionSpec::new(kind, s, 77).unwrap();
                let a = corrupt(&img, shape(), &spec).unwrap();
                assert_eq!(a, corrupt(&img, shape(), &spec).unwrap());
                assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!("fog".parse::<CorruptionType>(), Err(Error::UnknownCorruption(_))));
        assert!(matches!(CorruptionSpec::parse("contrast", 0, 0), Err(Error::Severity(0))));
        assert!(matches!(CorruptionSpec::parse("contrast", 6, 0), Err(Error::Severity(6))));
        let spec = CorruptionSpec::parse("contrast", 1, 0).unwrap();
        assert!(corrupt(&[0.5; 3], shape(), &spec).is_err());
        assert!(corrupt(&[1.5; 60], shape(), &spec).is_err());
    }

    #[test]
    fn tables_are_strictly_monotone() {
        for kind in CorruptionType::ALL {
            let t = kind.table();
            // these grow harsher as the parameter shrinks
            let harsher_down = matches!(
                kind,
                CorruptionType::ShotNoise | CorruptionType::Contrast | CorruptionType::Pixelate
            );
            for w in t.windows(2) {
                assert!(if harsher_down { w[1] < w[0] } else { w[1] > w[0] }, "{kind}");
            }
        }
    }

    #[test]
    fn contrast_keeps_mean() {
        let img = ramp();
        let out = corrupt(&img, shape(), &CorruptionSpec::parse("contrast", 3, 0).unwrap()).unwrap();
        let m0: f32 = img.iter().sum::<f32>() / 60.0;
        let m1: f32 = out.iter().sum::<f32>() / 60.0;
        assert!((m0 - m1).abs() < 1e-5);
    }

    #[test]
    fn pixelate_blocks() {
        let s = ImageShape::new(4, 4, 1);
        let img: Vec<f32> = (0..16).map(|i| i as f32 / 15.0).collect();
        let out = corrupt_with_parameter(&img, s, CorruptionType::Pixelate, 0.5, 0).unwrap();
        // top-left 2x2 block is pixels 0, 1, 4, 5
        let expect = (0.0 + 1.0 + 4.0 + 5.0) / 4.0 / 15.0;
        for idx in [0, 1, 4, 5] {
            assert!((out[idx] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn occlusion_zeroes_a_square() {
        let s = ImageShape::new(10, 10, 1);
        let img = vec![1.0f32; 100];
        let out = corrupt(&img, s, &CorruptionSpec::parse("occlusion", 3, 5).unwrap()).unwrap();
        assert_eq!(out.iter().filter(|&&v| v == 0.0).count(), 9);
    }

    #[test]
    fn dataset_ids_round_trip() {
        let k = VariantKey::new("shot_noise", 4);
        assert_eq!(k.dataset_id(), "shot_noise-s4");
        assert_eq!(VariantKey::parse_dataset_id("shot_noise-s4"), Some(k));
        assert_eq!(VariantKey::parse_dataset_id("clean"), None);
        assert_eq!(VariantKey::parse_dataset_id("x-s9"), None);
    }
}
