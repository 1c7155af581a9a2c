//! Synthetic desk-scale datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::{ImageShape, LabeledDataset, Matrix};

/// `n` 2-D points split evenly over `classes` isotropic Gaussian blobs whose
/// centres sit on a circle of radius `separation`.
pub fn gaussian_blobs(
    n: usize,
    classes: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).expect("spread must be finite and non-negative");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        // Offset by 45 degrees so two classes sit at (-s,-s)/√2 and (s,s)/√2.
        let phi = std::f64::consts::FRAC_PI_4 + 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
        data.push((separation * phi.cos() + noise.sample(&mut rng)) as f32);
        data.push((separation * phi.sin() + noise.sample(&mut rng)) as f32);
        labels.push(c);
    }
    let x = Matrix::from_vec(n, 2, data).expect("finite blobs");
    LabeledDataset::with_sequential_ids(format!("blobs-{seed}"), x, labels, classes)
        .expect("valid blob dataset")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrototypeConfig {
    pub classes: usize,
    pub shape: ImageShape,
    /// Upper bound of the mixing weight toward a distractor class.
    pub max_mix: f64,
    /// Per-pixel Gaussian noise.
    pub pixel_noise: f64,
    /// Seed of the class templates. Train and test splits share it.
    pub template_seed: u64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        PrototypeConfig {
            classes: 10,
            shape: ImageShape::new(12, 12, 1),
            max_mix: 0.45,
            pixel_noise: 0.08,
            template_seed: 7,
        }
    }
}

fn templates(cfg: &PrototypeConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.template_seed);
    let ImageShape {
        height,
        width,
        channels,
    } = cfg.shape;
    (0..cfg.classes)
        .map(|_| {
            let bumps: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.random_range(0.0..height as f64),
                        rng.random_range(0.0..width as f64),
                        rng.random_range(1.0..3.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let mut img = vec![0.0; cfg.shape.len()];
            for y in 0..height {
                for x in 0..width {
                    let v: f64 = bumps
                        .iter()
                        .map(|&(cy, cx, s, a)| {
                            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                            a * (-d2 / (2.0 * s * s)).exp()
                        })
                        .sum();
                    for ch in 0..channels {
                        img[(y * width + x) * channels + ch] = (0.5 + 0.35 * v).clamp(0.0, 1.0);
                    }
                }
            }
            img
        })
        .collect()
}

/// Images drawn from per-class templates. Each sample blends its class
/// template with a random distractor class by a weight uniform in
/// `[0, max_mix)` and adds pixel noise, so difficulty varies smoothly
/// across samples. Pixels are clamped to `[0, 1]`.
pub fn prototype_images(n: usize, cfg: &PrototypeConfig, seed: u64) -> LabeledDataset {
    let temps = templates(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.pixel_noise).expect("finite noise");
    let d = cfg.shape.len();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % cfg.classes;
        let mut other = rng.random_range(0..cfg.classes - 1);
        if other >= c {
            other += 1;
        }
        let mix = rng.random_range(0.0..cfg.max_mix);
        for p in 0..d {
            let v = (1.0 - mix) * temps[c][p] + mix * temps[other][p] + noise.sample(&mut rng);
            data.push(v.clamp(0.0, 1.0) as f32);
        }
        labels.push(c);
    }
    let x = Matrix::from_vec(n, d, data).expect("finite pixels");
    LabeledDataset::with_sequential_ids(format!("prototypes-{seed}"), x, labels, cfg.classes)
        .and_then(|ds| ds.with_image_shape(cfg.shape))
        .expect("valid prototype dataset")
}
