//! Reference implementations used as oracles by the integration tests.
//! Written independently of the library's numeric paths.
#![allow(dead_code)]

use prunelens_core::nn::{Layer, Matrix, Network, NetworkSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Plain f64 copy of a network's parameters.
#[derive(Clone, Debug)]
pub struct RefNet {
    /// `weights[l][r][c]`
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl RefNet {
    pub fn from(net: &Network) -> RefNet {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in net.layers() {
            let w = layer.weights();
            weights.push(
                (0..w.rows())
                    .map(|r| (0..w.cols()).map(|c| w.get(r, c) as f64).collect())
                    .collect(),
            );
            biases.push(match layer.bias() {
                Some(b) => b.iter().map(|&v| v as f64).collect(),
                None => vec![0.0; w.rows()],
            });
        }
        RefNet { weights, biases }
    }

    /// Returns (penultimate features, logits).
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = x.to_vec();
        let last = self.weights.len() - 1;
        for l in 0..last {
            h = self.weights[l]
                .iter()
                .zip(&self.biases[l])
                .map(|(row, b)| {
                    let z: f64 = row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b;
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        let logits = self.weights[last]
            .iter()
            .zip(&self.biases[last])
            .map(|(row, b)| row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        (h, logits)
    }

    /// Every hidden pre-activation for input `x`.
    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut h = x.to_vec();
        for l in 0..self.weights.len() - 1 {
            let z: Vec<f64> = self.weights[l]
                .iter()
                .zip(&self.biases[l])
                .map(|(row, b)| row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b)
                .collect();
            out.extend(&z);
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        }
        out
    }

    pub fn mean_cross_entropy(&self, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        xs.iter()
            .zip(labels)
            .map(|(x, &y)| {
                let (_, z) = self.forward(x);
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - z[y]
            })
            .sum::<f64>()
            / xs.len() as f64
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Network with uniform weights in `[-scale, scale]` and, where the spec
/// allows, uniform biases in `[-bias_scale, bias_scale]`.
pub fn random_net(rng: &mut ChaCha8Rng, sizes: &[usize], scale: f32, bias_scale: f32) -> Network {
    let spec = NetworkSpec::new(sizes.to_vec(), 0);
    let n = sizes.len() - 1;
    let layers = (0..n)
        .map(|l| {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let w: Vec<f32> = (0..i * o).map(|_| rng.random_range(-scale..=scale)).collect();
            let bias = (l + 1 < n).then(|| (0..o).map(|_| rng.random_range(-bias_scale..=bias_scale)).collect());
            Layer::new(Matrix::from_vec(o, i, w).unwrap(), bias, Matrix::filled(o, i, 1.0)).unwrap()
        })
        .collect();
    Network::from_layers(spec, layers).unwrap()
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&v| v as f64).collect()).collect()
}
