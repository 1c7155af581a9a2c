//! Biprop: learn a sparse, binarized subnetwork of a randomly initialized
//! network by optimizing per-weight scores while the weights stay frozen.
//!
//! Each step keeps the top `(1 − rate)` fraction of every prunable layer by
//! score, binarizes the kept weights to `α · sign(w)` with
//! `α = mean |w|` over the kept set, and runs the forward/backward pass on
//! those effective weights. The gradient reaches the scores straight
//! through the top-k selection and the binarization:
//! `∂L/∂s ≈ ∂L/∂w_eff · α · sign(w)`. Scores start at `|w|`.
//!
//! This is a simplified single-learning-rate SGD variant; it does not
//! reproduce the original training schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rate, prune_count, Prunable, PruneMask};
use crate::error::{Error, Result};
use crate::nn::{Layer, LabeledDataset, Matrix, Network, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreInit {
    #[default]
    MagnitudeProportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipropConfig {
    pub prune_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub score_init: ScoreInit,
    /// Biprop searches the whole network, classifier included.
    #[serde(default = "all_layers")]
    pub prunable: Prunable,
}

fn all_layers() -> Prunable {
    Prunable::All
}

impl Default for BipropConfig {
    fn default() -> Self {
        BipropConfig {
            prune_rate: 0.5,
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
            score_init: ScoreInit::MagnitudeProportional,
            prunable: Prunable::All,
        }
    }
}

struct LayerState {
    signs: Vec<f32>,
    magnitudes: Vec<f64>,
    scores: Vec<f64>,
    keep: usize,
    prunable: bool,
}

impl LayerState {
    /// Indices of the kept weights: highest score first, ties to the lower index.
    fn kept_mask(&self) -> Vec<bool> {
        let n = self.scores.len();
        if !self.prunable || self.keep == n {
            return vec![true; n];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        let mut kept = vec![false; n];
        for &i in &order[..self.keep] {
            kept[i] = true;
        }
        kept
    }

    /// Effective weights and the scale α of the binarized layer.
    fn effective(&self, kept: &[bool]) -> (Vec<f32>, f64) {
        if !self.prunable {
            let w = self
                .signs
                .iter()
                .zip(&self.magnitudes)
                .map(|(&s, &m)| s * m as f32)
                .collect();
            return (w, 1.0);
        }
        let (sum, count) = kept
            .iter()
            .zip(&self.magnitudes)
            .filter(|(&k, _)| k)
            .fold((0.0, 0usize), |(s, c), (_, &m)| (s + m, c + 1));
        let alpha = if count == 0 { 0.0 } else { sum / count as f64 };
        let w = kept
            .iter()
            .zip(&self.signs)
            .map(|(&k, &s)| if k { (alpha as f32) * s } else { 0.0 })
            .collect();
        (w, alpha)
    }
}

fn assemble(spec: &NetworkSpec, base: &Network, states: &[LayerState]) -> Result<(Network, Vec<Vec<bool>>, Vec<f64>)> {
    let mut layers = Vec::with_capacity(states.len());
    let mut kept_all = Vec::with_capacity(states.len());
    let mut alphas = Vec::with_capacity(states.len());
    for (state, layer) in states.iter().zip(base.layers()) {
        let kept = state.kept_mask();
        let (w, alpha) = state.effective(&kept);
        let (rows, cols) = layer.weights().shape();
        let mask = Matrix::from_vec(rows, cols, kept.iter().map(|&k| f32::from(u8::from(k))).collect())?;
        layers.push(Layer::new(
            Matrix::from_vec(rows, cols, w)?,
            layer.bias().map(<[f32]>::to_vec),
            mask,
        )?);
        kept_all.push(kept);
        alphas.push(alpha);
    }
    Ok((Network::from_layers(spec.clone(), layers)?, kept_all, alphas))
}

/// Searches a `cfg.prune_rate`-sparse binarized subnetwork of the network
/// initialized from `spec`. Returns the network with effective weights and
/// the selected mask.
pub fn biprop_train(
    spec: &NetworkSpec,
    data: &LabeledDataset,
    cfg: &BipropConfig,
) -> Result<(Network, PruneMask)> {
    check_rate(cfg.prune_rate)?;
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > data.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} not in 1..={}",
            cfg.batch_size,
            data.len()
        )));
    }
    let base = Network::new(spec.clone())?;
    if data.num_classes() != base.num_classes() {
        return Err(Error::Dimension("dataset class count differs from spec".into()));
    }
    let prunable = cfg.prunable.resolve(base.num_layers())?;
    let mut states: Vec<LayerState> = base
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let w = layer.weights().as_slice();
            let magnitudes: Vec<f64> = w.iter().map(|&v| v.abs() as f64).collect();
            let n = w.len();
            let is_prunable = prunable.contains(&l);
            LayerState {
                signs: w.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect(),
                scores: match cfg.score_init {
                    ScoreInit::MagnitudeProportional => magnitudes.clone(),
                },
                magnitudes,
                keep: if is_prunable { n - prune_count(cfg.prune_rate, n) } else { n },
                prunable: is_prunable,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (net, _, alphas) = assemble(spec, &base, &states)?;
            let inputs = data.inputs().select_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
            let grads = net.dense_gradients(&inputs, &labels)?;
            if !grads.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    value: grads.loss,
                });
            }
            for ((state, g), alpha) in states.iter_mut().zip(&grads.weights).zip(&alphas) {
                if !state.prunable {
                    continue;
                }
                for ((s, &gv), &sign) in state.scores.iter_mut().zip(g).zip(&state.signs) {
                    *s -= cfg.learning_rate * gv * alpha * sign as f64;
                }
            }
        }
    }

    let (net, _, _) = assemble(spec, &base, &states)?;
    let mask = PruneMask::new(net.layers().iter().map(|l| l.mask().clone()).collect(), prunable)?;
    Ok((net, mask))
}
