//! Unstructured pruning: random, magnitude, first-order Taylor and biprop.
//!
//! Every scheme masks exactly `⌊rate · n⌋` of the `n` prunable weights
//! (per layer when the scope is per-layer). Rankings break ties by
//! `(layer, row, col)` order, so the masked set only grows as the rate
//! grows.

mod biprop;

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use biprop::{biprop_train, BipropConfig, ScoreInit};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{
    mask_bytes, read_manifest, read_mask_layers, write_container, ContainerKind, LayerEntry,
};
use crate::nn::{Layer, LabeledDataset, Matrix, Network, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneScope {
    #[default]
    Global,
    PerLayer,
}

/// Which layers a scheme may touch.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prunable {
    /// Every layer except the classifier, so class directions stay fixed.
    #[default]
    ExcludeClassifier,
    All,
    Layers(BTreeSet<usize>),
}

impl Prunable {
    pub fn resolve(&self, num_layers: usize) -> Result<BTreeSet<usize>> {
        let set: BTreeSet<usize> = match self {
            Prunable::ExcludeClassifier => (0..num_layers.saturating_sub(1)).collect(),
            Prunable::All => (0..num_layers).collect(),
            Prunable::Layers(s) => s.clone(),
        };
        if let Some(&bad) = set.iter().find(|&&l| l >= num_layers) {
            return Err(Error::IndexOutOfRange(format!(
                "prunable layer {bad} of {num_layers}"
            )));
        }
        Ok(set)
    }
}

/// Number of weights a rate removes from `n`. The small epsilon keeps
/// products such as `0.29 * 100` from rounding down a whole weight.
pub fn prune_count(rate: f64, n: usize) -> usize {
    (((rate * n as f64) + 1e-9).floor() as usize).min(n)
}

/// Prune rates registered per method when no grid is given.
pub const DEFAULT_PRUNE_GRID: [f64; 8] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99];

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "prune rate {rate} not in [0, 1)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    layers: Vec<Matrix>,
    prunable: BTreeSet<usize>,
}

impl PruneMask {
    pub fn ones_like(net: &Network, prunable: BTreeSet<usize>) -> Self {
        PruneMask {
            layers: net
                .layers()
                .iter()
                .map(|l| Matrix::filled(l.out_dim(), l.in_dim(), 1.0))
                .collect(),
            prunable,
        }
    }

    pub fn new(layers: Vec<Matrix>, prunable: BTreeSet<usize>) -> Result<Self> {
        for (i, m) in layers.iter().enumerate() {
            if m.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "mask layer {i} has entries other than 0/1"
                )));
            }
            if !prunable.contains(&i) && m.as_slice().contains(&0.0) {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} is not prunable but has masked entries"
                )));
            }
        }
        if let Some(&bad) = prunable.iter().find(|&&l| l >= layers.len()) {
            return Err(Error::IndexOutOfRange(format!("prunable layer {bad}")));
        }
        Ok(PruneMask { layers, prunable })
    }

    /// The mask currently stored on `net`, treating every layer with a
    /// zero bit as prunable.
    pub fn from_network(net: &Network) -> Self {
        let layers: Vec<Matrix> = net.layers().iter().map(|l| l.mask().clone()).collect();
        let prunable = layers
            .iter()
            .enumerate()
            .filter(|(_, m)| m.as_slice().contains(&0.0))
            .map(|(i, _)| i)
            .collect();
        PruneMask { layers, prunable }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn prunable(&self) -> &BTreeSet<usize> {
        &self.prunable
    }

    pub fn masked_count(&self) -> usize {
        self.layers
            .iter()
            .map(|m| m.as_slice().iter().filter(|&&v| v == 0.0).count())
            .sum()
    }

    pub fn prunable_count(&self) -> usize {
        self.prunable.iter().map(|&l| self.layers[l].len()).sum()
    }

    pub fn is_kept(&self, layer: usize, row: usize, col: usize) -> bool {
        self.layers[layer].get(row, col) != 0.0
    }

    pub fn save(&self, spec: &NetworkSpec, dir: &Path) -> Result<()> {
        let blobs = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let masked = m.as_slice().iter().filter(|&&v| v == 0.0).count();
                let entry = LayerEntry {
                    index: i,
                    rows: m.rows(),
                    cols: m.cols(),
                    has_bias: false,
                    file: format!("mask-{i}.bin"),
                    bytes: 0,
                    sha256: String::new(),
                    masked,
                    total: m.len(),
                };
                (entry, mask_bytes(m))
            })
            .collect();
        write_container(
            dir,
            ContainerKind::Mask,
            spec,
            Some(self.prunable.iter().copied().collect()),
            blobs,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<PruneMask> {
        let manifest = read_manifest(dir)?;
        if manifest.kind != ContainerKind::Mask {
            return Err(Error::format(dir, "container holds a network, not a mask"));
        }
        let layers = read_mask_layers(dir, &manifest)?;
        let prunable = manifest.prunable_layers.unwrap_or_default().into_iter().collect();
        PruneMask::new(layers, prunable)
    }
}

/// Fraction of prunable weights the mask removes.
pub fn sparsity(mask: &PruneMask) -> f64 {
    let n = mask.prunable_count();
    if n == 0 {
        return 0.0;
    }
    let zeros: usize = mask
        .prunable
        .iter()
        .map(|&l| mask.layers[l].as_slice().iter().filter(|&&v| v == 0.0).count())
        .sum();
    zeros as f64 / n as f64
}

/// Non-negative per-weight importance, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    layers: Vec<Matrix>,
}

impl ImportanceScores {
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        for (i, m) in layers.iter().enumerate() {
            if m.as_slice().iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} has negative or non-finite scores"
                )));
            }
        }
        Ok(ImportanceScores { layers })
    }

    pub fn magnitude(net: &Network) -> Self {
        ImportanceScores {
            layers: net.layers().iter().map(|l| l.weights().map(f32::abs)).collect(),
        }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }
}

/// Masks the `⌊rate · n⌋` lowest-scoring prunable weights.
pub fn prune_by_scores(
    scores: &ImportanceScores,
    rate: f64,
    scope: PruneScope,
    prunable: &Prunable,
) -> Result<PruneMask> {
    check_rate(rate)?;
    let prunable = prunable.resolve(scores.layers.len())?;
    let mut mask = PruneMask {
        layers: scores
            .layers
            .iter()
            .map(|m| Matrix::filled(m.rows(), m.cols(), 1.0))
            .collect(),
        prunable,
    };
    let groups: Vec<Vec<usize>> = match scope {
        PruneScope::Global => vec![mask.prunable.iter().copied().collect()],
        PruneScope::PerLayer => mask.prunable.iter().map(|&l| vec![l]).collect(),
    };
    for group in groups {
        let mut candidates: Vec<(f32, usize, usize)> = group
            .iter()
            .flat_map(|&l| {
                scores.layers[l]
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(move |(i, &s)| (s, l, i))
            })
            .collect();
        let count = prune_count(rate, candidates.len());
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, l, i) in &candidates[..count] {
            mask.layers[l].as_mut_slice()[i] = 0.0;
        }
    }
    Ok(mask)
}

pub fn prune_magnitude(
    net: &Network,
    rate: f64,
    scope: PruneScope,
    prunable: &Prunable,
) -> Result<PruneMask> {
    prune_by_scores(&ImportanceScores::magnitude(net), rate, scope, prunable)
}

/// Masks `⌊rate · n⌋` prunable weights drawn uniformly without replacement.
pub fn prune_random(net: &Network, rate: f64, seed: u64, prunable: &Prunable) -> Result<PruneMask> {
    check_rate(rate)?;
    let prunable = prunable.resolve(net.num_layers())?;
    let mut mask = PruneMask::ones_like(net, prunable);
    let slots: Vec<(usize, usize)> = mask
        .prunable
        .iter()
        .flat_map(|&l| (0..mask.layers[l].len()).map(move |i| (l, i)))
        .collect();
    let count = prune_count(rate, slots.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in rand::seq::index::sample(&mut rng, slots.len(), count) {
        let (l, i) = slots[k];
        mask.layers[l].as_mut_slice()[i] = 0.0;
    }
    Ok(mask)
}

/// First-order Taylor importance `|∂L/∂w · w|` with the gradient of the
/// mean loss over the whole dataset. Masked weights score 0.
pub fn taylor_importance(net: &Network, data: &LabeledDataset) -> Result<ImportanceScores> {
    let grads = net.backward(data)?;
    let layers = net
        .layers()
        .iter()
        .zip(&grads.weights)
        .map(|(layer, g)| {
            let data = layer
                .weights()
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(&w, &gv)| (w as f64 * gv as f64).abs() as f32)
                .collect();
            Matrix::from_vec(layer.out_dim(), layer.in_dim(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    ImportanceScores::new(layers)
}

/// Zeroes masked weights and stores the mask on the network.
pub fn apply_mask(net: &Network, mask: &PruneMask) -> Result<Network> {
    if mask.layers.len() != net.num_layers() {
        return Err(Error::Dimension(format!(
            "mask has {} layers, network {}",
            mask.layers.len(),
            net.num_layers()
        )));
    }
    let layers = net
        .layers()
        .iter()
        .zip(&mask.layers)
        .map(|(layer, m)| {
            Layer::new(
                layer.weights().clone(),
                layer.bias().map(<[f32]>::to_vec),
                m.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_layers(net.spec().clone(), layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_importance, train, TrainConfig, WeightIndex};
    use crate::synth::gaussian_blobs;

    fn net_with_first_layer(weights: Vec<f32>) -> Network {
        let spec = NetworkSpec::new(vec![2, 2, 2], 0).without_hidden_bias();
        let l0 = Layer::new(
            Matrix::from_vec(2, 2, weights).unwrap(),
            None,
            Matrix::filled(2, 2, 1.0),
        )
        .unwrap();
        let l1 = Layer::new(Matrix::identity(2), None, Matrix::filled(2, 2, 1.0)).unwrap();
        Network::from_layers(spec, vec![l0, l1]).unwrap()
    }

    #[test]
    fn magnitude_keeps_largest() {
        let net = net_with_first_layer(vec![0.1, -3.0, 2.0, 1.0]);
        let mask = prune_magnitude(&net, 0.5, PruneScope::Global, &Prunable::default()).unwrap();
        assert_eq!(mask.layers()[0].as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(mask.layers()[1].as_slice(), &[1.0; 4]);
    }

    #[test]
    fn rate_zero_is_identity_mask() {
        let net = net_with_first_layer(vec![0.1, -3.0, 2.0, 1.0]);
        for mask in [
            prune_magnitude(&net, 0.0, PruneScope::Global, &Prunable::default()).unwrap(),
            prune_random(&net, 0.0, 3, &Prunable::default()).unwrap(),
        ] {
            assert_eq!(mask.masked_count(), 0);
            assert_eq!(sparsity(&mask), 0.0);
        }
    }

    #[test]
    fn random_forced_count_and_determinism() {
        let net = net_with_first_layer(vec![0.1, -3.0, 2.0, 1.0]);
        let a = prune_random(&net, 0.25, 17, &Prunable::default()).unwrap();
        assert_eq!(a.masked_count(), 1);
        assert_eq!(a, prune_random(&net, 0.25, 17, &Prunable::default()).unwrap());
    }

    #[test]
    fn rate_out_of_range() {
        let net = net_with_first_layer(vec![0.1, -3.0, 2.0, 1.0]);
        assert!(prune_magnitude(&net, 1.0, PruneScope::Global, &Prunable::default()).is_err());
        assert!(prune_random(&net, -0.1, 0, &Prunable::default()).is_err());
    }

    #[test]
    fn equal_scores_break_ties_by_position() {
        let scores = ImportanceScores::new(vec![Matrix::filled(2, 3, 1.0), Matrix::filled(2, 2, 1.0)])
            .unwrap();
        let mask = prune_by_scores(&scores, 0.5, PruneScope::Global, &Prunable::default()).unwrap();
        assert_eq!(mask.layers()[0].as_slice(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn rate_099_on_100_weights() {
        let scores = ImportanceScores::new(vec![
            Matrix::from_vec(10, 10, (0..100).map(|i| i as f32).collect()).unwrap(),
            Matrix::filled(1, 10, 1.0),
        ])
        .unwrap();
        let mask = prune_by_scores(&scores, 0.99, PruneScope::Global, &Prunable::default()).unwrap();
        assert_eq!(mask.masked_count(), 99);
        assert!(mask.is_kept(0, 9, 9));
    }

    #[test]
    fn per_layer_scope_counts_each_layer() {
        let net = Network::new(NetworkSpec::new(vec![4, 10, 6, 3], 5)).unwrap();
        let mask = prune_magnitude(&net, 0.3, PruneScope::PerLayer, &Prunable::default()).unwrap();
        let zeros = |m: &Matrix| m.as_slice().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros(&mask.layers()[0]), 12);
        assert_eq!(zeros(&mask.layers()[1]), 18);
        assert_eq!(zeros(&mask.layers()[2]), 0);
    }

    #[test]
    fn scores_equal_to_magnitude_match_magnitude_pruning() {
        let net = Network::new(NetworkSpec::new(vec![3, 7, 2], 8)).unwrap();
        let a = prune_magnitude(&net, 0.4, PruneScope::Global, &Prunable::All).unwrap();
        let b = prune_by_scores(&ImportanceScores::magnitude(&net), 0.4, PruneScope::Global, &Prunable::All)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_in_apply() {
        let net = Network::new(NetworkSpec::new(vec![3, 7, 2], 8)).unwrap();
        let other = Network::new(NetworkSpec::new(vec![3, 2], 8)).unwrap();
        let mask = PruneMask::ones_like(&other, BTreeSet::new());
        assert!(apply_mask(&net, &mask).is_err());
    }

    #[test]
    fn apply_mask_is_idempotent_and_matches_sparsity() {
        let net = Network::new(NetworkSpec::new(vec![3, 7, 5, 2], 8)).unwrap();
        let mask = prune_random(&net, 0.35, 4, &Prunable::default()).unwrap();
        let once = apply_mask(&net, &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        assert_eq!(once, twice);
        assert_eq!(sparsity(&PruneMask::from_network(&once)), sparsity(&mask));
        let ones = PruneMask::ones_like(&net, Prunable::default().resolve(3).unwrap());
        assert_eq!(apply_mask(&net, &ones).unwrap(), net);
        assert_eq!(
            once.classifier().weights(),
            net.classifier().weights(),
            "classifier must be untouched"
        );
    }

    #[test]
    fn sparsity_examples() {
        let all_zero = PruneMask::new(
            vec![Matrix::zeros(2, 2), Matrix::filled(2, 2, 1.0)],
            [0].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(sparsity(&all_zero), 1.0);
        let one = PruneMask::new(
            vec![Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 1.0]).unwrap()],
            [0].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(sparsity(&one), 0.25);
    }

    #[test]
    fn taylor_zero_weight_and_saturated_cases() {
        let net = Network::new(NetworkSpec::new(vec![2, 4, 2], 3)).unwrap();
        let data = gaussian_blobs(20, 2, 2.0, 0.3, 1);
        let mask = PruneMask::new(
            vec![
                Matrix::from_vec(4, 2, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap(),
                Matrix::filled(2, 4, 1.0),
            ],
            [0].into_iter().collect(),
        )
        .unwrap();
        let pruned = apply_mask(&net, &mask).unwrap();
        let scores = taylor_importance(&pruned, &data).unwrap();
        assert_eq!(scores.layers()[0].get(0, 0), 0.0);

        // Logits so large the softmax is exactly one-hot in f64.
        let spec = NetworkSpec::new(vec![2, 2], 0);
        let big = Layer::new(
            Matrix::from_rows(&[vec![1e4, 0.0], vec![0.0, 1e4]]).unwrap(),
            None,
            Matrix::filled(2, 2, 1.0),
        )
        .unwrap();
        let sat = Network::from_layers(spec, vec![big]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = LabeledDataset::with_sequential_ids("s", x, vec![0, 1], 2).unwrap();
        let s = taylor_importance(&sat, &d).unwrap();
        assert!(s.layers()[0].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn taylor_ranks_like_exact_removal() {
        let net = Network::new(NetworkSpec::new(vec![2, 8, 2], 21)).unwrap();
        let data = gaussian_blobs(200, 2, 2.0, 0.8, 4);
        let net = train(&net, &data, &TrainConfig { epochs: 10, batch_size: 20, learning_rate: 0.1, seed: 1 }).unwrap();
        let scores = taylor_importance(&net, &data).unwrap();
        let mut taylor = Vec::new();
        let mut exact = Vec::new();
        for (l, layer) in net.layers().iter().enumerate() {
            for r in 0..layer.out_dim() {
                for c in 0..layer.in_dim() {
                    taylor.push(scores.layers()[l].get(r, c) as f64);
                    exact.push(finite_diff_importance(&net, &data, WeightIndex::new(l, r, c)).unwrap());
                }
            }
        }
        let rho = crate::stats::spearman(&taylor, &exact).unwrap();
        assert!(rho >= 0.8, "spearman {rho}");
    }
}
