use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {} not in 1..={n}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Plain minibatch SGD on the mean cross-entropy. Batches are drawn from a
/// per-epoch shuffle seeded by `cfg.seed`; masked weights stay at zero.
pub fn train(net: &Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Network> {
    cfg.validate(data.len())?;
    if data.num_classes() != net.num_classes() {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, network {}",
            data.num_classes(),
            net.num_classes()
        )));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
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
            for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
                for ((w, &g), &m) in layer
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .zip(gw)
                    .zip(layer.mask.as_slice())
                {
                    *w = if m == 0.0 { 0.0 } else { (*w as f64 - lr * g) as f32 };
                }
                if let (Some(b), Some(gb)) = (layer.bias.as_mut(), gb) {
                    for (bv, &g) in b.iter_mut().zip(gb) {
                        *bv = (*bv as f64 - lr * g) as f32;
                    }
                }
            }
            if net.layers.iter().any(|l| !l.weights.all_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    value: f64::NAN,
                });
            }
        }
    }
    Ok(net)
}
