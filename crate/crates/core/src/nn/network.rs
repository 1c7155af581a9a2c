//! Feedforward ReLU classifier with per-weight masks and manual backprop.
//!
//! Layer `l` holds an `out x in` weight matrix, so the final layer's rows
//! are the class directions and `logits = features · Wᵀ`. All numeric paths
//! (loss, gradients) accumulate in f64 on top of the f32 parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input dimension first, class count last.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub classifier_bias: bool,
    #[serde(default = "default_true")]
    pub hidden_bias: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, seed: u64) -> Self {
        NetworkSpec {
            layer_sizes,
            activation: Activation::Relu,
            classifier_bias: false,
            hidden_bias: true,
            seed,
        }
    }

    pub fn without_hidden_bias(mut self) -> Self {
        self.hidden_bias = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "network needs an input size and a class count".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if self.num_classes() < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if self.classifier_bias {
            return Err(Error::InvalidArgument(
                "the classifier layer must not have a bias".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Width of the penultimate (feature) layer.
    pub fn feature_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) weights: Matrix,
    pub(crate) bias: Option<Vec<f32>>,
    pub(crate) mask: Matrix,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Option<Vec<f32>>, mask: Matrix) -> Result<Self> {
        if mask.shape() != weights.shape() {
            return Err(Error::Dimension(format!(
                "mask {:?} vs weights {:?}",
                mask.shape(),
                weights.shape()
            )));
        }
        if mask.as_slice().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        if let Some(b) = &bias {
            if b.len() != weights.rows() {
                return Err(Error::Dimension(format!(
                    "bias of length {} for {} outputs",
                    b.len(),
                    weights.rows()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite bias".into()));
            }
        }
        let weights = weights.hadamard(&mask)?;
        Ok(Layer {
            weights,
            bias,
            mask,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Position of one weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WeightIndex {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

impl WeightIndex {
    pub fn new(layer: usize, row: usize, col: usize) -> Self {
        WeightIndex { layer, row, col }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    pub(crate) layers: Vec<Layer>,
}

/// Per-layer gradients of the mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Option<Vec<f32>>>,
}

/// f64 activations of one forward pass.
pub(crate) struct Trace {
    /// `layer_inputs[l]` is the `rows x in_dim(l)` input to layer `l`.
    pub layer_inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub rows: usize,
}

impl Trace {
    /// Penultimate activations, `rows x feature_dim`.
    pub fn into_features(mut self) -> Vec<f64> {
        self.layer_inputs.pop().unwrap_or_default()
    }
}

/// Unmasked f64 gradients, used by training and the straight-through
/// estimator in biprop.
pub(crate) struct DenseGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Option<Vec<f64>>>,
    pub loss: f64,
}

impl Network {
    /// Fresh network with weights uniform in ±1/√fan_in drawn from
    /// `spec.seed`; biases start at zero; all masks are ones.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = spec.num_layers();
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let (fan_in, fan_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            let bound = 1.0 / (fan_in as f32).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let weights = Matrix::from_vec(fan_out, fan_in, data)?;
            let bias = (l + 1 < n && spec.hidden_bias).then(|| vec![0.0; fan_out]);
            layers.push(Layer {
                mask: Matrix::filled(fan_out, fan_in, 1.0),
                weights,
                bias,
            });
        }
        Ok(Network { spec, layers })
    }

    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(Error::Dimension(format!(
                "{} layers for spec with {}",
                layers.len(),
                spec.num_layers()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let want = (spec.layer_sizes[l + 1], spec.layer_sizes[l]);
            if layer.weights.shape() != want {
                return Err(Error::Dimension(format!(
                    "layer {l} is {:?}, spec wants {want:?}",
                    layer.weights.shape()
                )));
            }
            let is_last = l + 1 == layers.len();
            let want_bias = !is_last && spec.hidden_bias;
            if layer.bias.is_some() != want_bias {
                return Err(Error::InvalidArgument(format!(
                    "layer {l}: bias presence does not match spec"
                )));
            }
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn classifier(&self) -> &Layer {
        self.layers.last().unwrap()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn weight(&self, idx: WeightIndex) -> Result<f32> {
        self.check_index(idx)?;
        Ok(self.layers[idx.layer].weights.get(idx.row, idx.col))
    }

    pub fn is_masked(&self, idx: WeightIndex) -> Result<bool> {
        self.check_index(idx)?;
        Ok(self.layers[idx.layer].mask.get(idx.row, idx.col) == 0.0)
    }

    /// Copy with one weight replaced. Used by finite-difference checks.
    pub fn with_weight(&self, idx: WeightIndex, value: f32) -> Result<Network> {
        self.check_index(idx)?;
        let mut out = self.clone();
        out.layers[idx.layer].weights.set(idx.row, idx.col, value);
        Ok(out)
    }

    fn check_index(&self, idx: WeightIndex) -> Result<()> {
        let layer = self
            .layers
            .get(idx.layer)
            .ok_or_else(|| Error::IndexOutOfRange(format!("layer {}", idx.layer)))?;
        if idx.row >= layer.out_dim() || idx.col >= layer.in_dim() {
            return Err(Error::IndexOutOfRange(format!(
                "({}, {}) in a {}x{} layer",
                idx.row,
                idx.col,
                layer.out_dim(),
                layer.in_dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, inputs: &Matrix) -> Result<Trace> {
        if inputs.cols() != self.spec.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                inputs.cols(),
                self.spec.input_dim()
            )));
        }
        let rows = inputs.rows();
        let mut current: Vec<f64> = inputs.as_slice().iter().map(|&v| v as f64).collect();
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (out_dim, in_dim) = layer.weights.shape();
            let w = layer.weights.as_slice();
            let mut next = vec![0.0f64; rows * out_dim];
            for r in 0..rows {
                let x = &current[r * in_dim..(r + 1) * in_dim];
                for o in 0..out_dim {
                    let wr = &w[o * in_dim..(o + 1) * in_dim];
                    let mut z: f64 = wr.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
                    if let Some(b) = &layer.bias {
                        z += b[o] as f64;
                    }
                    next[r * out_dim + o] = if l < last { z.max(0.0) } else { z };
                }
            }
            layer_inputs.push(current);
            current = next;
        }
        Ok(Trace {
            layer_inputs,
            logits: current,
            rows,
        })
    }

    /// Penultimate features at full precision, one row per input. These are
    /// the vectors geometry snapshots are measured on.
    pub fn features_f64(&self, inputs: &Matrix) -> Result<Vec<Vec<f64>>> {
        let m = self.spec.feature_dim();
        Ok(self
            .trace(inputs)?
            .into_features()
            .chunks_exact(m)
            .map(<[f64]>::to_vec)
            .collect())
    }

    /// Penultimate features `h(x)` and logits `h(x) · Wᵀ`.
    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, Matrix)> {
        let trace = self.trace(inputs)?;
        let m = self.spec.feature_dim();
        let c = self.num_classes();
        let features = trace.layer_inputs.last().unwrap();
        let features = Matrix::from_vec(
            trace.rows,
            m,
            features.iter().map(|&v| v as f32).collect(),
        )?;
        let logits = Matrix::from_vec(
            trace.rows,
            c,
            trace.logits.iter().map(|&v| v as f32).collect(),
        )?;
        Ok((features, logits))
    }

    pub fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.forward(inputs)?.1)
    }

    /// Argmax of the logits per row; ties go to the lowest class id.
    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<usize>> {
        let trace = self.trace(inputs)?;
        let c = self.num_classes();
        Ok(trace.logits.chunks_exact(c).map(argmax).collect())
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let pred = self.predict(data.inputs())?;
        let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// Mean cross-entropy over `data`, in f64.
    pub fn loss_on(&self, data: &LabeledDataset) -> Result<f64> {
        self.check_classes(data)?;
        let trace = self.trace(data.inputs())?;
        mean_cross_entropy(&trace.logits, self.num_classes(), data.labels())
    }

    fn check_classes(&self, data: &LabeledDataset) -> Result<()> {
        if data.num_classes() != self.num_classes() {
            return Err(Error::Dimension(format!(
                "dataset has {} classes, network {}",
                data.num_classes(),
                self.num_classes()
            )));
        }
        Ok(())
    }

    pub(crate) fn dense_gradients(&self, inputs: &Matrix, labels: &[usize]) -> Result<DenseGrads> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::Dimension(format!(
                "{} rows, {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        let c = self.num_classes();
        let trace = self.trace(inputs)?;
        let loss = mean_cross_entropy(&trace.logits, c, labels)?;
        let rows = trace.rows;
        let scale = 1.0 / rows as f64;

        // d loss / d logits = (softmax - onehot) / N
        let mut delta = trace.logits.clone();
        for (r, row) in delta.chunks_exact_mut(c).enumerate() {
            softmax_in_place(row);
            row[labels[r]] -= 1.0;
            row.iter_mut().for_each(|v| *v *= scale);
        }

        let n = self.layers.len();
        let mut weights = vec![Vec::new(); n];
        let mut bias = vec![None; n];
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let (out_dim, in_dim) = layer.weights.shape();
            let a = &trace.layer_inputs[l];
            let mut gw = vec![0.0f64; out_dim * in_dim];
            for r in 0..rows {
                let d = &delta[r * out_dim..(r + 1) * out_dim];
                let x = &a[r * in_dim..(r + 1) * in_dim];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let g = &mut gw[o * in_dim..(o + 1) * in_dim];
                    for (gi, &xi) in g.iter_mut().zip(x) {
                        *gi += dv * xi;
                    }
                }
            }
            if layer.bias.is_some() {
                let mut gb = vec![0.0f64; out_dim];
                for r in 0..rows {
                    for o in 0..out_dim {
                        gb[o] += delta[r * out_dim + o];
                    }
                }
                bias[l] = Some(gb);
            }
            if l > 0 {
                let w = layer.weights.as_slice();
                let mut prev = vec![0.0f64; rows * in_dim];
                for r in 0..rows {
                    let d = &delta[r * out_dim..(r + 1) * out_dim];
                    let p = &mut prev[r * in_dim..(r + 1) * in_dim];
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        for (pi, &wv) in p.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                            *pi += dv * wv as f64;
                        }
                    }
                    // ReLU derivative: active iff the post-activation is positive.
                    for (pi, &ai) in p.iter_mut().zip(&a[r * in_dim..(r + 1) * in_dim]) {
                        if ai <= 0.0 {
                            *pi = 0.0;
                        }
                    }
                }
                delta = prev;
            }
            weights[l] = gw;
        }
        Ok(DenseGrads {
            weights,
            bias,
            loss,
        })
    }

    /// Gradient of the mean cross-entropy over `batch`. Masked weights get 0.
    pub fn backward(&self, batch: &LabeledDataset) -> Result<Gradients> {
        self.check_classes(batch)?;
        let dense = self.dense_gradients(batch.inputs(), batch.labels())?;
        let weights = dense
            .weights
            .iter()
            .zip(&self.layers)
            .map(|(g, layer)| {
                let data = g
                    .iter()
                    .zip(layer.mask.as_slice())
                    .map(|(&gv, &m)| if m == 0.0 { 0.0 } else { gv as f32 })
                    .collect();
                Matrix::from_vec(layer.out_dim(), layer.in_dim(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        let bias = dense
            .bias
            .into_iter()
            .map(|b| b.map(|v| v.into_iter().map(|x| x as f32).collect()))
            .collect();
        Ok(Gradients { weights, bias })
    }

    /// Zeroes every weight whose mask bit is 0.
    #[cfg(test)]
    pub(crate) fn enforce_masks(&mut self) {
        for layer in &mut self.layers {
            for (w, &m) in layer.weights.as_mut_slice().iter_mut().zip(layer.mask.as_slice()) {
                if m == 0.0 {
                    *w = 0.0;
                }
            }
        }
    }
}

/// Exact loss change from removing one weight: `|L(w with w_idx = 0) − L(w)|`.
pub fn finite_diff_importance(
    net: &Network,
    data: &LabeledDataset,
    idx: WeightIndex,
) -> Result<f64> {
    if net.is_masked(idx)? {
        return Err(Error::MaskedWeight {
            layer: idx.layer,
            row: idx.row,
            col: idx.col,
        });
    }
    if net.weight(idx)? == 0.0 {
        return Ok(0.0);
    }
    let base = net.loss_on(data)?;
    let removed = net.with_weight(idx, 0.0)?.loss_on(data)?;
    Ok((removed - base).abs())
}

/// Mean cross-entropy of row-major `logits` (`labels.len() x classes`).
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows, {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let data: Vec<f64> = logits.as_slice().iter().map(|&v| v as f64).collect();
    mean_cross_entropy(&data, logits.cols(), labels)
}

pub(crate) fn mean_cross_entropy(logits: &[f64], classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no rows".into()));
    }
    let mut total = 0.0;
    for (row, &label) in logits.chunks_exact(classes).zip(labels) {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        total += log_sum_exp(row) - row[label];
    }
    Ok(total / labels.len() as f64)
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_net() -> Network {
        let spec = NetworkSpec::new(vec![2, 2], 0);
        let layer = Layer::new(Matrix::identity(2), None, Matrix::filled(2, 2, 1.0)).unwrap();
        Network::from_layers(spec, vec![layer]).unwrap()
    }

    #[test]
    fn identity_classifier_passes_input_through() {
        let net = identity_net();
        let x = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let (features, logits) = net.forward(&x).unwrap();
        assert_eq!(features.as_slice(), &[3.0, 4.0]);
        assert_eq!(logits.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn zero_classifier_mask_gives_zero_logits() {
        let mut net = Network::new(NetworkSpec::new(vec![3, 5, 4], 9)).unwrap();
        let last = net.layers.len() - 1;
        net.layers[last].mask = Matrix::zeros(4, 5);
        net.enforce_masks();
        let x = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        assert!(net.logits(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = identity_net();
        assert!(matches!(
            net.forward(&Matrix::zeros(1, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn loss_examples() {
        let l = cross_entropy(&Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        // -ln(e^10 / (e^10 + e^-10)) = ln(1 + e^-20)
        let l = cross_entropy(&Matrix::from_rows(&[vec![10.0, -10.0]]).unwrap(), &[0]).unwrap();
        let expected = (-20.0f64).exp().ln_1p();
        assert!((l - expected).abs() / expected < 1e-6);
        assert!((l - 2.06e-9).abs() < 1e-11);

        let one = cross_entropy(&Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(), &[1]).unwrap();
        let two = cross_entropy(
            &Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(),
            &[1, 1],
        )
        .unwrap();
        assert!((one - two).abs() < 1e-15);

        assert!(matches!(
            cross_entropy(&Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(), &[2]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn masked_weight_gradient_is_zero() {
        let mut net = Network::new(NetworkSpec::new(vec![2, 3, 2], 4)).unwrap();
        net.layers[0].mask.set(1, 0, 0.0);
        net.enforce_masks();
        let x = Matrix::from_rows(&[vec![1.0, -0.5], vec![0.2, 0.9]]).unwrap();
        let data = LabeledDataset::with_sequential_ids("d", x, vec![0, 1], 2).unwrap();
        let g = net.backward(&data).unwrap();
        assert_eq!(g.weights[0].get(1, 0), 0.0);
    }

    #[test]
    fn dead_unit_gets_no_gradient() {
        // Hidden unit 0 has a strongly negative bias so it never fires.
        let spec = NetworkSpec::new(vec![2, 2, 2], 0);
        let l0 = Layer::new(
            Matrix::from_rows(&[vec![0.5, 0.5], vec![1.0, -1.0]]).unwrap(),
            Some(vec![-100.0, 0.0]),
            Matrix::filled(2, 2, 1.0),
        )
        .unwrap();
        let l1 = Layer::new(
            Matrix::from_rows(&[vec![1.0, 0.3], vec![-0.4, 1.0]]).unwrap(),
            None,
            Matrix::filled(2, 2, 1.0),
        )
        .unwrap();
        let net = Network::from_layers(spec, vec![l0, l1]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let data = LabeledDataset::with_sequential_ids("d", x, vec![0, 1], 2).unwrap();
        let g = net.backward(&data).unwrap();
        assert_eq!(g.weights[0].row(0), &[0.0, 0.0]);
    }

    #[test]
    fn finite_diff_importance_edge_cases() {
        let mut net = Network::new(NetworkSpec::new(vec![2, 3, 2], 1)).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let data = LabeledDataset::with_sequential_ids("d", x, vec![0, 1], 2).unwrap();
        let idx = WeightIndex::new(0, 0, 0);
        net.layers[0].weights.set(0, 0, 0.0);
        assert_eq!(finite_diff_importance(&net, &data, idx).unwrap(), 0.0);
        net.layers[0].mask.set(0, 0, 0.0);
        assert!(matches!(
            finite_diff_importance(&net, &data, idx),
            Err(Error::MaskedWeight { .. })
        ));
        assert!(finite_diff_importance(&net, &data, WeightIndex::new(0, 9, 0)).is_err());
    }

    #[test]
    fn single_weight_importance_matches_hand_computation() {
        // One input, two classes, classifier rows (w, 0): logits (w x, 0).
        let spec = NetworkSpec::new(vec![1, 2], 0);
        let layer = Layer::new(
            Matrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap(),
            None,
            Matrix::filled(2, 1, 1.0),
        )
        .unwrap();
        let net = Network::from_layers(spec, vec![layer]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let data = LabeledDataset::with_sequential_ids("d", x, vec![0], 2).unwrap();
        // L(w=2) = ln(1 + e^-2); L(w=0) = ln 2.
        let expected = (std::f64::consts::LN_2 - (-2.0f64).exp().ln_1p()).abs();
        let got = finite_diff_importance(&net, &data, WeightIndex::new(0, 0, 0)).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn spec_rejects_classifier_bias() {
        let mut spec = NetworkSpec::new(vec![2, 2], 0);
        spec.classifier_bias = true;
        assert!(Network::new(spec).is_err());
        assert!(Network::new(NetworkSpec::new(vec![2], 0)).is_err());
        assert!(Network::new(NetworkSpec::new(vec![2, 1], 0)).is_err());
    }
}
