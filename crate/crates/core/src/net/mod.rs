//! Minimal dense feed-forward network: ReLU hidden layers, softmax output,
//! categorical cross-entropy, back-propagation, and a plain SGD trainer.
//!
//! Parameters live in layer matrices but are addressable as one flat vector
//! through [`ParameterLayout`]: layers in order, weights first (row-major by
//! output neuron, then input neuron), then biases. The flat view is what the
//! coordinate-search optimizer sees.
//!
//! Everything is `f64`. ReLU's sub-gradient at exactly 0 is 0, softmax is
//! stabilized by per-row max subtraction, and probabilities are clamped to
//! `1e-12` before the log in the loss.

pub mod checkpoint;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::record::{EvalMetrics, RunRecord};

/// Probability floor inside the cross-entropy log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("network needs at least 2 layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer {layer} has size 0")]
    EmptyLayer { layer: usize },
    #[error("flat parameter vector has length {got}, layout needs {want}")]
    ParamLength { got: usize, want: usize },
    #[error("batch input width {got} does not match network input size {want}")]
    InputWidth { got: usize, want: usize },
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("batch size must be >= 1")]
    BadBatchSize,
}

/// Layer sizes from input to output. Hidden activation is ReLU, output is
/// softmax; both are fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, NetError> {
        if layer_sizes.len() < 2 {
            return Err(NetError::TooFewLayers(layer_sizes.len()));
        }
        for (i, &s) in layer_sizes.iter().enumerate() {
            if s == 0 {
                return Err(NetError::EmptyLayer { layer: i });
            }
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Number of weight layers (affine maps), one less than layer sizes.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout::new(self)
    }
}

/// One affine layer's slice positions inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpan {
    pub n_in: usize,
    pub n_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

/// Deterministic bijection between the flat parameter vector and all
/// (layer, weight/bias, index) slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterLayout {
    total: usize,
    spans: Vec<LayerSpan>,
}

impl ParameterLayout {
    fn new(spec: &NetworkSpec) -> Self {
        let mut spans = Vec::with_capacity(spec.depth());
        let mut offset = 0;
        for w in spec.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let weight_offset = offset;
            let bias_offset = offset + n_in * n_out;
            offset = bias_offset + n_out;
            spans.push(LayerSpan {
                n_in,
                n_out,
                weight_offset,
                bias_offset,
            });
        }
        Self { total: offset, spans }
    }

    /// Total parameter count `D`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn spans(&self) -> &[LayerSpan] {
        &self.spans
    }
}

/// Dense network with per-layer `n_out x n_in` weight matrices and bias
/// vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    spec: NetworkSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl DenseNet {
    /// All-zero network.
    pub fn zeros(spec: NetworkSpec) -> Self {
        let weights = spec
            .layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = spec.layer_sizes[1..]
            .iter()
            .map(|&n| Array1::zeros(n))
            .collect();
        Self { spec, weights, biases }
    }

    pub fn from_flat(spec: NetworkSpec, flat: &[f64]) -> Result<Self, NetError> {
        let mut net = Self::zeros(spec);
        net.set_params(flat)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Overwrites all parameters from the flat vector. Exact inverse of
    /// [`DenseNet::get_params`].
    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NetError> {
        let layout = self.spec.layout();
        if flat.len() != layout.total() {
            return Err(NetError::ParamLength {
                got: flat.len(),
                want: layout.total(),
            });
        }
        for (l, span) in layout.spans().iter().enumerate() {
            let w = self.weights[l]
                .as_slice_mut()
                .expect("weights are standard layout");
            w.copy_from_slice(&flat[span.weight_offset..span.weight_offset + span.n_in * span.n_out]);
            let b = self.biases[l]
                .as_slice_mut()
                .expect("bias is contiguous");
            b.copy_from_slice(&flat[span.bias_offset..span.bias_offset + span.n_out]);
        }
        Ok(())
    }

    /// Flat copy of all parameters in layout order.
    pub fn get_params(&self) -> Vec<f64> {
        let layout = self.spec.layout();
        let mut flat = vec![0.0; layout.total()];
        for (l, span) in layout.spans().iter().enumerate() {
            let w = self.weights[l].as_slice().expect("standard layout");
            flat[span.weight_offset..span.weight_offset + w.len()].copy_from_slice(w);
            let b = self.biases[l].as_slice().expect("contiguous");
            flat[span.bias_offset..span.bias_offset + b.len()].copy_from_slice(b);
        }
        flat
    }

    /// In-place `params -= lr * grad` in flat layout order.
    fn apply_step(&mut self, grad: &[f64], lr: f64) {
        let layout = self.spec.layout();
        for (l, span) in layout.spans().iter().enumerate() {
            let w = self.weights[l].as_slice_mut().expect("standard layout");
            for (p, g) in w.iter_mut().zip(&grad[span.weight_offset..]) {
                *p -= lr * g;
            }
            let b = self.biases[l].as_slice_mut().expect("contiguous");
            for (p, g) in b.iter_mut().zip(&grad[span.bias_offset..]) {
                *p -= lr * g;
            }
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.spec.input_size() {
            return Err(NetError::InputWidth {
                got: x.ncols(),
                want: self.spec.input_size(),
            });
        }
        Ok(())
    }

    /// Forward pass to class probabilities (`n x classes`). Hidden layers are
    /// affine + ReLU; the output layer is affine + row-stable softmax, so each
    /// row sums to 1 within 1e-12.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&x)?;
        let mut activations = self.forward_layers(x)?;
        Ok(activations.pop().expect("at least one layer"))
    }

    /// Forward pass keeping every post-activation layer output (the last
    /// entry holds the probabilities). Used by back-propagation.
    fn forward_layers(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>, NetError> {
        let depth = self.spec.depth();
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(depth);
        for l in 0..depth {
            let input = if l == 0 {
                x
            } else {
                outputs[l - 1].view()
            };
            let mut z = input.dot(&self.weights[l].t());
            z += &self.biases[l];
            if l + 1 < depth {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                softmax_rows(&mut z);
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(NetError::NonFiniteActivation { layer: l });
            }
            outputs.push(z);
        }
        Ok(outputs)
    }

    /// Argmax class per sample; ties break to the lowest class index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>, NetError> {
        let probs = self.forward(x)?;
        Ok(argmax_rows(&probs.view()))
    }
}

/// Row-wise numerically stable softmax: subtract the row max before
/// exponentiating.
fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Per-row argmax with lowest-index tie-breaking.
pub fn argmax_rows(probs: &ArrayView2<f64>) -> Vec<u8> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            best as u8
        })
        .collect()
}

/// Summed categorical cross-entropy: `sum over samples of -ln(p[label])`
/// with `p` clamped to [`PROB_CLAMP`].
pub fn loss_cce_sum(probs: &ArrayView2<f64>, labels: &[u8]) -> f64 {
    debug_assert_eq!(probs.nrows(), labels.len());
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &label)| -(row[usize::from(label)].max(PROB_CLAMP)).ln())
        .sum()
}

/// Mean categorical cross-entropy over the batch. Non-negative.
pub fn loss_cce(probs: &ArrayView2<f64>, labels: &[u8]) -> f64 {
    loss_cce_sum(probs, labels) / labels.len() as f64
}

/// Gradient of the mean cross-entropy loss with respect to the flat
/// parameter vector, via back-propagation with the fused softmax+CCE output
/// delta (probabilities minus one-hot).
pub fn backprop(net: &DenseNet, x: ArrayView2<f64>, labels: &[u8]) -> Result<Vec<f64>, NetError> {
    backprop_with_loss(net, x, labels).map(|(g, _)| g)
}

/// Back-propagation that also reports the batch loss (the forward pass is
/// shared).
pub fn backprop_with_loss(
    net: &DenseNet,
    x: ArrayView2<f64>,
    labels: &[u8],
) -> Result<(Vec<f64>, f64), NetError> {
    net.check_input(&x)?;
    let n = labels.len();
    debug_assert_eq!(x.nrows(), n);
    let outputs = net.forward_layers(x)?;
    let depth = net.spec.depth();
    let probs = &outputs[depth - 1];
    let loss = loss_cce(&probs.view(), labels);

    let layout = net.spec.layout();
    let mut grad = vec![0.0; layout.total()];

    // Output delta: (probs - onehot) / n.
    let mut delta = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        delta[[i, usize::from(label)]] -= 1.0;
    }
    delta.mapv_inplace(|v| v / n as f64);

    for l in (0..depth).rev() {
        let span = layout.spans()[l];
        let input = if l == 0 {
            x
        } else {
            outputs[l - 1].view()
        };
        let dw = delta.t().dot(&input);
        let db = delta.sum_axis(Axis(0));
        grad[span.weight_offset..span.weight_offset + span.n_in * span.n_out]
            .copy_from_slice(dw.as_slice().expect("standard layout"));
        grad[span.bias_offset..span.bias_offset + span.n_out]
            .copy_from_slice(db.as_slice().expect("contiguous"));
        if l > 0 {
            let mut prev = delta.dot(&net.weights[l]);
            // ReLU sub-gradient: 0 wherever the activation was clamped.
            ndarray::Zip::from(&mut prev)
                .and(&outputs[l - 1])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = prev;
        }
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(NetError::NonFiniteGradient);
    }
    Ok((grad, loss))
}

/// Plain SGD settings: no momentum, constant learning rate.
#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

/// Trains `net` in place with plain minibatch SGD.
///
/// Each epoch shuffles the sample order with the caller's seeded generator
/// and walks it in `batch_size` chunks (the final chunk may be smaller).
/// `on_epoch` is invoked after each epoch to compute metrics for the log;
/// the `nfc` column counts forward plus backward passes (2 per minibatch
/// step). The starting parameters are whatever `net` holds, which is how the
/// hybrid optimizer warm-starts SGD from coordinate-search weights.
pub fn sgd_train(
    net: &mut DenseNet,
    data: &crate::data::Dataset,
    cfg: &SgdConfig,
    rng: &mut ChaCha8Rng,
    mut on_epoch: impl FnMut(&DenseNet, usize) -> EvalMetrics,
) -> Result<Vec<RunRecord>, NetError> {
    if !(cfg.learning_rate >= 0.0) {
        return Err(NetError::BadLearningRate(cfg.learning_rate));
    }
    if cfg.batch_size == 0 {
        return Err(NetError::BadBatchSize);
    }
    let start = std::time::Instant::now();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut passes: u64 = 0;
    for epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = data.batch(chunk);
            let (grad, loss) =
                backprop_with_loss(net, batch.images.view(), &batch.labels).map_err(|e| {
                    match e {
                        NetError::NonFiniteActivation { .. } | NetError::NonFiniteGradient => {
                            NetError::Diverged { epoch }
                        }
                        other => other,
                    }
                })?;
            if !loss.is_finite() {
                return Err(NetError::Diverged { epoch });
            }
            net.apply_step(&grad, cfg.learning_rate);
            passes += 2;
        }
        let eval = on_epoch(net, epoch);
        records.push(RunRecord::new(
            (epoch + 1) as u64,
            passes,
            eval,
            start.elapsed().as_secs_f64(),
        ));
    }
    Ok(records)
}
