//! Dense MLP core: parameter layout, forward/backward passes, SGD, dropout,
//! and the two per-step transfer regularizers (L2-transfer penalty and the
//! drop-transfer reparameterization).
//!
//! The network is a fixed graph: ReLU on hidden layers, softmax on the output
//! layer, trained with cross-entropy. All arithmetic is `f64`.

use crate::error::{ImmError, Result};
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture of a dense multilayer perceptron.
///
/// `layer_sizes[0]` is the input dimension and the last entry is the number
/// of classes, e.g. `[784, 800, 800, 10]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(ImmError::InvalidConfig(format!(
                "need at least 2 layers, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(ImmError::InvalidConfig(
                "all layer sizes must be positive".into(),
            ));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight matrices (connections between consecutive layers).
    pub fn n_connections(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Number of hidden layers.
    pub fn n_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Total parameter count `D = sum (n_in + 1) * n_out` over connections.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    pub fn layout(&self) -> Layout {
        let mut slices = Vec::with_capacity(self.n_connections());
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (rows, cols) = (w[0], w[1]);
            let weights = offset..offset + rows * cols;
            let bias = weights.end..weights.end + cols;
            offset = bias.end;
            slices.push(LayerSlice {
                weights,
                bias,
                rows,
                cols,
            });
        }
        Layout { slices }
    }
}

/// Per-connection offsets into a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    slices: Vec<LayerSlice>,
}

/// Offsets of one weight matrix (row-major, `rows x cols`) and its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlice {
    pub weights: std::ops::Range<usize>,
    pub bias: std::ops::Range<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl Layout {
    pub fn slices(&self) -> &[LayerSlice] {
        &self.slices
    }

    pub fn param_count(&self) -> usize {
        self.slices.last().map_or(0, |s| s.bias.end)
    }
}

/// Flat vector of all network parameters together with its layout.
///
/// A value type: cloning and sending between threads is safe, and all
/// entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParameterVector {
    /// Wraps a flat value vector, validating length and finiteness.
    pub fn new(values: Vec<f64>, spec: &MlpSpec) -> Result<Self> {
        let layout = spec.layout();
        if values.len() != layout.param_count() {
            return Err(ImmError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.param_count(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(ImmError::Numeric("non-finite parameter value".into()));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let layout = spec.layout();
        let values = vec![0.0; layout.param_count()];
        Self { values, layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major view of connection `l`'s weight matrix.
    pub fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let s = &self.layout.slices[l];
        ArrayView2::from_shape((s.rows, s.cols), &self.values[s.weights.clone()]).unwrap()
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let s = &self.layout.slices[l];
        &self.values[s.bias.clone()]
    }

    pub fn same_layout(&self, other: &ParameterVector) -> bool {
        self.layout == other.layout
    }

    fn check_layout(&self, other: &ParameterVector) -> Result<()> {
        if !self.same_layout(other) {
            return Err(ImmError::ShapeMismatch(
                "parameter vectors have different layouts".into(),
            ));
        }
        Ok(())
    }
}

/// Training hyperparameters for one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs over the task dataset; fractional values train on the first
    /// `ceil(fraction * N)` examples of one shuffled epoch.
    pub epochs_per_dataset: f64,
    pub minibatch_size: usize,
    /// Dropout ratio `p` for hidden nodes; 0 disables dropout.
    pub dropout_p: f64,
    /// `lambda` of the L2-transfer penalty; 0 disables it.
    pub l2_transfer_lambda: f64,
    pub drop_transfer_enabled: bool,
    /// Which weight vector Eq-style node dropout rewires; see [`DropGranularity`].
    pub drop_granularity: DropGranularity,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            // calibrated on the bundled synthetic corpus: this rate balances
            // the logit scales of sequentially trained tasks so that the
            // untuned alpha = 1/K merge sits between them
            learning_rate: 0.18,
            epochs_per_dataset: 10.0,
            minibatch_size: 64,
            dropout_p: 0.0,
            l2_transfer_lambda: 0.0,
            drop_transfer_enabled: false,
            drop_granularity: DropGranularity::Outgoing,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(ImmError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.epochs_per_dataset > 0.0) {
            return Err(ImmError::InvalidConfig(
                "epochs_per_dataset must be > 0".into(),
            ));
        }
        if self.minibatch_size == 0 {
            return Err(ImmError::InvalidConfig("minibatch_size must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ImmError::InvalidConfig("dropout_p must be in [0,1)".into()));
        }
        if self.l2_transfer_lambda < 0.0 {
            return Err(ImmError::InvalidConfig(
                "l2_transfer_lambda must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Which weight vector a dropped hidden node rewires under drop-transfer.
///
/// `Outgoing` follows the convention that dropping a node removes its output:
/// the node's row of the next weight matrix (plus the node's bias) is the
/// affected set. `Incoming` instead rewires the column feeding the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropGranularity {
    Outgoing,
    Incoming,
}

/// Bernoulli keep-indicators for every hidden node, sampled per minibatch.
#[derive(Debug, Clone)]
pub struct DropMask {
    /// `keep[h][j]` for unit `j` of hidden layer `h` (layer index `h + 1`).
    keep: Vec<Vec<bool>>,
    p: f64,
}

impl DropMask {
    pub fn sample<R: Rng>(spec: &MlpSpec, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(ImmError::InvalidConfig(format!(
                "dropout ratio must be in [0,1), got {p}"
            )));
        }
        let keep = spec.layer_sizes()[1..spec.layer_sizes().len() - 1]
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen::<f64>() >= p).collect())
            .collect();
        Ok(Self { keep, p })
    }

    /// A mask that keeps every node (used to express "no dropout").
    pub fn keep_all(spec: &MlpSpec) -> Self {
        let keep = spec.layer_sizes()[1..spec.layer_sizes().len() - 1]
            .iter()
            .map(|&n| vec![true; n])
            .collect();
        Self { keep, p: 0.0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn keep(&self, hidden_layer: usize) -> &[bool] {
        &self.keep[hidden_layer]
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.keep.len()
    }
}

/// Draws initial weights from a zero-mean uniform distribution with bound
/// `sqrt(6 / (fan_in + fan_out))`; biases start at zero. Deterministic in
/// `seed`.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterVector::zeros(spec);
    for l in 0..spec.n_connections() {
        let slice = params.layout.slices[l].clone();
        let bound = (6.0 / (slice.rows + slice.cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for v in &mut params.values_mut()[slice.weights] {
            *v = dist.sample(&mut rng);
        }
        // biases stay zero
    }
    params
}

/// Per-layer activations kept around for the backward pass.
pub(crate) struct ForwardTrace {
    /// `activations[0]` is the input batch; the last entry is the softmax
    /// output. Hidden entries are post-ReLU (and post-dropout when masked).
    pub activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

fn check_inputs(spec: &MlpSpec, inputs: &ArrayView2<f64>) -> Result<()> {
    if inputs.ncols() != spec.input_dim() {
        return Err(ImmError::ShapeMismatch(format!(
            "input dimension {} does not match spec input dimension {}",
            inputs.ncols(),
            spec.input_dim()
        )));
    }
    if !inputs.iter().all(|v| v.is_finite()) {
        return Err(ImmError::Numeric("non-finite input value".into()));
    }
    Ok(())
}

/// Runs the full forward pass, recording every layer's activation.
///
/// With a mask, dropped hidden nodes output zero and kept ones are scaled by
/// `1/(1-p)` (inverted dropout), so evaluation-time forwards need no rescale.
pub(crate) fn forward_trace(
    params: &ParameterVector,
    spec: &MlpSpec,
    inputs: ArrayView2<f64>,
    mask: Option<&DropMask>,
) -> Result<ForwardTrace> {
    check_inputs(spec, &inputs)?;
    let n_conn = spec.n_connections();
    let mut activations = Vec::with_capacity(n_conn + 1);
    activations.push(inputs.to_owned());
    for l in 0..n_conn {
        let mut z = activations[l].dot(&params.weights(l));
        let bias = params.bias(l);
        for mut row in z.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        if l + 1 < spec.layer_sizes().len() - 1 {
            // hidden layer: ReLU, then optional inverted dropout
            z.mapv_inplace(|v| v.max(0.0));
            if let Some(m) = mask {
                let keep = m.keep(l);
                let scale = 1.0 / (1.0 - m.p());
                for mut row in z.rows_mut() {
                    for (v, &k) in row.iter_mut().zip(keep) {
                        *v = if k { *v * scale } else { 0.0 };
                    }
                }
            }
        } else {
            softmax_inplace(&mut z);
        }
        activations.push(z);
    }
    Ok(ForwardTrace { activations })
}

/// Forward pass returning the batch of class probabilities.
pub fn forward(
    params: &ParameterVector,
    spec: &MlpSpec,
    inputs: ArrayView2<f64>,
    mask: Option<&DropMask>,
) -> Result<Array2<f64>> {
    let trace = forward_trace(params, spec, inputs, mask)?;
    Ok(trace.activations.into_iter().last().unwrap())
}

/// Row-wise softmax with max-subtraction for stability.
fn softmax_inplace(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
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

/// Additional loss terms attached to a training step.
pub enum Penalty<'a> {
    /// L2-transfer: `lambda * ||theta - reference||^2`.
    L2Transfer {
        reference: &'a ParameterVector,
        lambda: f64,
    },
    /// Diagonal quadratic penalty `(lambda/2) * sum_v w_v (theta_v - a_v)^2`,
    /// the elastic-weight-consolidation form.
    Quadratic {
        anchor: &'a ParameterVector,
        weights: &'a [f64],
        lambda: f64,
    },
    /// Soft-target cross-entropy against a fixed probability batch aligned
    /// with the minibatch (the learning-without-forgetting term).
    SoftTarget {
        targets: &'a Array2<f64>,
        lambda: f64,
    },
}

/// Mean cross-entropy (plus penalties) and its gradient with the same layout
/// as `params`.
pub fn loss_and_grad(
    params: &ParameterVector,
    spec: &MlpSpec,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    mask: Option<&DropMask>,
    penalties: &[Penalty<'_>],
) -> Result<(f64, ParameterVector)> {
    let batch = inputs.nrows();
    if batch == 0 {
        return Err(ImmError::Data("empty batch".into()));
    }
    if labels.len() != batch {
        return Err(ImmError::ShapeMismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let n_classes = spec.n_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(ImmError::Data(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    for p in penalties {
        if let Penalty::SoftTarget { targets, .. } = p {
            if targets.dim() != (batch, n_classes) {
                return Err(ImmError::ShapeMismatch(
                    "soft-target batch does not match input batch".into(),
                ));
            }
        }
    }

    let trace = forward_trace(params, spec, inputs, mask)?;
    let probs = trace.probabilities();

    let mut loss = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        loss -= row[y].max(f64::MIN_POSITIVE).ln();
    }
    loss /= batch as f64;

    // output delta for mean cross-entropy: (P - Y) / batch
    let mut delta = probs.clone();
    for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    for p in penalties {
        if let Penalty::SoftTarget { targets, lambda } = p {
            let mut soft_loss = 0.0;
            for (p_row, t_row) in probs.rows().into_iter().zip(targets.rows()) {
                for (&pv, &tv) in p_row.iter().zip(t_row) {
                    if tv > 0.0 {
                        soft_loss -= tv * pv.max(f64::MIN_POSITIVE).ln();
                    }
                }
            }
            loss += lambda * soft_loss / batch as f64;
            delta += &(*lambda * (probs - *targets));
        }
    }
    delta /= batch as f64;

    let mut grad = backprop(params, spec, &trace, delta, mask);

    for p in penalties {
        match p {
            Penalty::L2Transfer { reference, lambda } => {
                let (value, contrib) = l2_transfer_penalty(params, reference, *lambda)?;
                loss += value;
                for (g, c) in grad.values_mut().iter_mut().zip(contrib.values()) {
                    *g += c;
                }
            }
            Penalty::Quadratic {
                anchor,
                weights,
                lambda,
            } => {
                params.check_layout(anchor)?;
                if weights.len() != params.len() {
                    return Err(ImmError::ShapeMismatch(
                        "quadratic penalty weights length mismatch".into(),
                    ));
                }
                let mut value = 0.0;
                for ((g, (&t, &a)), &w) in grad
                    .values_mut()
                    .iter_mut()
                    .zip(params.values().iter().zip(anchor.values()))
                    .zip(weights.iter())
                {
                    let d = t - a;
                    value += w * d * d;
                    *g += lambda * w * d;
                }
                loss += 0.5 * lambda * value;
            }
            Penalty::SoftTarget { .. } => {} // handled at the output layer
        }
    }

    Ok((loss, grad))
}

/// Backpropagates an output-layer delta through the recorded trace.
///
/// `delta` must already include any loss normalization. Returns the gradient
/// in parameter layout. When a dropout mask is given, hidden deltas are
/// masked and scaled exactly as the forward pass was.
pub(crate) fn backprop(
    params: &ParameterVector,
    spec: &MlpSpec,
    trace: &ForwardTrace,
    mut delta: Array2<f64>,
    mask: Option<&DropMask>,
) -> ParameterVector {
    let mut grad = ParameterVector::zeros(spec);
    for l in (0..spec.n_connections()).rev() {
        let slice = grad.layout.slices[l].clone();
        let a = &trace.activations[l];
        {
            let dw = a.t().dot(&delta);
            grad.values_mut()[slice.weights.clone()].copy_from_slice(dw.as_slice().unwrap());
            let db = delta.sum_axis(Axis(0));
            grad.values_mut()[slice.bias.clone()].copy_from_slice(db.as_slice().unwrap());
        }
        if l > 0 {
            let mut prev = delta.dot(&params.weights(l).t());
            // ReLU derivative from post-activation values; dropout masking
            // zeroes dropped nodes and rescales kept ones to mirror forward.
            let act = &trace.activations[l];
            if let Some(m) = mask {
                let keep = m.keep(l - 1);
                let scale = 1.0 / (1.0 - m.p());
                for (mut drow, arow) in prev.rows_mut().into_iter().zip(act.rows()) {
                    for ((d, &av), &k) in drow.iter_mut().zip(arow).zip(keep) {
                        *d = if k && av > 0.0 { *d * scale } else { 0.0 };
                    }
                }
            } else {
                for (mut drow, arow) in prev.rows_mut().into_iter().zip(act.rows()) {
                    for (d, &av) in drow.iter_mut().zip(arow) {
                        if av <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
            delta = prev;
        }
    }
    grad
}

/// One vanilla SGD step: `params - learning_rate * grad`.
pub fn sgd_step(
    params: &ParameterVector,
    grad: &ParameterVector,
    learning_rate: f64,
) -> Result<ParameterVector> {
    params.check_layout(grad)?;
    let mut out = params.clone();
    for (v, g) in out.values_mut().iter_mut().zip(grad.values()) {
        *v -= learning_rate * g;
    }
    Ok(out)
}

/// In-place SGD update used by the training hot loop.
pub fn sgd_step_inplace(params: &mut ParameterVector, grad: &ParameterVector, learning_rate: f64) {
    debug_assert!(params.same_layout(grad));
    for (v, g) in params.values_mut().iter_mut().zip(grad.values()) {
        *v -= learning_rate * g;
    }
}

/// L2-transfer penalty `lambda * ||params_k - params_prev||^2` and its
/// gradient contribution `2 * lambda * (params_k - params_prev)`.
pub fn l2_transfer_penalty(
    params_k: &ParameterVector,
    params_prev: &ParameterVector,
    lambda: f64,
) -> Result<(f64, ParameterVector)> {
    params_k.check_layout(params_prev)?;
    let mut grad = ParameterVector::zeros_like(params_k);
    let mut value = 0.0;
    if lambda != 0.0 {
        for ((g, &a), &b) in grad
            .values_mut()
            .iter_mut()
            .zip(params_k.values())
            .zip(params_prev.values())
        {
            let d = a - b;
            value += d * d;
            *g = 2.0 * lambda * d;
        }
        value *= lambda;
    }
    Ok((value, grad))
}

impl ParameterVector {
    fn zeros_like(other: &ParameterVector) -> Self {
        Self {
            values: vec![0.0; other.values.len()],
            layout: other.layout.clone(),
        }
    }
}

/// Index ranges of the parameter entries rewired by dropping one hidden node.
fn node_param_ranges(
    layout: &Layout,
    hidden_layer: usize,
    unit: usize,
    granularity: DropGranularity,
) -> (std::ops::Range<usize>, usize, usize) {
    // Returns (contiguous outgoing row range or incoming column start..start
    // with stride info, bias index). Incoming columns are strided, so we
    // return (range, stride, bias_index) where `range` iterated with `stride`
    // visits the affected weights.
    match granularity {
        DropGranularity::Outgoing => {
            // outgoing row of connection hidden_layer+1 is contiguous
            let out = &layout.slices[hidden_layer + 1];
            let start = out.weights.start + unit * out.cols;
            let own = &layout.slices[hidden_layer];
            (start..start + out.cols, 1, own.bias.start + unit)
        }
        DropGranularity::Incoming => {
            let own = &layout.slices[hidden_layer];
            let start = own.weights.start + unit;
            (
                start..own.weights.end,
                own.cols,
                own.bias.start + unit,
            )
        }
    }
}

/// Builds the effective parameters for one drop-transfer minibatch.
///
/// A dropped node's weight vector reverts to the previous task's values; a
/// kept node's becomes `mu_k / (1-p) - mu_prev * p / (1-p)`, which keeps the
/// mask-expectation of the effective parameters equal to `mu_k`.
pub fn apply_drop_transfer(
    params_k: &ParameterVector,
    params_prev: &ParameterVector,
    mask: &DropMask,
    p: f64,
    granularity: DropGranularity,
) -> Result<ParameterVector> {
    params_k.check_layout(params_prev)?;
    if !(0.0..1.0).contains(&p) {
        return Err(ImmError::InvalidConfig(format!(
            "drop-transfer ratio must be in [0,1), got {p}"
        )));
    }
    let mut eff = params_k.clone();
    let keep_scale = 1.0 / (1.0 - p);
    let prev_scale = -p / (1.0 - p);
    for h in 0..mask.n_hidden_layers() {
        for (unit, &kept) in mask.keep(h).iter().enumerate() {
            let (range, stride, bias_idx) =
                node_param_ranges(&params_k.layout, h, unit, granularity);
            let mut apply = |idx: usize| {
                let cur = params_k.values[idx];
                let prev = params_prev.values[idx];
                eff.values[idx] = if kept {
                    keep_scale * cur + prev_scale * prev
                } else {
                    prev
                };
            };
            for idx in range.step_by(stride) {
                apply(idx);
            }
            apply(bias_idx);
        }
    }
    Ok(eff)
}

/// Maps a gradient taken at the effective (drop-transfer) parameters back to
/// a gradient with respect to the raw parameters: kept-node entries scale by
/// `1/(1-p)`, dropped-node entries get zero, everything else passes through.
pub fn drop_transfer_grad(
    grad_eff: &ParameterVector,
    mask: &DropMask,
    p: f64,
    granularity: DropGranularity,
) -> ParameterVector {
    let mut grad = grad_eff.clone();
    let keep_scale = 1.0 / (1.0 - p);
    for h in 0..mask.n_hidden_layers() {
        for (unit, &kept) in mask.keep(h).iter().enumerate() {
            let (range, stride, bias_idx) =
                node_param_ranges(&grad.layout, h, unit, granularity);
            let factor = if kept { keep_scale } else { 0.0 };
            for idx in range.step_by(stride) {
                grad.values[idx] *= factor;
            }
            grad.values[bias_idx] *= factor;
        }
    }
    grad
}

/// Gathers dataset rows into a contiguous batch.
pub fn gather_batch(inputs: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut batch = Array2::zeros((indices.len(), inputs.ncols()));
    for (mut row, &i) in batch.rows_mut().into_iter().zip(indices) {
        row.assign(&inputs.slice(s![i, ..]));
    }
    batch
}
