//! Gaussian approximation of a task posterior: the trained mean plus a
//! diagonal Fisher-information precision.
//!
//! The Fisher diagonal is the average, over inputs drawn from the task data,
//! of the squared per-parameter gradient of the log-likelihood at the trained
//! mean, with the label either sampled from the model's own output
//! distribution (`Sampled`) or summed exactly over classes weighted by the
//! model probabilities (`Exact`).

use crate::data::LabeledDataset;
use crate::error::{ImmError, Result};
use crate::mlp::{forward_trace, gather_batch, MlpSpec, ParameterVector};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Nonnegative per-parameter precision surrogate `diag(F_k)`.
#[derive(Debug, Clone)]
pub struct FisherDiagonal {
    values: Vec<f64>,
    sample_count: usize,
}

impl FisherDiagonal {
    pub fn new(values: Vec<f64>, sample_count: usize) -> Result<Self> {
        if !values.iter().all(|&v| v.is_finite() && v >= 0.0) {
            return Err(ImmError::Numeric(
                "Fisher entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            values,
            sample_count,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the label in the Fisher expectation is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    /// One label drawn from the model's output distribution per input.
    Sampled,
    /// Exact expectation over classes weighted by model probabilities.
    Exact,
}

/// A task's posterior approximation: mean and diagonal precision.
#[derive(Debug, Clone)]
pub struct TaskPosterior {
    pub mean: ParameterVector,
    pub precision: FisherDiagonal,
    pub task_id: usize,
}

/// Bundles a mean and Fisher diagonal without modification. The variance
/// interpretation `1/(F + eps)` is applied lazily at merge time.
pub fn make_posterior(
    mean: ParameterVector,
    fisher: FisherDiagonal,
    task_id: usize,
) -> Result<TaskPosterior> {
    if mean.len() != fisher.len() {
        return Err(ImmError::ShapeMismatch(format!(
            "mean has {} entries but Fisher has {}",
            mean.len(),
            fisher.len()
        )));
    }
    Ok(TaskPosterior {
        mean,
        precision: fisher,
        task_id,
    })
}

const FISHER_BATCH: usize = 200;

/// Estimates the diagonal Fisher information at `params` from `n_samples`
/// dataset inputs (dropout disabled). Deterministic given `seed`.
pub fn estimate_fisher_diagonal(
    params: &ParameterVector,
    spec: &MlpSpec,
    ds: &LabeledDataset,
    n_samples: usize,
    label_mode: LabelMode,
    seed: u64,
) -> Result<FisherDiagonal> {
    if ds.is_empty() {
        return Err(ImmError::Data("empty dataset for Fisher estimation".into()));
    }
    if n_samples == 0 {
        return Err(ImmError::Data("n_samples must be positive".into()));
    }
    if n_samples > ds.len() {
        return Err(ImmError::Data(format!(
            "n_samples {} exceeds dataset size {}",
            n_samples,
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    if n_samples < ds.len() {
        indices.shuffle(&mut rng);
        indices.truncate(n_samples);
    }

    let mut acc = vec![0.0; params.len()];
    for chunk in indices.chunks(FISHER_BATCH) {
        let batch = gather_batch(ds.inputs(), chunk);
        let trace = forward_trace(params, spec, batch.view(), None)?;
        let probs = trace.probabilities();
        match label_mode {
            LabelMode::Sampled => {
                // delta = P - onehot(y~P), per sample, un-normalized
                let mut delta = probs.clone();
                for mut row in delta.rows_mut() {
                    let y = sample_categorical(&row.to_vec(), &mut rng);
                    row[y] -= 1.0;
                }
                accumulate_squared_grads(params, spec, &trace, delta, &mut acc);
            }
            LabelMode::Exact => {
                // sum over classes c of p_c * grad_c^2; realized by scaling
                // delta rows with sqrt(p_c) before squaring
                for c in 0..spec.n_classes() {
                    let mut delta = probs.clone();
                    for mut row in delta.rows_mut() {
                        let w = row[c].max(0.0).sqrt();
                        row[c] -= 1.0;
                        row.mapv_inplace(|v| v * w);
                    }
                    accumulate_squared_grads(params, spec, &trace, delta, &mut acc);
                }
            }
        }
    }
    let scale = 1.0 / n_samples as f64;
    for v in &mut acc {
        *v *= scale;
    }
    FisherDiagonal::new(acc, n_samples)
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Adds, for every parameter, the sum over the batch of the squared
/// per-sample gradient implied by the output deltas.
///
/// Because the per-sample weight gradient is an outer product of the layer
/// input and the layer delta, the sum of its square over the batch is the
/// matrix product of the squared activations and squared deltas, so the
/// whole accumulation runs on batched matrix multiplies.
fn accumulate_squared_grads(
    params: &ParameterVector,
    spec: &MlpSpec,
    trace: &crate::mlp::ForwardTrace,
    delta: Array2<f64>,
    acc: &mut [f64],
) {
    let layout = params.layout();
    let mut delta = delta;
    for l in (0..spec.n_connections()).rev() {
        let slice = &layout.slices()[l];
        let a = &trace.activations[l];
        let a2 = a.mapv(|v| v * v);
        let d2 = delta.mapv(|v| v * v);
        let dw2 = a2.t().dot(&d2);
        for (dst, &src) in acc[slice.weights.clone()]
            .iter_mut()
            .zip(dw2.as_slice().unwrap())
        {
            *dst += src;
        }
        for (j, dst) in acc[slice.bias.clone()].iter_mut().enumerate() {
            *dst += d2.column(j).sum();
        }
        if l > 0 {
            let mut prev = delta.dot(&params.weights(l).t());
            let act = &trace.activations[l];
            for (mut drow, arow) in prev.rows_mut().into_iter().zip(act.rows()) {
                for (d, &av) in drow.iter_mut().zip(arow) {
                    if av <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledDataset;
    use crate::mlp::{init_mlp, MlpSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn softmax2(z: [f64; 2]) -> [f64; 2] {
        let m = z[0].max(z[1]);
        let e = [(z[0] - m).exp(), (z[1] - m).exp()];
        let s = e[0] + e[1];
        [e[0] / s, e[1] / s]
    }

    #[test]
    fn exact_mode_matches_hand_enumeration_softmax_regression() {
        // 2-feature, 2-class softmax regression (no hidden layer): the
        // log-likelihood gradient for label y is (onehot_y - p) outer x, so
        // E_y[grad^2] per weight (j,c) is x_j^2 * sum_y p_y (1[y=c]-p_c)^2.
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let params =
            ParameterVector::new(vec![0.4, -0.3, 0.2, 0.7, 0.05, -0.05], &spec).unwrap();
        let x = array![[0.8, 0.1], [0.2, 0.9]];
        let ds = LabeledDataset::new(x.clone(), vec![0, 1], 2, "t").unwrap();
        let fisher =
            estimate_fisher_diagonal(&params, &spec, &ds, 2, LabelMode::Exact, 0).unwrap();

        let mut expect = vec![0.0; 6];
        for s in 0..2 {
            let xs = [x[[s, 0]], x[[s, 1]]];
            let z = [
                xs[0] * 0.4 + xs[1] * 0.2 + 0.05,
                xs[0] * -0.3 + xs[1] * 0.7 - 0.05,
            ];
            let p = softmax2(z);
            for y in 0..2 {
                let g_out = [
                    p[0] - if y == 0 { 1.0 } else { 0.0 },
                    p[1] - if y == 1 { 1.0 } else { 0.0 },
                ];
                for j in 0..2 {
                    for c in 0..2 {
                        expect[j * 2 + c] += p[y] * (xs[j] * g_out[c]).powi(2);
                    }
                }
                for c in 0..2 {
                    expect[4 + c] += p[y] * g_out[c].powi(2);
                }
            }
        }
        for e in &mut expect {
            *e /= 2.0;
        }
        for (got, want) in fisher.values().iter().zip(&expect) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn entries_are_nonnegative() {
        let spec = MlpSpec::new(vec![4, 6, 3]).unwrap();
        let params = init_mlp(&spec, 1);
        let inputs =
            ndarray::Array2::from_shape_fn((20, 4), |(i, j)| ((i + j) % 5) as f64 / 4.0);
        let ds = LabeledDataset::new(inputs, (0..20).map(|i| i % 3).collect(), 3, "t").unwrap();
        let f =
            estimate_fisher_diagonal(&params, &spec, &ds, 20, LabelMode::Sampled, 3).unwrap();
        assert!(f.values().iter().all(|&v| v >= 0.0));
        assert_eq!(f.sample_count(), 20);
    }

    #[test]
    fn dead_input_pixels_have_zero_fisher() {
        // feature 2 is zero in every sample: all first-layer weights from it
        // must have exactly zero Fisher
        let spec = MlpSpec::new(vec![3, 5, 2]).unwrap();
        let params = init_mlp(&spec, 2);
        let inputs = ndarray::Array2::from_shape_fn((30, 3), |(i, j)| {
            if j == 2 {
                0.0
            } else {
                ((i * 3 + j) % 7) as f64 / 6.0
            }
        });
        let ds = LabeledDataset::new(inputs, (0..30).map(|i| i % 2).collect(), 2, "t").unwrap();
        let f =
            estimate_fisher_diagonal(&params, &spec, &ds, 30, LabelMode::Sampled, 4).unwrap();
        let w = &f.values()[..15]; // first-layer weights, row-major 3x5
        for c in 0..5 {
            assert_eq!(w[2 * 5 + c], 0.0);
        }
        // live pixels produce mass somewhere
        assert!(w.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn sampled_converges_to_exact_with_label_redraws() {
        // average many sampled-mode estimates (different label-draw seeds)
        // and compare against exact mode on a tiny net
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let params = init_mlp(&spec, 7);
        let inputs = ndarray::Array2::from_shape_fn((12, 3), |(i, j)| ((i + 2 * j) % 9) as f64 / 8.0);
        let ds = LabeledDataset::new(inputs, (0..12).map(|i| i % 2).collect(), 2, "t").unwrap();
        let exact =
            estimate_fisher_diagonal(&params, &spec, &ds, 12, LabelMode::Exact, 0).unwrap();
        let redraws = 400;
        let mut mean = vec![0.0; exact.len()];
        for seed in 0..redraws {
            let f = estimate_fisher_diagonal(&params, &spec, &ds, 12, LabelMode::Sampled, seed)
                .unwrap();
            for (m, &v) in mean.iter_mut().zip(f.values()) {
                *m += v / redraws as f64;
            }
        }
        let num: f64 = mean
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = exact.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 0.05, "relative L2 distance {}", num / den);
    }

    #[test]
    fn make_posterior_round_trip_and_mismatch() {
        let spec = MlpSpec::new(vec![2, 3, 2]).unwrap();
        let mean = init_mlp(&spec, 0);
        let fisher = FisherDiagonal::new(vec![0.0; mean.len()], 1).unwrap();
        let post = make_posterior(mean.clone(), fisher, 1).unwrap();
        assert_eq!(post.mean.values(), mean.values());
        let short = FisherDiagonal::new(vec![0.0; 3], 1).unwrap();
        assert!(make_posterior(mean, short, 1).is_err());
    }

    #[test]
    fn fisher_rejects_negative_or_nonfinite() {
        assert!(FisherDiagonal::new(vec![0.0, -1.0], 1).is_err());
        assert!(FisherDiagonal::new(vec![f64::NAN], 1).is_err());
    }
}
