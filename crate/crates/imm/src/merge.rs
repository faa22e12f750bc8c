//! Posterior merging: mean-based and mode-based incremental moment matching,
//! the last-layer alpha re-scaling rule, and the two-component
//! mixture-of-Gaussians critical-point machinery with a brute-force oracle.

use crate::error::{ImmError, Result};
use crate::mlp::ParameterVector;
use crate::posterior::TaskPosterior;
use serde::{Deserialize, Serialize};

/// Mixing ratios over tasks plus the damping constant added to the merged
/// precision before inversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeConfig {
    pub alphas: Vec<f64>,
    pub epsilon: f64,
}

impl MergeConfig {
    pub fn new(alphas: Vec<f64>, epsilon: f64) -> Result<Self> {
        let cfg = Self { alphas, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Even `1/K` mixing with the default damping.
    pub fn uniform(k: usize) -> Self {
        Self {
            alphas: vec![1.0 / k as f64; k],
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Two-task mixing `(1 - alpha, alpha)`.
    pub fn pair(alpha: f64) -> Self {
        Self {
            alphas: vec![1.0 - alpha, alpha],
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// K-task mixing where the last task takes `alpha_last` and earlier
    /// tasks share the remainder evenly.
    pub fn last_weighted(k: usize, alpha_last: f64) -> Self {
        let mut alphas = vec![(1.0 - alpha_last) / (k - 1) as f64; k - 1];
        alphas.push(alpha_last);
        Self {
            alphas,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(ImmError::InvalidConfig("empty alpha vector".into()));
        }
        if self.alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(ImmError::InvalidConfig(
                "every alpha must lie in [0,1]".into(),
            ));
        }
        let sum: f64 = self.alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ImmError::InvalidConfig(format!(
                "alphas must sum to 1, got {sum}"
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(ImmError::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Which moment-matching rule produced a merged model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMethod {
    Mean,
    Mode,
}

impl std::str::FromStr for MergeMethod {
    type Err = ImmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(MergeMethod::Mean),
            "mode" => Ok(MergeMethod::Mode),
            other => Err(ImmError::InvalidConfig(format!(
                "unknown merge method '{other}' (expected mean or mode)"
            ))),
        }
    }
}

impl std::fmt::Display for MergeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MergeMethod::Mean => write!(f, "mean"),
            MergeMethod::Mode => write!(f, "mode"),
        }
    }
}

/// A merged Gaussian approximation for the combined task.
#[derive(Debug, Clone)]
pub struct MergedModel {
    pub mean: ParameterVector,
    /// Merged diagonal variance; present for mode merging (and on request
    /// for mean merging), strictly positive when present.
    pub variance_diag: Option<Vec<f64>>,
    pub method: MergeMethod,
    pub config: MergeConfig,
}

fn check_aligned_means(means: &[&ParameterVector], cfg: &MergeConfig) -> Result<()> {
    cfg.validate()?;
    if means.is_empty() {
        return Err(ImmError::InvalidConfig("no networks to merge".into()));
    }
    if means.len() != cfg.k() {
        return Err(ImmError::InvalidConfig(format!(
            "{} networks but {} alphas",
            means.len(),
            cfg.k()
        )));
    }
    let first = means[0];
    for m in &means[1..] {
        if !first.same_layout(m) {
            return Err(ImmError::ShapeMismatch(
                "networks to merge have different layouts".into(),
            ));
        }
    }
    Ok(())
}

/// Mean-IMM: the convex combination `sum_k alpha_k mu_k` elementwise. No
/// covariance information is needed.
pub fn mean_imm(means: &[&ParameterVector], cfg: &MergeConfig) -> Result<MergedModel> {
    check_aligned_means(means, cfg)?;
    let mut merged = means[0].clone();
    for v in merged.values_mut() {
        *v = 0.0;
    }
    for (&alpha, m) in cfg.alphas.iter().zip(means) {
        for (dst, &src) in merged.values_mut().iter_mut().zip(m.values()) {
            *dst += alpha * src;
        }
    }
    Ok(MergedModel {
        mean: merged,
        variance_diag: None,
        method: MergeMethod::Mean,
        config: cfg.clone(),
    })
}

/// The merged diagonal covariance matching the mean-IMM objective:
/// `sum_k alpha_k (sigma_k^2 + (mu_k - mu*)^2)` elementwise.
pub fn mean_imm_covariance(
    means: &[&ParameterVector],
    variances_diag: &[&[f64]],
    cfg: &MergeConfig,
) -> Result<Vec<f64>> {
    check_aligned_means(means, cfg)?;
    if variances_diag.len() != means.len() {
        return Err(ImmError::ShapeMismatch(
            "one variance vector per mean required".into(),
        ));
    }
    let d = means[0].len();
    for var in variances_diag {
        if var.len() != d {
            return Err(ImmError::ShapeMismatch(
                "variance vector length mismatch".into(),
            ));
        }
        if var.iter().any(|&v| !(v > 0.0)) {
            return Err(ImmError::Numeric(
                "input variances must be positive".into(),
            ));
        }
    }
    let merged_mean = mean_imm(means, cfg)?.mean;
    let mut out = vec![0.0; d];
    for ((&alpha, mean), var) in cfg.alphas.iter().zip(means).zip(variances_diag) {
        for ((dst, (&m, &mu_star)), &v) in out
            .iter_mut()
            .zip(mean.values().iter().zip(merged_mean.values()))
            .zip(var.iter())
        {
            let spread = m - mu_star;
            *dst += alpha * (v + spread * spread);
        }
    }
    Ok(out)
}

/// Mode-IMM: per element, the merged precision is `sum_k alpha_k F_k + eps`
/// and the merged mean is the precision-weighted average of task means. The
/// Fisher diagonals act directly as precisions and are never inverted on
/// their own, so all-zero Fisher rows degrade gracefully to eps-blending.
pub fn mode_imm(posteriors: &[&TaskPosterior], cfg: &MergeConfig) -> Result<MergedModel> {
    let means: Vec<&ParameterVector> = posteriors.iter().map(|p| &p.mean).collect();
    check_aligned_means(&means, cfg)?;
    let d = means[0].len();
    for p in posteriors {
        if p.precision.len() != d {
            return Err(ImmError::ShapeMismatch(
                "posterior precision length mismatch".into(),
            ));
        }
    }
    let mut precision = vec![cfg.epsilon; d];
    let mut weighted = vec![0.0; d];
    for (&alpha, post) in cfg.alphas.iter().zip(posteriors) {
        for ((prec, num), (&f, &mu)) in precision
            .iter_mut()
            .zip(weighted.iter_mut())
            .zip(post.precision.values().iter().zip(post.mean.values()))
        {
            *prec += alpha * f;
            *num += alpha * f * mu;
        }
    }
    let mut merged = means[0].clone();
    let mut variance = vec![0.0; d];
    for (((dst, var), &num), &prec) in merged
        .values_mut()
        .iter_mut()
        .zip(variance.iter_mut())
        .zip(weighted.iter())
        .zip(precision.iter())
    {
        *dst = num / prec;
        *var = 1.0 / prec;
    }
    Ok(MergedModel {
        mean: merged,
        variance_diag: Some(variance),
        method: MergeMethod::Mode,
        config: cfg.clone(),
    })
}

/// How the scale of a weight matrix is summarized for [`alpha_rescale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScaleMode {
    /// Mean absolute value of the matrix entries (default; a plain mean can
    /// sit near zero by sign symmetry).
    MeanAbs,
    /// Plain mean of the entries.
    PlainMean,
}

/// Summarizes the scale of the layer-before-last weight matrix of a network
/// for the re-scaling rule.
pub fn weight_scale(params: &ParameterVector, mode: WeightScaleMode) -> Result<f64> {
    let n_conn = params.layout().slices().len();
    if n_conn < 2 {
        return Err(ImmError::ShapeMismatch(
            "network has no layer before the last layer".into(),
        ));
    }
    let w = params.weights(n_conn - 2);
    let n = w.len() as f64;
    let value = match mode {
        WeightScaleMode::MeanAbs => w.iter().map(|v| v.abs()).sum::<f64>() / n,
        WeightScaleMode::PlainMean => w.iter().sum::<f64>() / n,
    };
    Ok(value)
}

/// Re-scales a two-task mixing pair for last-layer merging: the unnormalized
/// pair `(a1, a2 * w1 / (w1 + w2))` renormalized to sum one, where `w_i`
/// summarizes the scale of network i's layer-before-last weights.
pub fn alpha_rescale(
    alphas: (f64, f64),
    w_scale_1: f64,
    w_scale_2: f64,
) -> Result<(f64, f64)> {
    let (a1, a2) = alphas;
    if !(0.0..=1.0).contains(&a1) || !(0.0..=1.0).contains(&a2) {
        return Err(ImmError::InvalidConfig("alphas must lie in [0,1]".into()));
    }
    if (a1 + a2 - 1.0).abs() > 1e-12 {
        return Err(ImmError::InvalidConfig("alphas must sum to 1".into()));
    }
    if !(w_scale_1 > 0.0) || !(w_scale_2 > 0.0) {
        return Err(ImmError::InvalidConfig(
            "weight scales must be positive".into(),
        ));
    }
    let u1 = a1;
    let u2 = a2 * w_scale_1 / (w_scale_1 + w_scale_2);
    let z = u1 + u2;
    if z == 0.0 {
        // both alphas zero cannot happen (they sum to 1), but guard anyway
        return Err(ImmError::Numeric("degenerate rescale".into()));
    }
    Ok((u1 / z, u2 / z))
}

/// A diagonal Gaussian for the synthetic mixture analyses.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(ImmError::ShapeMismatch(
                "mean and variance lengths differ".into(),
            ));
        }
        if variance.iter().any(|&v| !(v > 0.0)) {
            return Err(ImmError::Numeric("variances must be positive".into()));
        }
        Ok(Self { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&m, &v), &xi) in self.mean.iter().zip(&self.variance).zip(x) {
            let d = xi - m;
            acc += -0.5 * (d * d / v + v.ln() + (2.0 * std::f64::consts::PI).ln());
        }
        acc
    }
}

/// A point on the critical-point curve of a two-component diagonal mixture:
/// per element, the precision-weighted average of the two means with weights
/// `(1-a, a)`.
pub fn mog_mode_curve_point(
    g1: &DiagonalGaussian,
    g2: &DiagonalGaussian,
    a: f64,
) -> Result<Vec<f64>> {
    if !(0.0 < a && a < 1.0) {
        return Err(ImmError::InvalidConfig(format!(
            "curve parameter must lie in (0,1), got {a}"
        )));
    }
    if g1.dim() != g2.dim() {
        return Err(ImmError::ShapeMismatch("component dimensions differ".into()));
    }
    Ok(g1
        .mean
        .iter()
        .zip(&g1.variance)
        .zip(g2.mean.iter().zip(&g2.variance))
        .map(|((&m1, &v1), (&m2, &v2))| {
            let p1 = (1.0 - a) / v1;
            let p2 = a / v2;
            (p1 * m1 + p2 * m2) / (p1 + p2)
        })
        .collect())
}

/// Log-density of the weighted two-component mixture.
fn mog_log_density(
    g1: &DiagonalGaussian,
    g2: &DiagonalGaussian,
    mix: (f64, f64),
    x: &[f64],
) -> f64 {
    let a = mix.0.ln() + g1.log_density(x);
    let b = mix.1.ln() + g2.log_density(x);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Grid-search oracle for the local maxima of a two-component diagonal
/// mixture in one or two dimensions. Grid argmax candidates are refined by
/// coordinate-wise hill climbing; the density is evaluated in log space.
pub fn brute_force_mog_modes(
    g1: &DiagonalGaussian,
    g2: &DiagonalGaussian,
    mix: (f64, f64),
    grid_resolution: usize,
) -> Result<Vec<Vec<f64>>> {
    let dim = g1.dim();
    if dim != g2.dim() {
        return Err(ImmError::ShapeMismatch("component dimensions differ".into()));
    }
    if dim == 0 || dim > 2 {
        return Err(ImmError::InvalidConfig(format!(
            "oracle supports dimension 1 or 2, got {dim}"
        )));
    }
    if grid_resolution < 100 {
        return Err(ImmError::InvalidConfig(
            "need at least 100 grid points per axis".into(),
        ));
    }
    if !(mix.0 > 0.0 && mix.1 > 0.0) {
        return Err(ImmError::InvalidConfig(
            "mixture weights must be positive".into(),
        ));
    }

    // axis ranges: [min mu - 4 sigma, max mu + 4 sigma]
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for g in [g1, g2] {
        for i in 0..dim {
            let s = g.variance[i].sqrt();
            lo[i] = lo[i].min(g.mean[i] - 4.0 * s);
            hi[i] = hi[i].max(g.mean[i] + 4.0 * s);
        }
    }
    let step: Vec<f64> = (0..dim)
        .map(|i| (hi[i] - lo[i]) / (grid_resolution - 1) as f64)
        .collect();

    let point = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(i, &j)| lo[i] + step[i] * j as f64)
            .collect()
    };

    // local maxima on the grid (strictly greater-or-equal than neighbors,
    // strictly greater than at least one)
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match dim {
        1 => {
            let vals: Vec<f64> = (0..grid_resolution)
                .map(|j| mog_log_density(g1, g2, mix, &point(&[j])))
                .collect();
            for j in 0..grid_resolution {
                let left = if j > 0 { vals[j - 1] } else { f64::NEG_INFINITY };
                let right = if j + 1 < grid_resolution {
                    vals[j + 1]
                } else {
                    f64::NEG_INFINITY
                };
                if vals[j] >= left && vals[j] >= right && (vals[j] > left || vals[j] > right) {
                    candidates.push(point(&[j]));
                }
            }
        }
        2 => {
            let mut vals = vec![f64::NEG_INFINITY; grid_resolution * grid_resolution];
            for jy in 0..grid_resolution {
                for jx in 0..grid_resolution {
                    vals[jy * grid_resolution + jx] =
                        mog_log_density(g1, g2, mix, &point(&[jx, jy]));
                }
            }
            for jy in 0..grid_resolution {
                for jx in 0..grid_resolution {
                    let v = vals[jy * grid_resolution + jx];
                    let mut is_max = true;
                    let mut strict = false;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 {
                                continue;
                            }
                            let (nx, ny) = (jx as i64 + dx, jy as i64 + dy);
                            if nx < 0
                                || ny < 0
                                || nx >= grid_resolution as i64
                                || ny >= grid_resolution as i64
                            {
                                continue;
                            }
                            let nv = vals[ny as usize * grid_resolution + nx as usize];
                            if nv > v {
                                is_max = false;
                            }
                            if nv < v {
                                strict = true;
                            }
                        }
                    }
                    if is_max && strict {
                        candidates.push(point(&[jx, jy]));
                    }
                }
            }
        }
        _ => unreachable!(),
    }

    // coordinate-wise hill climbing with shrinking steps
    let mut modes: Vec<Vec<f64>> = Vec::new();
    for mut x in candidates {
        let mut h: Vec<f64> = step.clone();
        for _ in 0..60 {
            let mut moved = false;
            for i in 0..dim {
                let base = mog_log_density(g1, g2, mix, &x);
                let mut best = base;
                let mut best_x = x[i];
                for cand in [x[i] - h[i], x[i] + h[i]] {
                    let mut trial = x.clone();
                    trial[i] = cand;
                    let v = mog_log_density(g1, g2, mix, &trial);
                    if v > best {
                        best = v;
                        best_x = cand;
                    }
                }
                if best_x != x[i] {
                    x[i] = best_x;
                    moved = true;
                }
            }
            if !moved {
                for hi in h.iter_mut() {
                    *hi *= 0.5;
                }
            }
        }
        // dedup: keep modes separated by more than two grid steps
        let dup = modes.iter().any(|m| {
            m.iter()
                .zip(&x)
                .zip(&step)
                .all(|((a, b), s)| (a - b).abs() <= 2.0 * s)
        });
        if !dup {
            modes.push(x);
        }
    }
    Ok(modes)
}
