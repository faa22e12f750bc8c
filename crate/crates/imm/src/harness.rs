//! Evaluation and experiment sweeps: accuracy/cross-entropy measurement,
//! mixing-ratio sweeps over merged models, and the two-dimensional linear
//! interpolation grid through three task solutions.

use crate::data::LabeledDataset;
use crate::error::{ImmError, Result};
use crate::merge::{MergeConfig, MergeMethod};
use crate::mlp::{forward, gather_batch, MlpSpec, ParameterVector};
use crate::posterior::FisherDiagonal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Evaluation batch size; bounds peak activation memory.
const EVAL_CHUNK: usize = 512;

/// One (model, dataset) evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: String,
    pub eval_set: String,
    pub accuracy: f64,
    pub cross_entropy: f64,
}

/// Classification accuracy and mean cross-entropy of a network on a
/// dataset, dropout disabled. Argmax ties resolve to the lowest class
/// index.
pub fn evaluate(
    params: &ParameterVector,
    spec: &MlpSpec,
    ds: &LabeledDataset,
) -> Result<(f64, f64)> {
    if ds.input_dim() != spec.input_dim() || ds.n_classes() != spec.n_classes() {
        return Err(ImmError::ShapeMismatch(format!(
            "dataset {}x{} does not fit network {}->{}",
            ds.input_dim(),
            ds.n_classes(),
            spec.input_dim(),
            spec.n_classes()
        )));
    }
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    let mut ce_sum = 0.0f64;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = gather_batch(ds.inputs(), chunk);
        let probs = forward(params, spec, batch.view(), None)?;
        for (row, &i) in probs.rows().into_iter().zip(chunk) {
            let label = ds.labels()[i];
            let mut best = 0usize;
            let mut best_p = row[0];
            for (c, &p) in row.iter().enumerate().skip(1) {
                if p > best_p {
                    best = c;
                    best_p = p;
                }
            }
            if best == label {
                correct += 1;
            }
            ce_sum -= row[label].max(1e-300).ln();
        }
    }
    let n = ds.len() as f64;
    Ok((correct as f64 / n, ce_sum / n))
}

/// How multi-task performance is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageKind {
    /// Accuracy on the pool of all task test sets (size-weighted).
    Combined,
    /// Unweighted mean of the per-task test accuracies.
    MeanOfTasks,
}

/// Averages per-task accuracies. Combined mode is the pooled-test-set
/// accuracy, which equals the test-size-weighted mean of the per-task
/// values; mean-of-tasks is the unweighted mean.
pub fn averaged_accuracy(per_task: &[f64], test_sizes: &[usize], kind: AverageKind) -> Result<f64> {
    if per_task.is_empty() || per_task.len() != test_sizes.len() {
        return Err(ImmError::InvalidConfig(
            "need one test size per accuracy, at least one task".into(),
        ));
    }
    Ok(match kind {
        AverageKind::Combined => {
            let total: usize = test_sizes.iter().sum();
            per_task
                .iter()
                .zip(test_sizes)
                .map(|(&a, &n)| a * n as f64)
                .sum::<f64>()
                / total as f64
        }
        AverageKind::MeanOfTasks => per_task.iter().sum::<f64>() / per_task.len() as f64,
    })
}

/// Evaluates a network on every test set and averages with `kind`.
pub fn evaluate_averaged(
    params: &ParameterVector,
    spec: &MlpSpec,
    test_sets: &[&LabeledDataset],
    kind: AverageKind,
) -> Result<f64> {
    let mut per_task = Vec::with_capacity(test_sets.len());
    let mut sizes = Vec::with_capacity(test_sets.len());
    for ds in test_sets {
        per_task.push(evaluate(params, spec, ds)?.0);
        sizes.push(ds.len());
    }
    averaged_accuracy(&per_task, &sizes, kind)
}

/// One point of a mixing-ratio sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub method: String,
    /// Which transfer techniques produced the swept models, e.g.
    /// "weight" or "weight+l2+drop".
    pub transfer_flags: String,
    pub per_task_accuracy: Vec<f64>,
    /// Accuracy on the pool of all task test sets.
    pub combined_accuracy: f64,
    /// Hex digest of the configuration that produced this record.
    pub config_digest: String,
}

/// Sweeps the mixing ratio of the **last** task. For each `alpha` the
/// remaining `1 - alpha` is split evenly over the earlier tasks (for two
/// tasks this is the `(1 - alpha, alpha)` pair), the models are merged
/// with `method`, and the merge is evaluated on every task test set and
/// their pool. `fishers` may hold `None` entries when `method` is mean
/// merging.
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep(
    task_means: &[ParameterVector],
    fishers: &[Option<FisherDiagonal>],
    spec: &MlpSpec,
    test_sets: &[&LabeledDataset],
    method: MergeMethod,
    alphas: &[f64],
    epsilon: f64,
    transfer_flags: &str,
    config_digest: &str,
) -> Result<Vec<SweepRecord>> {
    let k = task_means.len();
    if test_sets.len() != k {
        return Err(ImmError::InvalidConfig(format!(
            "{} test sets for {k} task models",
            test_sets.len()
        )));
    }
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut cfg = MergeConfig::last_weighted(k, alpha);
        cfg.epsilon = epsilon;
        let merged = crate::continual::merge_tasks(task_means, fishers, method, &cfg)?;
        let mut per_task = Vec::with_capacity(k);
        let mut sizes = Vec::with_capacity(k);
        for ds in test_sets {
            per_task.push(evaluate(&merged.mean, spec, ds)?.0);
            sizes.push(ds.len());
        }
        let combined = averaged_accuracy(&per_task, &sizes, AverageKind::Combined)?;
        out.push(SweepRecord {
            alpha,
            method: method.to_string(),
            transfer_flags: transfer_flags.to_string(),
            per_task_accuracy: per_task,
            combined_accuracy: combined,
            config_digest: config_digest.to_string(),
        });
    }
    Ok(out)
}

/// The canonical 21-point sweep grid `{0, 0.05, ..., 1}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// One point of the two-dimensional interpolation grid. The `accuracy` and
/// `loss` vectors carry one entry per evaluation set, with the union of all
/// sets appended last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathGridRecord {
    pub alpha: f64,
    pub beta: f64,
    pub accuracy: Vec<f64>,
    pub loss: Vec<f64>,
    /// Hex digest of the configuration that produced this record.
    pub config_digest: String,
}

/// Evaluates the plane through three solutions on a grid:
/// `theta(alpha, beta) = theta1 + alpha (theta2 - theta1) + beta (theta3 - theta2)`.
/// Both grids must lie in `[-0.2, 1.2]`. Each record holds accuracy and
/// mean cross-entropy per evaluation set plus the union set. Records come
/// out sorted by `(alpha, beta)`.
pub fn linear_path_grid(
    solutions: &[&ParameterVector; 3],
    spec: &MlpSpec,
    eval_sets: &[&LabeledDataset],
    alpha_grid: &[f64],
    beta_grid: &[f64],
    config_digest: &str,
) -> Result<Vec<PathGridRecord>> {
    if eval_sets.is_empty() {
        return Err(ImmError::Data("no evaluation sets".into()));
    }
    for grid in [alpha_grid, beta_grid] {
        if grid.is_empty() || grid.iter().any(|&g| !(-0.2..=1.2).contains(&g)) {
            return Err(ImmError::InvalidConfig(
                "grid coefficients must lie in [-0.2, 1.2]".into(),
            ));
        }
    }
    let [t1, t2, t3] = solutions;
    if !t1.same_layout(t2) || !t1.same_layout(t3) {
        return Err(ImmError::ShapeMismatch(
            "path endpoints have different layouts".into(),
        ));
    }
    let union = LabeledDataset::concat(eval_sets, "union")?;
    let mut alphas = alpha_grid.to_vec();
    let mut betas = beta_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    betas.sort_by(f64::total_cmp);

    let mut out = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in &alphas {
        for &beta in &betas {
            let values: Vec<f64> = t1
                .values()
                .iter()
                .zip(t2.values())
                .zip(t3.values())
                .map(|((&v1, &v2), &v3)| v1 + alpha * (v2 - v1) + beta * (v3 - v2))
                .collect();
            let point = ParameterVector::new(values, spec)?;
            let mut accuracy = Vec::with_capacity(eval_sets.len() + 1);
            let mut loss = Vec::with_capacity(eval_sets.len() + 1);
            for ds in eval_sets {
                let (a, l) = evaluate(&point, spec, ds)?;
                accuracy.push(a);
                loss.push(l);
            }
            let (a, l) = evaluate(&point, spec, &union)?;
            accuracy.push(a);
            loss.push(l);
            out.push(PathGridRecord {
                alpha,
                beta,
                accuracy,
                loss,
                config_digest: config_digest.to_string(),
            });
        }
    }
    Ok(out)
}

/// Writes sweep records as CSV with a `#`-prefixed header comment line.
pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let n_tasks = records.first().map_or(0, |r| r.per_task_accuracy.len());
    let task_cols: Vec<String> = (1..=n_tasks).map(|i| format!("task{i}_accuracy")).collect();
    writeln!(
        f,
        "# alpha,method,transfer_flags,{},combined_accuracy,config_digest",
        task_cols.join(",")
    )?;
    for r in records {
        let tasks: Vec<String> = r.per_task_accuracy.iter().map(|a| format!("{a}")).collect();
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.alpha,
            r.method,
            r.transfer_flags,
            tasks.join(","),
            r.combined_accuracy,
            r.config_digest
        )?;
    }
    Ok(())
}

/// Writes path-grid records as CSV with a `#`-prefixed header comment line.
pub fn write_path_csv(path: &Path, records: &[PathGridRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let n_sets = records.first().map_or(0, |r| r.accuracy.len());
    let mut cols = Vec::new();
    for i in 1..=n_sets {
        let set = if i == n_sets {
            "union".to_string()
        } else {
            format!("set{i}")
        };
        cols.push(format!("{set}_accuracy"));
        cols.push(format!("{set}_loss"));
    }
    writeln!(f, "# alpha,beta,{},config_digest", cols.join(","))?;
    for r in records {
        let vals: Vec<String> = r
            .accuracy
            .iter()
            .zip(&r.loss)
            .flat_map(|(a, l)| [format!("{a}"), format!("{l}")])
            .collect();
        writeln!(
            f,
            "{},{},{},{}",
            r.alpha,
            r.beta,
            vals.join(","),
            r.config_digest
        )?;
    }
    Ok(())
}

/// Writes any serializable record set as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
