//! Sequential-task training: weight-transfer chaining with optional
//! L2-transfer and drop-transfer, posterior merging over the trained task
//! networks, and the EWC / LwF / plain-SGD baselines.

use crate::data::LabeledDataset;
use crate::error::{ImmError, Result};
use crate::harness::{evaluate, EvalRecord};
use crate::merge::{mean_imm, mode_imm, MergeConfig, MergeMethod, MergedModel};
use crate::mlp::{
    apply_drop_transfer, drop_transfer_grad, gather_batch, init_mlp, loss_and_grad,
    sgd_step_inplace, DropMask, MlpSpec, ParameterVector, Penalty, TrainConfig,
};
use crate::posterior::{
    estimate_fisher_diagonal, make_posterior, FisherDiagonal, LabelMode, TaskPosterior,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default cap on the number of inputs feeding a Fisher estimate.
pub const DEFAULT_FISHER_SAMPLES: usize = 10_000;

/// An ordered list of tasks sharing one input dimension and one output head.
#[derive(Debug, Clone)]
pub struct TaskSequence {
    tasks: Vec<TaskData>,
}

/// One task's train and test data.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub task_id: usize,
}

impl TaskSequence {
    pub fn new(tasks: Vec<TaskData>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| ImmError::Data("empty task sequence".into()))?;
        let dim = first.train.input_dim();
        let classes = first.train.n_classes();
        for t in &tasks {
            if t.train.input_dim() != dim
                || t.test.input_dim() != dim
                || t.train.n_classes() != classes
                || t.test.n_classes() != classes
            {
                return Err(ImmError::Data(
                    "tasks disagree on input dimension or class count".into(),
                ));
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Everything produced by one sequential run: per-task trained means with
/// their recorded initial points, per-task Fisher diagonals when computed,
/// merged models per requested (method, config), and evaluation records.
#[derive(Debug, Clone)]
pub struct ContinualRunResult {
    pub task_means: Vec<ParameterVector>,
    pub task_initials: Vec<ParameterVector>,
    pub fishers: Vec<Option<FisherDiagonal>>,
    pub merged: Vec<MergedModel>,
    pub evals: Vec<EvalRecord>,
}

/// Extra objective terms beyond what [`TrainConfig`] itself describes.
enum Regularizer<'a> {
    None,
    /// One quadratic anchor per previous task (the EWC sum).
    Ewc {
        anchors: &'a [(ParameterVector, FisherDiagonal)],
        lambda: f64,
    },
    /// Fixed soft targets aligned row-by-row with the training inputs.
    SoftTargets { targets: &'a Array2<f64>, lambda: f64 },
}

/// Derives the per-task training seed from the run seed.
fn task_seed(base: u64, k: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(k as u64 + 1)
}

/// Trains one task network. With `prev_params` present the run starts from
/// it (weight-transfer); otherwise from a fresh initialization. L2-transfer
/// and drop-transfer, when enabled in the config, regularize against
/// `prev_params` and therefore require it.
pub fn train_task(
    prev_params: Option<&ParameterVector>,
    spec: &MlpSpec,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<ParameterVector> {
    let mut params = initial_point(prev_params, spec, cfg)?;
    train_one_task(&mut params, spec, ds, cfg, prev_params, &Regularizer::None)?;
    Ok(params)
}

fn initial_point(
    prev_params: Option<&ParameterVector>,
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<ParameterVector> {
    cfg.validate()?;
    if prev_params.is_none() && (cfg.l2_transfer_lambda > 0.0 || cfg.drop_transfer_enabled) {
        return Err(ImmError::InvalidConfig(
            "L2-transfer and drop-transfer need a previous network".into(),
        ));
    }
    Ok(match prev_params {
        Some(p) => p.clone(),
        None => init_mlp(spec, cfg.seed),
    })
}

fn train_one_task(
    params: &mut ParameterVector,
    spec: &MlpSpec,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    prev_params: Option<&ParameterVector>,
    reg: &Regularizer<'_>,
) -> Result<()> {
    if ds.input_dim() != spec.input_dim() {
        return Err(ImmError::ShapeMismatch(format!(
            "dataset dimension {} does not match spec input {}",
            ds.input_dim(),
            spec.input_dim()
        )));
    }
    let n = ds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let full_epochs = cfg.epochs_per_dataset.floor() as usize;
    let fraction = cfg.epochs_per_dataset - full_epochs as f64;
    let mut indices: Vec<usize> = (0..n).collect();

    let mut epoch = 0;
    loop {
        let count = if epoch < full_epochs {
            n
        } else if fraction > 0.0 && epoch == full_epochs {
            (fraction * n as f64).ceil() as usize
        } else {
            break;
        };
        indices.shuffle(&mut rng);
        for chunk in indices[..count].chunks(cfg.minibatch_size) {
            let batch = gather_batch(ds.inputs(), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels()[i]).collect();

            let mut penalties: Vec<Penalty<'_>> = Vec::new();
            if cfg.l2_transfer_lambda > 0.0 {
                penalties.push(Penalty::L2Transfer {
                    reference: prev_params.expect("checked in initial_point"),
                    lambda: cfg.l2_transfer_lambda,
                });
            }
            let target_rows;
            match reg {
                Regularizer::None => {}
                Regularizer::Ewc { anchors, lambda } => {
                    if *lambda > 0.0 {
                        for (anchor, fisher) in anchors.iter() {
                            penalties.push(Penalty::Quadratic {
                                anchor,
                                weights: fisher.values(),
                                lambda: *lambda,
                            });
                        }
                    }
                }
                Regularizer::SoftTargets { targets, lambda } => {
                    if *lambda > 0.0 {
                        target_rows = gather_batch(targets, chunk);
                        penalties.push(Penalty::SoftTarget {
                            targets: &target_rows,
                            lambda: *lambda,
                        });
                    }
                }
            }

            let grad = if cfg.drop_transfer_enabled {
                let prev = prev_params.expect("checked in initial_point");
                let mask = DropMask::sample(spec, cfg.dropout_p, &mut rng)?;
                let eff = apply_drop_transfer(
                    params,
                    prev,
                    &mask,
                    cfg.dropout_p,
                    cfg.drop_granularity,
                )?;
                // cross-entropy gradient at the effective parameters, mapped
                // back; attached penalties act on the raw parameters
                let ce_only: Vec<Penalty<'_>> = Vec::new();
                let (_, grad_eff) =
                    loss_and_grad(&eff, spec, batch.view(), &labels, None, &ce_only)?;
                let mut grad =
                    drop_transfer_grad(&grad_eff, &mask, cfg.dropout_p, cfg.drop_granularity);
                for pen in &penalties {
                    match pen {
                        Penalty::L2Transfer { reference, lambda } => {
                            let (_, contrib) =
                                crate::mlp::l2_transfer_penalty(params, reference, *lambda)?;
                            for (g, c) in grad.values_mut().iter_mut().zip(contrib.values()) {
                                *g += c;
                            }
                        }
                        _ => {
                            return Err(ImmError::InvalidConfig(
                                "drop-transfer combines only with L2-transfer".into(),
                            ))
                        }
                    }
                }
                grad
            } else {
                let mask = if cfg.dropout_p > 0.0 {
                    Some(DropMask::sample(spec, cfg.dropout_p, &mut rng)?)
                } else {
                    None
                };
                let (_, grad) = loss_and_grad(
                    params,
                    spec,
                    batch.view(),
                    &labels,
                    mask.as_ref(),
                    &penalties,
                )?;
                grad
            };
            sgd_step_inplace(params, &grad, cfg.learning_rate);
        }
        epoch += 1;
    }
    Ok(())
}

/// Per-task config for task `k` of a sequence: derived seed, and transfer
/// techniques disabled on the first task (they need a reference network).
/// When drop-transfer is requested, the first task falls back to standard
/// dropout at the same ratio.
fn sequence_task_config(base: &TrainConfig, k: usize) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.seed = task_seed(base.seed, k);
    if k == 0 {
        cfg.l2_transfer_lambda = 0.0;
        cfg.drop_transfer_enabled = false;
    }
    cfg
}

/// Runs the full sequential procedure: trains every task with
/// weight-transfer chaining, estimates Fisher diagonals when mode merging is
/// requested, merges with every (method, config) combination, and evaluates
/// every task network and merged model on every task test set plus the
/// combined test set.
pub fn run_imm_sequence(
    seq: &TaskSequence,
    spec: &MlpSpec,
    base_cfg: &TrainConfig,
    merge_cfgs: &[MergeConfig],
    methods: &[MergeMethod],
    fisher_samples: Option<usize>,
) -> Result<ContinualRunResult> {
    let k_tasks = seq.len();
    for mc in merge_cfgs {
        if mc.k() != k_tasks {
            return Err(ImmError::InvalidConfig(format!(
                "merge config has {} alphas for {k_tasks} tasks",
                mc.k()
            )));
        }
    }

    let need_fisher = methods.contains(&MergeMethod::Mode);
    let mut task_means = Vec::with_capacity(k_tasks);
    let mut task_initials = Vec::with_capacity(k_tasks);
    let mut fishers: Vec<Option<FisherDiagonal>> = Vec::with_capacity(k_tasks);

    let mut prev: Option<ParameterVector> = None;
    for (k, task) in seq.tasks().iter().enumerate() {
        let cfg = sequence_task_config(base_cfg, k);
        let initial = initial_point(prev.as_ref(), spec, &cfg)?;
        let mut params = initial.clone();
        train_one_task(
            &mut params,
            spec,
            &task.train,
            &cfg,
            prev.as_ref(),
            &Regularizer::None,
        )?;
        if need_fisher {
            let n = fisher_samples
                .unwrap_or(DEFAULT_FISHER_SAMPLES)
                .min(task.train.len());
            // exact label mode: the analytic expectation over classes has no
            // Monte-Carlo label noise, so merged models do not vary with the
            // Fisher seed
            fishers.push(Some(estimate_fisher_diagonal(
                &params,
                spec,
                &task.train,
                n,
                LabelMode::Exact,
                task_seed(base_cfg.seed, 1000 + k),
            )?));
        } else {
            fishers.push(None);
        }
        task_initials.push(initial);
        prev = Some(params.clone());
        task_means.push(params);
    }

    let mut merged = Vec::new();
    for method in methods {
        for mc in merge_cfgs {
            merged.push(merge_tasks(&task_means, &fishers, *method, mc)?);
        }
    }

    // evaluation: every model on every task test set and the combined set
    let test_refs: Vec<&LabeledDataset> = seq.tasks().iter().map(|t| &t.test).collect();
    let combined = LabeledDataset::concat(&test_refs, "combined")?;
    let mut evals = Vec::new();
    for (k, mean) in task_means.iter().enumerate() {
        eval_model(
            &format!("task{}", seq.tasks()[k].task_id),
            mean,
            spec,
            seq,
            &combined,
            &mut evals,
        )?;
    }
    for m in &merged {
        let alpha_last = m.config.alphas.last().copied().unwrap_or(1.0);
        eval_model(
            &format!("{}-imm-a{:.3}", m.method, alpha_last),
            &m.mean,
            spec,
            seq,
            &combined,
            &mut evals,
        )?;
    }

    Ok(ContinualRunResult {
        task_means,
        task_initials,
        fishers,
        merged,
        evals,
    })
}

/// Merges already-trained task networks with one method and config.
pub fn merge_tasks(
    task_means: &[ParameterVector],
    fishers: &[Option<FisherDiagonal>],
    method: MergeMethod,
    cfg: &MergeConfig,
) -> Result<MergedModel> {
    let mean_refs: Vec<&ParameterVector> = task_means.iter().collect();
    match method {
        MergeMethod::Mean => mean_imm(&mean_refs, cfg),
        MergeMethod::Mode => {
            let posteriors: Result<Vec<TaskPosterior>> = task_means
                .iter()
                .zip(fishers)
                .enumerate()
                .map(|(k, (mean, fisher))| {
                    let fisher = fisher.clone().ok_or_else(|| {
                        ImmError::InvalidConfig(format!(
                            "mode merging needs a Fisher diagonal for task {k}"
                        ))
                    })?;
                    make_posterior(mean.clone(), fisher, k)
                })
                .collect();
            let posteriors = posteriors?;
            let refs: Vec<&TaskPosterior> = posteriors.iter().collect();
            mode_imm(&refs, cfg)
        }
    }
}

fn eval_model(
    name: &str,
    params: &ParameterVector,
    spec: &MlpSpec,
    seq: &TaskSequence,
    combined: &LabeledDataset,
    out: &mut Vec<EvalRecord>,
) -> Result<()> {
    for task in seq.tasks() {
        let (acc, ce) = evaluate(params, spec, &task.test)?;
        out.push(EvalRecord {
            model: name.to_string(),
            eval_set: format!("task{}", task.task_id),
            accuracy: acc,
            cross_entropy: ce,
        });
    }
    let (acc, ce) = evaluate(params, spec, combined)?;
    out.push(EvalRecord {
        model: name.to_string(),
        eval_set: "combined".to_string(),
        accuracy: acc,
        cross_entropy: ce,
    });
    Ok(())
}

/// Plain sequential SGD: weight-transfer initialization only, no penalties.
/// Returns the final network.
pub fn train_sgd_sequential(
    seq: &TaskSequence,
    spec: &MlpSpec,
    base_cfg: &TrainConfig,
) -> Result<ParameterVector> {
    let mut cfg = base_cfg.clone();
    cfg.l2_transfer_lambda = 0.0;
    cfg.drop_transfer_enabled = false;
    let mut prev: Option<ParameterVector> = None;
    for (k, task) in seq.tasks().iter().enumerate() {
        let task_cfg = TrainConfig {
            seed: task_seed(cfg.seed, k),
            ..cfg.clone()
        };
        let mut params = initial_point(prev.as_ref(), spec, &task_cfg)?;
        train_one_task(
            &mut params,
            spec,
            &task.train,
            &task_cfg,
            prev.as_ref(),
            &Regularizer::None,
        )?;
        prev = Some(params);
    }
    Ok(prev.expect("sequence is nonempty"))
}

/// Sequential training with the elastic-weight-consolidation penalty: task
/// `k > 1` adds `(lambda/2) * sum_{j<k} sum_v F_j,v (theta_v - mu_j,v)^2`
/// with one quadratic anchor per previous task, each anchor's Fisher taken
/// at that task's own solution on its own data. Returns the final network.
pub fn train_ewc(
    seq: &TaskSequence,
    spec: &MlpSpec,
    base_cfg: &TrainConfig,
    lambda: f64,
    fisher_samples: Option<usize>,
) -> Result<ParameterVector> {
    if lambda < 0.0 {
        return Err(ImmError::InvalidConfig("lambda must be >= 0".into()));
    }
    let mut cfg = base_cfg.clone();
    cfg.l2_transfer_lambda = 0.0;
    cfg.drop_transfer_enabled = false;
    let mut anchors: Vec<(ParameterVector, FisherDiagonal)> = Vec::new();
    let mut prev: Option<ParameterVector> = None;
    for (k, task) in seq.tasks().iter().enumerate() {
        let task_cfg = TrainConfig {
            seed: task_seed(cfg.seed, k),
            ..cfg.clone()
        };
        let mut params = initial_point(prev.as_ref(), spec, &task_cfg)?;
        let reg = Regularizer::Ewc {
            anchors: &anchors,
            lambda,
        };
        train_one_task(&mut params, spec, &task.train, &task_cfg, prev.as_ref(), &reg)?;
        if lambda > 0.0 && k + 1 < seq.len() {
            let n = fisher_samples
                .unwrap_or(DEFAULT_FISHER_SAMPLES)
                .min(task.train.len());
            let fisher = estimate_fisher_diagonal(
                &params,
                spec,
                &task.train,
                n,
                LabelMode::Exact,
                task_seed(cfg.seed, 2000 + k),
            )?;
            anchors.push((params.clone(), fisher));
        }
        prev = Some(params);
    }
    Ok(prev.expect("sequence is nonempty"))
}

/// Learning-without-forgetting fine-tuning on one new task: soft targets
/// are the previous network's outputs on the new inputs, computed once
/// before training and held fixed.
pub fn train_lwf(
    prev_params: &ParameterVector,
    spec: &MlpSpec,
    new_ds: &LabeledDataset,
    cfg: &TrainConfig,
    lambda: f64,
) -> Result<ParameterVector> {
    if lambda < 0.0 {
        return Err(ImmError::InvalidConfig("lambda must be >= 0".into()));
    }
    let mut cfg = cfg.clone();
    cfg.l2_transfer_lambda = 0.0;
    cfg.drop_transfer_enabled = false;
    let targets = soft_targets(prev_params, spec, new_ds)?;
    let mut params = initial_point(Some(prev_params), spec, &cfg)?;
    let reg = Regularizer::SoftTargets {
        targets: &targets,
        lambda,
    };
    train_one_task(&mut params, spec, new_ds, &cfg, Some(prev_params), &reg)?;
    Ok(params)
}

/// Learning-without-forgetting over a whole sequence: the first task trains
/// plainly, every later task fine-tunes with [`train_lwf`] against the
/// network it started from. Returns the final network.
pub fn train_lwf_sequential(
    seq: &TaskSequence,
    spec: &MlpSpec,
    base_cfg: &TrainConfig,
    lambda: f64,
) -> Result<ParameterVector> {
    let mut cfg = base_cfg.clone();
    cfg.l2_transfer_lambda = 0.0;
    cfg.drop_transfer_enabled = false;
    let mut prev: Option<ParameterVector> = None;
    for (k, task) in seq.tasks().iter().enumerate() {
        let task_cfg = TrainConfig {
            seed: task_seed(cfg.seed, k),
            ..cfg.clone()
        };
        let next = match &prev {
            None => train_task(None, spec, &task.train, &task_cfg)?,
            Some(p) => train_lwf(p, spec, &task.train, &task_cfg, lambda)?,
        };
        prev = Some(next);
    }
    Ok(prev.expect("sequence is nonempty"))
}

/// Previous network's output probabilities for every dataset row (the LwF
/// pseudo-labels), dropout disabled.
pub fn soft_targets(
    params: &ParameterVector,
    spec: &MlpSpec,
    ds: &LabeledDataset,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((ds.len(), spec.n_classes()));
    let chunk_size = 512;
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(chunk_size) {
        let batch = gather_batch(ds.inputs(), chunk);
        let probs = crate::mlp::forward(params, spec, batch.view(), None)?;
        for (row_i, &i) in chunk.iter().enumerate() {
            out.row_mut(i).assign(&probs.row(row_i));
        }
    }
    Ok(out)
}
