//! `imm` — train, merge, and evaluate continually-learned multilayer
//! perceptrons from the command line.
//!
//! Progress goes to standard error; standard output carries only
//! machine-readable JSON summaries. Exit codes: 0 success, 2 usage error,
//! 3 invalid configuration or manifest, 4 data error, 5 numeric failure.

use clap::{Args, Parser, Subcommand};
use imm::checkpoint::{self, config_digest};
use imm::continual::merge_tasks;
use imm::data::{load_mnist_idx, write_mnist_idx};
use imm::error::ImmError;
use imm::experiments::{DataConfig, ExperimentKind, RunManifest, RunSummary};
use imm::harness::evaluate;
use imm::merge::DEFAULT_EPSILON;
use imm::mlp::{DropGranularity, MlpSpec, TrainConfig};
use imm::posterior::{estimate_fisher_diagonal, FisherDiagonal, LabelMode};
use imm::{MergeMethod, ParameterVector};
use serde_json::json;
use std::path::{Path, PathBuf};

/// Environment variable holding the default dataset directory.
const DATA_DIR_ENV: &str = "IMM_DATA_DIR";

#[derive(Parser)]
#[command(name = "imm", version, about = "Continual learning by incremental moment matching")]
struct Cli {
    /// Worker cap; all computations are deterministic at any value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic digit corpus as IDX files.
    SynthData(SynthDataArgs),
    /// Train one task network, optionally starting from a checkpoint.
    Train(TrainArgs),
    /// Estimate the Fisher-information diagonal of a trained network.
    Fisher(FisherArgs),
    /// Merge trained networks by mean or mode moment matching.
    Merge(MergeArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run a mixing-ratio sweep described by a manifest.
    Sweep(ManifestArgs),
    /// Run a linear-path-analysis grid described by a manifest.
    Path(ManifestArgs),
    /// Run a named experiment from a manifest or from flags.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct DataLocation {
    /// Images IDX file; relative paths resolve against --data-dir.
    #[arg(long)]
    images: PathBuf,
    /// Labels IDX file; relative paths resolve against --data-dir.
    #[arg(long)]
    labels: PathBuf,
    /// Dataset directory (default: $IMM_DATA_DIR, else current directory).
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

impl DataLocation {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn load(&self) -> imm::Result<imm::data::LabeledDataset> {
        load_mnist_idx(self.resolve(&self.images), self.resolve(&self.labels))
    }
}

#[derive(Args)]
struct SynthDataArgs {
    #[arg(long, default_value_t = 24_000)]
    n_train: usize,
    #[arg(long, default_value_t = 4_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the four IDX files.
    #[arg(long, env = DATA_DIR_ENV)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataLocation,
    /// Comma-separated layer sizes, input first.
    #[arg(long, value_delimiter = ',', default_values_t = [784, 800, 800, 10])]
    layers: Vec<usize>,
    /// Previous task checkpoint: enables weight-transfer and the transfer
    /// penalties below.
    #[arg(long)]
    prev: Option<PathBuf>,
    #[arg(long, default_value_t = 0.18)]
    learning_rate: f64,
    #[arg(long, default_value_t = 10.0)]
    epochs: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// L2-transfer strength toward the previous checkpoint.
    #[arg(long, default_value_t = 0.0)]
    l2_lambda: f64,
    /// Replace standard dropout by drop-transfer toward the previous
    /// checkpoint.
    #[arg(long)]
    drop_transfer: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FisherArgs {
    /// Trained network checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    data: DataLocation,
    /// Cap on the number of inputs used.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Use the exact per-class expectation instead of sampled labels.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MergeArgs {
    /// mean or mode.
    #[arg(long)]
    method: MergeMethod,
    /// Comma-separated mixing ratios, one per network, summing to 1.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Damping added to the merged precision (mode only).
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
    /// For mean: one params checkpoint per task. For mode: alternating
    /// params and Fisher checkpoints (p1 f1 p2 f2 ...).
    #[arg(required = true)]
    checkpoints: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    data: DataLocation,
}

#[derive(Args)]
struct ManifestArgs {
    /// Manifest JSON file.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// disjoint, shuffled, path, sweep, or custom. Omit when --manifest is
    /// given.
    kind: Option<String>,
    /// Manifest JSON file; flags given alongside override its values.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of repeats; expands to seeds 1..=N.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    epochs: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    l2_lambda: Option<f64>,
    #[arg(long)]
    drop_transfer: bool,
    /// Comma-separated merge methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MergeMethod>>,
    /// Comma-separated layer sizes.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Table-1 untuned constants for the chosen kind (disjoint: 10 epochs,
    /// alpha 0.5; shuffled: alpha 1/K). This is the default regime.
    #[arg(long)]
    untuned: bool,
    /// Directory holding train-images.idx / train-labels.idx /
    /// test-images.idx / test-labels.idx.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Use the synthetic corpus: N_TRAIN,N_TEST,SEED.
    #[arg(long, value_delimiter = ',')]
    synthetic: Option<Vec<u64>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    no_baselines: bool,
    #[arg(long)]
    save_checkpoints: bool,
    #[arg(long)]
    fisher_samples: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            let (code, category) = classify(&e);
            eprintln!("error[{category}]: {e}");
            std::process::exit(code);
        }
    }
}

/// Maps error kinds to exit codes: 3 invalid config/manifest, 4 data,
/// 5 numeric.
fn classify(e: &ImmError) -> (i32, &'static str) {
    match e {
        ImmError::InvalidConfig(_) | ImmError::Json(_) | ImmError::ShapeMismatch(_) => {
            (3, "manifest")
        }
        ImmError::Data(_) | ImmError::IdxFormat { .. } | ImmError::Checkpoint { .. }
        | ImmError::Io(_) => (4, "data"),
        ImmError::Numeric(_) => (5, "numeric"),
    }
}

fn run(cli: Cli) -> imm::Result<()> {
    match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::Fisher(a) => fisher(a),
        Command::Merge(a) => merge(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => manifest_run(a, ExperimentKind::Sweep),
        Command::Path(a) => manifest_run(a, ExperimentKind::Path),
        Command::Experiment(a) => experiment(a),
    }
}

fn emit(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("serializes"));
}

fn synth_data(a: SynthDataArgs) -> imm::Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    let (train, test) = imm::synth::generate_train_test(a.n_train, a.n_test, a.seed)?;
    let side = imm::synth::IMAGE_SIDE;
    let files = [
        ("train-images.idx", "train-labels.idx", &train),
        ("test-images.idx", "test-labels.idx", &test),
    ];
    for (images, labels, ds) in files {
        eprintln!("writing {} examples to {images}/{labels}", ds.len());
        write_mnist_idx(ds, a.out_dir.join(images), a.out_dir.join(labels), side, side)?;
    }
    emit(json!({
        "train_images": a.out_dir.join("train-images.idx"),
        "train_labels": a.out_dir.join("train-labels.idx"),
        "test_images": a.out_dir.join("test-images.idx"),
        "test_labels": a.out_dir.join("test-labels.idx"),
        "n_train": a.n_train,
        "n_test": a.n_test,
        "seed": a.seed,
    }));
    Ok(())
}

fn load_params(path: &Path, spec: &MlpSpec) -> imm::Result<ParameterVector> {
    let ckpt = checkpoint::load(path)?;
    checkpoint::params_from(&ckpt, spec)
}

fn train(a: TrainArgs) -> imm::Result<()> {
    let spec = MlpSpec::new(a.layers.clone())?;
    let ds = a.data.load()?;
    let prev = a
        .prev
        .as_deref()
        .map(|p| load_params(p, &spec))
        .transpose()?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        epochs_per_dataset: a.epochs,
        minibatch_size: a.batch,
        dropout_p: a.dropout,
        l2_transfer_lambda: a.l2_lambda,
        drop_transfer_enabled: a.drop_transfer,
        drop_granularity: DropGranularity::Outgoing,
        seed: a.seed,
    };
    eprintln!(
        "training {:?} on {} examples for {} epochs",
        a.layers,
        ds.len(),
        a.epochs
    );
    let params = imm::continual::train_task(prev.as_ref(), &spec, &ds, &cfg)?;
    checkpoint::save_params(&a.out, &params, &spec, a.seed, 0, config_digest(&cfg))?;
    let (acc, ce) = evaluate(&params, &spec, &ds)?;
    emit(json!({
        "checkpoint": a.out,
        "train_accuracy": acc,
        "train_cross_entropy": ce,
    }));
    Ok(())
}

fn fisher(a: FisherArgs) -> imm::Result<()> {
    let ckpt = checkpoint::load(&a.ckpt)?;
    let spec = MlpSpec::new(ckpt.header.layer_sizes.clone())?;
    let params = checkpoint::params_from(&ckpt, &spec)?;
    let ds = a.data.load()?;
    let n = a.samples.min(ds.len());
    let mode = if a.exact {
        LabelMode::Exact
    } else {
        LabelMode::Sampled
    };
    eprintln!("estimating Fisher diagonal over {n} inputs");
    let fisher = estimate_fisher_diagonal(&params, &spec, &ds, n, mode, a.seed)?;
    checkpoint::save_fisher(&a.out, &fisher, &spec, a.seed, 0, ckpt.header.config_digest)?;
    let nonzero = fisher.values().iter().filter(|&&v| v > 0.0).count();
    emit(json!({
        "checkpoint": a.out,
        "samples": fisher.sample_count(),
        "nonzero_entries": nonzero,
        "entries": fisher.values().len(),
    }));
    Ok(())
}

fn merge(a: MergeArgs) -> imm::Result<()> {
    let k = a.alpha.len();
    let expected = match a.method {
        MergeMethod::Mean => k,
        MergeMethod::Mode => 2 * k,
    };
    if a.checkpoints.len() != expected {
        return Err(ImmError::InvalidConfig(format!(
            "{} alphas need {expected} checkpoint arguments, got {}",
            k,
            a.checkpoints.len()
        )));
    }
    let first = checkpoint::load(&a.checkpoints[0])?;
    let spec = MlpSpec::new(first.header.layer_sizes.clone())?;
    let mut means: Vec<ParameterVector> = Vec::with_capacity(k);
    let mut fishers: Vec<Option<FisherDiagonal>> = Vec::with_capacity(k);
    match a.method {
        MergeMethod::Mean => {
            for p in &a.checkpoints {
                means.push(load_params(p, &spec)?);
                fishers.push(None);
            }
        }
        MergeMethod::Mode => {
            for pair in a.checkpoints.chunks(2) {
                means.push(load_params(&pair[0], &spec)?);
                let f = checkpoint::load(&pair[1])?;
                fishers.push(Some(checkpoint::fisher_from(&f)?));
            }
        }
    }
    let cfg = imm::MergeConfig::new(a.alpha.clone(), a.eps)?;
    let merged = merge_tasks(&means, &fishers, a.method, &cfg)?;
    checkpoint::save_merged(&a.out, &merged, &spec, 0, config_digest(&cfg))?;
    emit(json!({
        "checkpoint": a.out,
        "method": a.method.to_string(),
        "alphas": a.alpha,
        "epsilon": a.eps,
    }));
    Ok(())
}

fn eval(a: EvalArgs) -> imm::Result<()> {
    let ckpt = checkpoint::load(&a.ckpt)?;
    let spec = MlpSpec::new(ckpt.header.layer_sizes.clone())?;
    let params = checkpoint::params_from(&ckpt, &spec)?;
    let ds = a.data.load()?;
    let (acc, ce) = evaluate(&params, &spec, &ds)?;
    emit(json!({
        "checkpoint": a.ckpt,
        "examples": ds.len(),
        "accuracy": acc,
        "cross_entropy": ce,
    }));
    Ok(())
}

fn manifest_run(a: ManifestArgs, expect: ExperimentKind) -> imm::Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    if manifest.kind != expect {
        return Err(ImmError::InvalidConfig(format!(
            "manifest kind is {}, expected {expect}",
            manifest.kind
        )));
    }
    run_and_emit(&manifest)
}

fn run_and_emit(manifest: &RunManifest) -> imm::Result<()> {
    eprintln!(
        "running {} experiment '{}' over {} seed(s)",
        manifest.kind,
        manifest.experiment_id,
        manifest.seeds.len()
    );
    let summary: RunSummary = imm::experiments::run_experiment(manifest)?;
    emit(serde_json::to_value(&summary)?);
    Ok(())
}

fn parse_kind(s: &str) -> imm::Result<ExperimentKind> {
    match s {
        "disjoint" => Ok(ExperimentKind::Disjoint),
        "shuffled" => Ok(ExperimentKind::Shuffled),
        "path" => Ok(ExperimentKind::Path),
        "sweep" => Ok(ExperimentKind::Sweep),
        "custom" => Ok(ExperimentKind::Custom),
        other => Err(ImmError::InvalidConfig(format!(
            "unknown experiment kind '{other}'"
        ))),
    }
}

fn experiment(a: ExperimentArgs) -> imm::Result<()> {
    if a.synthetic.as_ref().is_some_and(|s| s.len() != 3) {
        return Err(ImmError::InvalidConfig(
            "--synthetic takes N_TRAIN,N_TEST,SEED".into(),
        ));
    }
    // manifest file first, then flag overrides (flags win)
    let mut manifest = match (&a.manifest, &a.kind) {
        (Some(path), _) => RunManifest::load(path)?,
        (None, Some(kind)) => default_manifest(parse_kind(kind)?, &a)?,
        (None, None) => {
            return Err(ImmError::InvalidConfig(
                "give an experiment kind or --manifest".into(),
            ))
        }
    };
    if let Some(kind) = &a.kind {
        manifest.kind = parse_kind(kind)?;
    }
    if let Some(n) = a.seeds {
        manifest.seeds = (1..=n).collect();
    }
    if let Some(e) = a.epochs {
        manifest.train.epochs_per_dataset = e;
    }
    if let Some(p) = a.dropout {
        manifest.train.dropout_p = p;
    }
    if let Some(l) = a.l2_lambda {
        manifest.train.l2_transfer_lambda = l;
    }
    if a.drop_transfer {
        manifest.train.drop_transfer_enabled = true;
    }
    if let Some(m) = &a.methods {
        manifest.methods = m.clone();
    }
    if let Some(l) = &a.layers {
        manifest.layers = l.clone();
    }
    if let Some(dir) = &a.out_dir {
        manifest.output_dir = dir.clone();
    }
    if a.no_baselines {
        manifest.include_baselines = false;
    }
    if a.save_checkpoints {
        manifest.save_checkpoints = true;
    }
    if let Some(n) = a.fisher_samples {
        manifest.fisher_samples = Some(n);
    }
    if let Some(s) = &a.synthetic {
        manifest.data = DataConfig::Synthetic {
            n_train: s[0] as usize,
            n_test: s[1] as usize,
            seed: s[2],
        };
    } else if a.manifest.is_none() {
        if let Some(dir) = &a.data_dir {
            manifest.data = data_from_dir(dir);
        }
    }
    manifest.validate()?;
    run_and_emit(&manifest)
}

fn data_from_dir(dir: &Path) -> DataConfig {
    DataConfig::Files {
        train_images: dir.join("train-images.idx"),
        train_labels: dir.join("train-labels.idx"),
        test_images: dir.join("test-images.idx"),
        test_labels: dir.join("test-labels.idx"),
    }
}

/// Kind-appropriate defaults in the untuned regime: disjoint mixes
/// (0.5, 0.5) after 10 epochs per task; shuffled mixes 1/K with dropout.
fn default_manifest(kind: ExperimentKind, a: &ExperimentArgs) -> imm::Result<RunManifest> {
    let data = match (&a.synthetic, &a.data_dir) {
        (Some(s), _) => DataConfig::Synthetic {
            n_train: s[0] as usize,
            n_test: s[1] as usize,
            seed: s[2],
        },
        (None, Some(dir)) => data_from_dir(dir),
        (None, None) => {
            return Err(ImmError::InvalidConfig(
                "give --data-dir or --synthetic".into(),
            ))
        }
    };
    let mut train = TrainConfig::default();
    let mut merge_alphas = None;
    match kind {
        ExperimentKind::Disjoint => {
            train.epochs_per_dataset = 10.0;
            merge_alphas = Some(vec![0.5, 0.5]);
        }
        ExperimentKind::Shuffled => {
            train.dropout_p = 0.5;
            // dropout enlarges the effective gradient scale; the plain-SGD
            // default rate diverges with it on full-size networks
            train.learning_rate = 0.1;
        }
        _ => {}
    }
    let manifest = RunManifest {
        experiment_id: format!("{kind}"),
        kind,
        data,
        layers: vec![784, 800, 800, 10],
        train,
        methods: vec![MergeMethod::Mean, MergeMethod::Mode],
        merge_alphas,
        epsilon: DEFAULT_EPSILON,
        seeds: vec![1, 2, 3],
        output_dir: a.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs")),
        n_tasks: 3,
        permutation_seeds: None,
        first_task_classes: vec![0, 1, 2, 3, 4],
        subset_size: 6000,
        weight_transfer: true,
        alpha_grid: None,
        path_grid: vec![0.0, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75, 1.0],
        fisher_samples: None,
        include_baselines: true,
        ewc_lambda: 1.0,
        lwf_lambda: 1.0,
        save_checkpoints: false,
        tasks: None,
    };
    Ok(manifest)
}
