//! End-to-end acceptance suite: ten numbered criteria covering the
//! untuned and tuned continual-learning results, the merge mathematics,
//! gradient correctness, and the Fisher structure. Each criterion prints
//! one `criterion N ...: PASS/FAIL` line (run with `--nocapture` to watch
//! progress); the test fails if any criterion fails.
//!
//! The suite trains full-size [784-800-800-10] networks over several
//! seeds and takes a few hours on one CPU core. All data comes from the
//! deterministic synthetic digit corpus.

use imm::continual::{train_ewc, train_sgd_sequential};
use imm::experiments::{
    build_tasks, run_experiment, DataConfig, ExperimentKind, RunManifest, RunSummary,
};
use imm::merge::{
    brute_force_mog_modes, mean_imm, mode_imm, mog_mode_curve_point, DiagonalGaussian,
};
use imm::mlp::{
    apply_drop_transfer, drop_transfer_grad, init_mlp, loss_and_grad, DropGranularity, DropMask,
    Penalty,
};
use imm::posterior::{estimate_fisher_diagonal, make_posterior, LabelMode};
use imm::synth::generate_corpus;
use imm::{FisherDiagonal, MergeConfig, MergeMethod, MlpSpec, ParameterVector, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

const FULL_LAYERS: [usize; 4] = [784, 800, 800, 10];
const N_TRAIN: usize = 20_000;
const N_TEST: usize = 3_000;
const CORPUS_SEED: u64 = 11;

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("imm-acceptance").join(name);
    std::fs::create_dir_all(&dir).expect("create output dir");
    dir
}

fn synthetic() -> DataConfig {
    DataConfig::Synthetic {
        n_train: N_TRAIN,
        n_test: N_TEST,
        seed: CORPUS_SEED,
    }
}

/// A manifest with the untuned constants; criteria override what differs.
fn base_manifest(kind: ExperimentKind, id: &str) -> RunManifest {
    RunManifest {
        experiment_id: id.to_string(),
        kind,
        data: synthetic(),
        layers: FULL_LAYERS.to_vec(),
        train: TrainConfig::default(),
        methods: vec![MergeMethod::Mean, MergeMethod::Mode],
        merge_alphas: None,
        epsilon: 1e-8,
        seeds: vec![1, 2, 3],
        output_dir: out_dir(id),
        n_tasks: 3,
        permutation_seeds: None,
        first_task_classes: vec![0, 1, 2, 3, 4],
        subset_size: 6000,
        weight_transfer: true,
        alpha_grid: None,
        path_grid: vec![0.0, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75, 1.0],
        fisher_samples: None,
        include_baselines: false,
        ewc_lambda: 1.0,
        lwf_lambda: 1.0,
        save_checkpoints: false,
        tasks: None,
    }
}

fn mean_acc(s: &RunSummary, model: &str, set: &str) -> f64 {
    100.0
        * s.summary
            .iter()
            .find(|m| m.model == model && m.eval_set == set)
            .unwrap_or_else(|| panic!("no summary for {model} on {set}"))
            .mean_accuracy
}

struct Outcome {
    number: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome) {
    println!(
        "criterion {:2} ({}): {} — {}",
        o.number,
        o.title,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

#[test]
fn acceptance() {
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut push = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };

    // criteria 1 and 4 share the untuned disjoint run with baselines
    let disjoint = {
        let mut m = base_manifest(ExperimentKind::Disjoint, "acc-disjoint");
        m.include_baselines = true;
        run_experiment(&m).expect("disjoint run")
    };
    push(criterion1(&disjoint));
    push(criterion2());
    push(criterion3());
    push(criterion4(&disjoint));
    push(criterion5());
    push(criterion6());
    push(criterion7());
    push(criterion8());
    push(criterion9());
    push(criterion10());

    println!();
    for o in &outcomes {
        report(o);
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.number).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// Disjoint tasks, untuned (alpha = 0.5, 10 epochs, 3 seeds): sequential
/// SGD collapses below 55 %, mean-IMM lands in [85, 95], mode-IMM in
/// [87, 96] and within 1 pp of mean-IMM or better.
fn criterion1(s: &RunSummary) -> Outcome {
    let sgd = mean_acc(s, "sgd", "combined");
    let mean = mean_acc(s, "mean-imm-a0.500", "combined");
    let mode = mean_acc(s, "mode-imm-a0.500", "combined");
    let pass = sgd < 55.0
        && (85.0..=95.0).contains(&mean)
        && (87.0..=96.0).contains(&mode)
        && mode >= mean - 1.0;
    Outcome {
        number: 1,
        title: "disjoint untuned",
        pass,
        detail: format!("sgd {sgd:.2} (<55), mean-imm {mean:.2} ([85,95]), mode-imm {mode:.2} ([87,96], >= mean-1)"),
    }
}

/// Shuffled tasks (3 pixel permutations, dropout 0.5, alpha = 1/3, 10
/// epochs, 3 seeds): mode-IMM reaches 96 % of the mean single-task
/// accuracy and beats mean-IMM by at least 2 pp.
fn criterion2() -> Outcome {
    let mut m = base_manifest(ExperimentKind::Shuffled, "acc-shuffled");
    m.train.dropout_p = 0.5;
    // dropout enlarges the effective gradient scale; the plain-SGD default
    // rate diverges with it at this width
    m.train.learning_rate = 0.1;
    m.fisher_samples = Some(6000);
    let s = run_experiment(&m).expect("shuffled run");

    let mean = mean_acc(&s, "mean-imm-a0.333", "combined");
    let mode = mean_acc(&s, "mode-imm-a0.333", "combined");
    let mean_of_tasks = (1..=3)
        .map(|k| mean_acc(&s, &format!("task{k}"), &format!("task{k}")))
        .sum::<f64>()
        / 3.0;
    let ratio = 100.0 * mode / mean_of_tasks;
    let pass = ratio >= 96.0 && mode >= mean + 2.0;
    Outcome {
        number: 2,
        title: "shuffled untuned",
        pass,
        detail: format!(
            "mode-imm {mode:.2} = {ratio:.1}% of mean-of-tasks {mean_of_tasks:.2} (>=96%), mean-imm {mean:.2} (mode >= mean+2)"
        ),
    }
}

/// Tuned mixing-ratio sweeps on disjoint tasks: best-alpha accuracy is
/// ordered L2+drop+mode >= plain mode >= plain mean, each comparison with
/// a 1.5 pp slack band.
fn criterion3() -> Outcome {
    let best = |s: &RunSummary, method: &str| -> f64 {
        let mut best = f64::NEG_INFINITY;
        for seed in &s.per_seed {
            for r in seed.sweep.as_deref().unwrap_or(&[]) {
                if r.method == method {
                    best = best.max(100.0 * r.combined_accuracy);
                }
            }
        }
        best
    };

    let mut plain = base_manifest(ExperimentKind::Sweep, "acc-sweep-plain");
    plain.seeds = vec![1];
    let plain_s = run_experiment(&plain).expect("plain sweep");

    let mut transfer = base_manifest(ExperimentKind::Sweep, "acc-sweep-transfer");
    transfer.seeds = vec![1];
    transfer.methods = vec![MergeMethod::Mode];
    transfer.train.dropout_p = 0.5;
    transfer.train.drop_transfer_enabled = true;
    transfer.train.l2_transfer_lambda = 1e-4;
    transfer.train.learning_rate = 0.1; // tuned alongside the techniques
    let transfer_s = run_experiment(&transfer).expect("transfer sweep");

    let plain_mean = best(&plain_s, "mean");
    let plain_mode = best(&plain_s, "mode");
    let transfer_mode = best(&transfer_s, "mode");
    let pass = transfer_mode >= plain_mode - 1.5 && plain_mode >= plain_mean - 1.5;
    Outcome {
        number: 3,
        title: "tuned transfer ordering",
        pass,
        detail: format!(
            "L2+drop+mode {transfer_mode:.2} >= plain mode {plain_mode:.2} >= plain mean {plain_mean:.2} (1.5 pp slack)"
        ),
    }
}

/// EWC failure mode: untuned EWC (lambda = 1) also collapses below 55 %
/// on disjoint tasks, and the lambda = 0 code path reproduces plain
/// sequential SGD bitwise.
fn criterion4(disjoint: &RunSummary) -> Outcome {
    let ewc = mean_acc(disjoint, "ewc", "combined");

    let mut m = base_manifest(ExperimentKind::Disjoint, "acc-ewc-zero");
    m.seeds = vec![1];
    let spec = MlpSpec::new(m.layers.clone()).unwrap();
    let seq = build_tasks(&m, 1).unwrap();
    let cfg = TrainConfig { seed: 1, ..m.train.clone() };
    let sgd = train_sgd_sequential(&seq, &spec, &cfg).unwrap();
    let ewc0 = train_ewc(&seq, &spec, &cfg, 0.0, Some(1000)).unwrap();
    let bitwise = sgd.values() == ewc0.values();

    Outcome {
        number: 4,
        title: "EWC failure mode",
        pass: ewc < 55.0 && bitwise,
        detail: format!("ewc(lambda=1) {ewc:.2} (<55), lambda=0 bitwise == sgd: {bitwise}"),
    }
}

/// Mixture-of-Gaussians mode oracle: every brute-force mode of 200 random
/// 1-D two-component mixtures lies on the critical-point curve within two
/// grid steps, and for equal covariances the curve is exactly the straight
/// segment between the means.
fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let resolution = 400usize;
    let mut worst = 0.0f64;
    let mut all_on_curve = true;

    for _ in 0..200 {
        let g1 = DiagonalGaussian::new(
            vec![rng.gen_range(-3.0..3.0)],
            vec![rng.gen_range(0.05..2.0)],
        )
        .unwrap();
        let g2 = DiagonalGaussian::new(
            vec![rng.gen_range(-3.0..3.0)],
            vec![rng.gen_range(0.05..2.0)],
        )
        .unwrap();
        let w = rng.gen_range(0.2..0.8);
        let modes = brute_force_mog_modes(&g1, &g2, (w, 1.0 - w), resolution).unwrap();
        assert!(!modes.is_empty(), "mixture without modes");

        // axis range replicated from the oracle to convert steps to distance
        let lo = (g1.mean[0] - 4.0 * g1.variance[0].sqrt())
            .min(g2.mean[0] - 4.0 * g2.variance[0].sqrt());
        let hi = (g1.mean[0] + 4.0 * g1.variance[0].sqrt())
            .max(g2.mean[0] + 4.0 * g2.variance[0].sqrt());
        let step = (hi - lo) / (resolution - 1) as f64;

        for mode in &modes {
            let mut dist = f64::INFINITY;
            for i in 1..4000 {
                let a = i as f64 / 4000.0;
                let c = mog_mode_curve_point(&g1, &g2, a).unwrap();
                dist = dist.min((c[0] - mode[0]).abs());
            }
            worst = worst.max(dist / step);
            if dist > 2.0 * step {
                all_on_curve = false;
            }
        }
    }

    // equal covariances: the curve collapses to the straight segment
    let mut max_dev = 0.0f64;
    for _ in 0..200 {
        let v = rng.gen_range(0.05..2.0);
        let m1 = rng.gen_range(-3.0..3.0);
        let m2 = rng.gen_range(-3.0..3.0);
        let g1 = DiagonalGaussian::new(vec![m1], vec![v]).unwrap();
        let g2 = DiagonalGaussian::new(vec![m2], vec![v]).unwrap();
        for i in 1..1000 {
            let a = i as f64 / 1000.0;
            let c = mog_mode_curve_point(&g1, &g2, a).unwrap();
            max_dev = max_dev.max((c[0] - ((1.0 - a) * m1 + a * m2)).abs());
        }
    }

    Outcome {
        number: 5,
        title: "MoG mode oracle",
        pass: all_on_curve && max_dev < 1e-12,
        detail: format!(
            "worst mode-to-curve distance {worst:.2} grid steps (<=2), equal-cov deviation {max_dev:.1e} (<1e-12)"
        ),
    }
}

/// Mode-IMM reduces to mean-IMM when the Fisher diagonals are
/// elementwise equal: infinity-norm difference below 1e-9 over 100 random
/// posterior pairs with epsilon = 1e-12 * min F.
fn criterion6() -> Outcome {
    let spec = MlpSpec::new(vec![4, 6, 5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;

    for _ in 0..100 {
        let d = spec.param_count();
        let random_params = |rng: &mut ChaCha8Rng| {
            ParameterVector::new((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(), &spec)
                .unwrap()
        };
        let m1 = random_params(&mut rng);
        let m2 = random_params(&mut rng);
        let fisher: Vec<f64> = (0..d).map(|_| rng.gen_range(1e-4..10.0)).collect();
        let min_f = fisher.iter().cloned().fold(f64::INFINITY, f64::min);
        let alpha = rng.gen_range(0.05..0.95);
        let cfg = MergeConfig::new(vec![1.0 - alpha, alpha], 1e-12 * min_f).unwrap();

        let mean = mean_imm(&[&m1, &m2], &cfg).unwrap();
        let p1 = make_posterior(m1, FisherDiagonal::new(fisher.clone(), 1).unwrap(), 1).unwrap();
        let p2 = make_posterior(m2, FisherDiagonal::new(fisher, 1).unwrap(), 2).unwrap();
        let mode = mode_imm(&[&p1, &p2], &cfg).unwrap();

        for (a, b) in mode.mean.values().iter().zip(mean.mean.values()) {
            worst = worst.max((a - b).abs());
        }
    }

    Outcome {
        number: 6,
        title: "mode reduces to mean",
        pass: worst < 1e-9,
        detail: format!("max |mode - mean| = {worst:.1e} (<1e-9) over 100 equal-Fisher pairs"),
    }
}

/// Analytic gradients match central finite differences on a [6,8,8,4]
/// network: cross-entropy, L2-transfer, the EWC quadratic penalty, the
/// LwF soft-target term, and the drop-transfer pathway with a fixed mask.
fn criterion7() -> Outcome {
    let spec = MlpSpec::new(vec![6, 8, 8, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let params = init_mlp(&spec, 7);
    let prev = init_mlp(&spec, 8);
    let n = 5usize;
    let inputs = Array2::from_shape_fn((n, 6), |_| rng.gen_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4usize)).collect();
    let anchors: Vec<f64> = (0..spec.param_count()).map(|_| rng.gen_range(0.0..2.0)).collect();
    let mut targets = Array2::from_shape_fn((n, 4), |_| rng.gen_range(0.1..1.0));
    for mut row in targets.rows_mut() {
        let s: f64 = row.iter().sum();
        row.mapv_inplace(|v| v / s);
    }
    let mask = DropMask::sample(&spec, 0.5, &mut rng).unwrap();

    // max relative error of the analytic gradient against a central
    // difference with step h, over every coordinate
    let fd_max_rel = |f: &dyn Fn(&ParameterVector) -> f64, grad: &ParameterVector| -> f64 {
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = params.clone();
        for i in 0..probe.len() {
            let orig = probe.values()[i];
            probe.values_mut()[i] = orig + h;
            let up = f(&probe);
            probe.values_mut()[i] = orig - h;
            let down = f(&probe);
            probe.values_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grad.values()[i];
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
        }
        worst
    };

    let mut worst_overall = 0.0f64;
    let mut check = |name: &str, penalties: &[Penalty<'_>], mask: Option<&DropMask>| {
        let (_, grad) =
            loss_and_grad(&params, &spec, inputs.view(), &labels, mask, penalties).unwrap();
        let err = fd_max_rel(
            &|p| loss_and_grad(p, &spec, inputs.view(), &labels, mask, penalties).unwrap().0,
            &grad,
        );
        worst_overall = worst_overall.max(err);
        assert!(err.is_finite(), "non-finite error for {name}");
    };

    check("cross-entropy", &[], None);
    check(
        "l2-transfer",
        &[Penalty::L2Transfer { reference: &prev, lambda: 0.3 }],
        None,
    );
    check(
        "ewc",
        &[Penalty::Quadratic { anchor: &prev, weights: &anchors, lambda: 0.7 }],
        None,
    );
    check(
        "lwf",
        &[Penalty::SoftTarget { targets: &targets, lambda: 0.5 }],
        None,
    );
    check("dropout mask", &[], Some(&mask));

    // drop-transfer pathway: loss at the effective parameters as a
    // function of the raw parameters, mask held fixed
    let p_drop = 0.5;
    let eff_loss = |p: &ParameterVector| -> f64 {
        let eff = apply_drop_transfer(p, &prev, &mask, p_drop, DropGranularity::Outgoing).unwrap();
        loss_and_grad(&eff, &spec, inputs.view(), &labels, None, &[]).unwrap().0
    };
    let eff = apply_drop_transfer(&params, &prev, &mask, p_drop, DropGranularity::Outgoing).unwrap();
    let (_, grad_eff) = loss_and_grad(&eff, &spec, inputs.view(), &labels, None, &[]).unwrap();
    let grad = drop_transfer_grad(&grad_eff, &mask, p_drop, DropGranularity::Outgoing);
    let err = fd_max_rel(&eff_loss, &grad);
    worst_overall = worst_overall.max(err);

    Outcome {
        number: 7,
        title: "gradient correctness",
        pass: worst_overall < 1e-4,
        detail: format!("max relative error {worst_overall:.2e} (<1e-4) across 6 gradient paths"),
    }
}

/// Linear path analysis over three 6000-sample subsets: with
/// weight-transfer the equal-average point (2/3, 1/3) matches or beats
/// every corner in at least 2 of 3 seeds; without it the straight
/// theta1 -> theta2 path dips at least 5 pp below both endpoints in at
/// least 2 of 3 seeds.
fn criterion8() -> Outcome {
    let run = |wt: bool, id: &str| -> RunSummary {
        let mut m = base_manifest(ExperimentKind::Path, id);
        m.weight_transfer = wt;
        // Width matters for path geometry: very wide nets are linearly
        // mode-connected (the independent-init barrier nearly vanishes),
        // while narrow nets lose the averaging benefit at the grid center.
        // 500 hidden units exhibits both phenomena at once.
        m.layers = vec![784, 500, 500, 10];
        // a grid fine enough to resolve the barrier dip, including the
        // equal-average point (2/3, 1/3)
        m.path_grid = vec![0.0, 0.25, 1.0 / 3.0, 0.4, 0.5, 0.6, 2.0 / 3.0, 0.75, 1.0];
        run_experiment(&m).expect("path run")
    };
    let with_wt = run(true, "acc-path-wt");
    let without_wt = run(false, "acc-path-ind");

    // union accuracy is the last entry of each record's accuracy vector
    let union = |records: &[imm::harness::PathGridRecord], a: f64, b: f64| -> f64 {
        records
            .iter()
            .find(|r| (r.alpha - a).abs() < 1e-9 && (r.beta - b).abs() < 1e-9)
            .map(|r| 100.0 * *r.accuracy.last().unwrap())
            .unwrap_or(f64::NAN)
    };

    let mut flat_seeds = 0;
    for seed in &with_wt.per_seed {
        let records = seed.path.as_deref().unwrap_or(&[]);
        let center = union(records, 2.0 / 3.0, 1.0 / 3.0);
        let corners = [
            union(records, 0.0, 0.0),
            union(records, 1.0, 0.0),
            union(records, 1.0, 1.0),
        ];
        if center >= corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max) {
            flat_seeds += 1;
        }
    }

    let mut barrier_seeds = 0;
    for seed in &without_wt.per_seed {
        let records = seed.path.as_deref().unwrap_or(&[]);
        let ends = [union(records, 0.0, 0.0), union(records, 1.0, 0.0)];
        let floor = ends.iter().cloned().fold(f64::INFINITY, f64::min) - 5.0;
        let dipped = records
            .iter()
            .filter(|r| r.beta == 0.0 && r.alpha > 0.0 && r.alpha < 1.0)
            .any(|r| 100.0 * *r.accuracy.last().unwrap() <= floor);
        if dipped {
            barrier_seeds += 1;
        }
    }

    Outcome {
        number: 8,
        title: "linear path analysis",
        pass: flat_seeds >= 2 && barrier_seeds >= 2,
        detail: format!(
            "weight-transfer center >= corners in {flat_seeds}/3 seeds (>=2), \
             independent-init barrier >= 5 pp in {barrier_seeds}/3 seeds (>=2)"
        ),
    }
}

/// Drop-transfer is unbiased: the Monte-Carlo mask average of the
/// effective parameters matches the current parameters within 3 standard
/// errors per entry over 100 000 masks.
fn criterion9() -> Outcome {
    let spec = MlpSpec::new(vec![4, 6, 3]).unwrap();
    let params = init_mlp(&spec, 17);
    let prev = init_mlp(&spec, 18);
    let p = 0.5;
    let n = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(909);

    let d = spec.param_count();
    let mut sum = vec![0.0f64; d];
    let mut sum_sq = vec![0.0f64; d];
    for _ in 0..n {
        let mask = DropMask::sample(&spec, p, &mut rng).unwrap();
        let eff = apply_drop_transfer(&params, &prev, &mask, p, DropGranularity::Outgoing).unwrap();
        for (i, &v) in eff.values().iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }

    let mut worst_sigmas = 0.0f64;
    let mut pass = true;
    for i in 0..d {
        let mean = sum[i] / n as f64;
        let var = (sum_sq[i] / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let diff = (mean - params.values()[i]).abs();
        // the 1e-12 absolute floor absorbs accumulation rounding on
        // entries the mask never touches (their variance is exactly zero)
        if diff > 3.0 * se + 1e-12 {
            pass = false;
        }
        if se > 0.0 {
            worst_sigmas = worst_sigmas.max(diff / se);
        }
    }

    Outcome {
        number: 9,
        title: "drop-transfer unbiasedness",
        pass,
        detail: format!("worst deviation {worst_sigmas:.2} standard errors (<=3) over {n} masks"),
    }
}

/// Dead-pixel Fisher structure: first-layer Fisher entries attached to
/// pixels that are zero across the whole Fisher sample set are exactly
/// zero.
fn criterion10() -> Outcome {
    let spec = MlpSpec::new(vec![784, 32, 10]).unwrap();
    let ds = generate_corpus(2000, 31, "fisher-set").unwrap();
    let cfg = TrainConfig { epochs_per_dataset: 2.0, seed: 3, ..TrainConfig::default() };
    let params = imm::continual::train_task(None, &spec, &ds, &cfg).unwrap();
    let fisher =
        estimate_fisher_diagonal(&params, &spec, &ds, ds.len(), LabelMode::Exact, 0).unwrap();

    // the synthetic corpus keeps a blank border, so dead pixels exist
    let mut dead = Vec::new();
    for j in 0..784 {
        if ds.inputs().column(j).iter().all(|&v| v == 0.0) {
            dead.push(j);
        }
    }
    assert!(!dead.is_empty(), "corpus has no dead pixels");

    let first = &params.layout().slices()[0];
    let mut nonzero = 0usize;
    for &j in &dead {
        for r in 0..first.rows {
            let idx = first.weights.start + r * first.cols + j;
            if fisher.values()[idx] != 0.0 {
                nonzero += 1;
            }
        }
    }

    // sanity: live pixels must carry Fisher mass somewhere
    let total: f64 = fisher.values()[first.weights.clone()].iter().sum();
    let pass = nonzero == 0 && total > 0.0;
    Outcome {
        number: 10,
        title: "Fisher dead pixels",
        pass,
        detail: format!(
            "{} dead pixels x {} rows, {} nonzero Fisher entries (==0), first-layer Fisher mass {total:.3e}",
            dead.len(),
            first.rows,
            nonzero
        ),
    }
}
