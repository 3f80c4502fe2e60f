//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. Run with
//!
//!     cargo test -p treelstm-cli --test acceptance -- --nocapture
//!
//! Criteria 1–7, 9, 10 drive the library; criterion 8 drives the built
//! binary end to end.

use std::process::Command;
use std::time::Instant;

use treelstm_core::*;

fn pass(criterion: usize, name: &str, detail: &str) {
    println!("ACCEPTANCE {criterion:>2} ({name}): PASS — {detail}");
}

/// Criterion 1: exhaustive pattern algebra for L in 1..=6, under a second.
#[test]
fn acceptance_01_pattern_algebra() {
    let start = Instant::now();
    let mut patterns = 0usize;
    for l in 1..=6usize {
        for i in 0..(1usize << l) {
            let p = PresencePattern::from_index(i, l);
            let fast = p.active_set();
            let brute: Vec<usize> = (0..(1usize << l)).filter(|&s| s & i == s).collect();
            assert_eq!(fast.indices(), &brute[..], "L={l}, pattern {i}");
            assert_eq!(fast.len(), 1 << p.ones(), "cardinality law at L={l}, pattern {i}");
            assert!(fast.contains(0));
            patterns += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(1, "pattern algebra", &format!("{patterns} patterns, {elapsed:?}"));
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Criterion 2: every tree parameter gradient matches central finite
/// differences within 1e-5 relative error, 10 seeds, under 30 s.
#[test]
fn acceptance_02_gradient_correctness() {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut config = TreeLstmConfig::new(2, 3, 2);
        config.bptt_horizon = usize::MAX; // full BPTT
        config.init_variance = 1e-1;
        let model = TreeLstmModel::init(config, seed).unwrap();

        let mut rng = Rng::new(1000 + seed);
        let inputs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..2).map(|_| rng.gaussian(1.0)).collect())
            .collect();
        let seq = MaskedSequence::from_inputs(inputs);
        let seq = inject_missingness(&seq, 0.3, 2000 + seed).unwrap();
        let seq = make_next_value_targets(&seq);

        let run = model.run_sequence(&seq, CountConvention::ExcludeBias).unwrap();
        let dpred: Vec<f64> = run
            .outputs()
            .iter()
            .map(|o| seq.target(o.slot).map_or(0.0, |d| o.d_hat - d))
            .collect();
        let grads = model.backward(&run, &dpred);
        let analytic = flatten_grads(&grads);

        let theta = flatten_model(&model);
        let loss = |t: &[f64]| -> f64 {
            let probe = unflatten_model(&model, t);
            let run = probe.run_sequence(&seq, CountConvention::ExcludeBias).unwrap();
            run.outputs()
                .iter()
                .filter_map(|o| seq.target(o.slot).map(|d| step_loss(d, o.d_hat)))
                .sum()
        };
        let numeric = finite_diff_grad_scaled(loss, &theta, 1e-5);
        assert_eq!(analytic.len(), numeric.len());
        for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = relative_error(*a, *n);
            worst = worst.max(rel);
            assert!(rel < 1e-5, "seed {seed} param {j}: analytic {a}, numeric {n}, rel {rel}");
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(
        2,
        "gradient correctness",
        &format!("{checked} parameter gradients, worst rel err {worst:.2e}, {elapsed:?}"),
    );
}

/// Criterion 3: combination weights sum to one over the active set within
/// 1e-12, are exactly zero off it, and inactive combination weights receive
/// exactly zero gradient.
#[test]
fn acceptance_03_combination_contract() {
    let mut steps_seen = 0usize;
    for seed in 0..25u64 {
        let l = 2 + (seed % 3) as usize; // L ∈ {2,3,4}
        let mut config = TreeLstmConfig::new(l, 4, 1);
        config.init_variance = 1e-1;
        let model = TreeLstmModel::init(config, seed).unwrap();
        let seq = synth_sine(60, 0.1, seed).unwrap();
        let seq = inject_missingness(&seq, 0.1 + 0.08 * (seed % 10) as f64, 77 + seed).unwrap();
        let seq = make_next_value_targets(&seq);
        let run = model.run_sequence(&seq, CountConvention::ExcludeBias).unwrap();
        for out in run.outputs() {
            let active = out.pattern.active_set();
            let sum: f64 = active.iter().map(|i| out.alpha[i]).sum();
            assert!((sum - 1.0).abs() <= 1e-12, "Σα = {sum}");
            for i in 0..out.alpha.len() {
                if !active.contains(i) {
                    assert_eq!(out.alpha[i], 0.0, "α[{i}] not exactly zero");
                }
            }
            steps_seen += 1;
        }
        // Gradient side: a network that never activates gets exact zeros.
        let dpred: Vec<f64> = run
            .outputs()
            .iter()
            .map(|o| seq.target(o.slot).map_or(0.0, |d| o.d_hat - d))
            .collect();
        let grads = model.backward(&run, &dpred);
        let mut ever_active = vec![false; 1 << l];
        for out in run.outputs() {
            for i in out.pattern.active_set().iter() {
                ever_active[i] = true;
            }
        }
        for (net, active) in ever_active.iter().enumerate().skip(1) {
            if !active {
                assert!(
                    grads.w_tilde_grad(net).iter().all(|&g| g == 0.0),
                    "inactive network {net} has nonzero combination gradient"
                );
            }
        }
    }
    assert!(steps_seen >= 1000, "only {steps_seen} steps exercised");
    pass(3, "combination contract", &format!("{steps_seen} steps checked"));
}

/// Criterion 4: the main network's (c, h) trajectory is bit-identical to a
/// standalone cell chain over the existing-input subsequence, 100 layouts.
#[test]
fn acceptance_04_main_network_purity() {
    for seed in 0..100u64 {
        let l = 1 + (seed % 4) as usize;
        let model = TreeLstmModel::init(TreeLstmConfig::new(l, 4, 1), seed).unwrap();
        let ratio = 0.05 + 0.009 * (seed as f64);
        let seq = synth_sine(200, 0.05, seed).unwrap();
        let seq = inject_missingness(&seq, ratio.min(0.95), 31 * seed + 7).unwrap();
        let run = model.run_sequence(&seq, CountConvention::ExcludeBias).unwrap();

        let mut state = LstmState::zeros(4);
        let mut standalone = Vec::new();
        for slot in seq.slots() {
            if let Some(x) = &slot.input {
                let (next, _) = cell_forward(&model.main, x, &state);
                state = next;
                standalone.push(state.clone());
            }
        }
        let traced = run.main_states();
        assert_eq!(traced.len(), standalone.len(), "seed {seed}: call count");
        for (a, b) in traced.iter().zip(&standalone) {
            for j in 0..4 {
                assert_eq!(a.h[j].to_bits(), b.h[j].to_bits(), "seed {seed}: h differs");
                assert_eq!(a.c[j].to_bits(), b.c[j].to_bits(), "seed {seed}: c differs");
            }
        }
    }
    pass(4, "main-network purity", "100 layouts bit-identical");
}

/// Criterion 5: baseline tallies equal the closed forms exactly; the tree
/// tally equals the worst-case form under a contiguous missing prefix and
/// stays inside [min, max] for uniform layouts across the (r, L) grid.
#[test]
fn acceptance_05_cost_model_equality() {
    // Baselines: exact equality up to N = 10^4.
    for n in [1usize, 7, 100, 10_000] {
        let seq = synth_sine(n, 0.0, 3).unwrap();
        let seq = if n >= 10 {
            inject_missingness(&seq, 0.4, 11).unwrap()
        } else {
            seq
        };
        for (kind, q) in [(BaselineKind::Zi, 10usize), (BaselineKind::Fi, 10)] {
            let model = BaselineModel::init(kind, q, 1, 1e-2, 5);
            let counter = model.measure(&seq, CountConvention::ExcludeBias).unwrap();
            let cm = CostModel::new(n, seq.n_missing(), q, 1, 1);
            let expected = match kind {
                BaselineKind::Zi => cm.zi_cost(),
                BaselineKind::Fi => cm.fi_cost(),
            };
            assert_eq!(counter.cell_mults(), expected, "{kind:?} at N={n}");
        }
    }

    // Tree, contiguous missing prefix at L=1: exact equality with the
    // worst-case closed form (at L ≥ 2 the form overshoots by a fixed
    // boundary term; the unit tests pin that term exactly).
    let n = 500usize;
    let missing = 150usize;
    let slots: Vec<Slot> = (0..n)
        .map(|i| Slot {
            input: if i < missing { None } else { Some(vec![i as f64 * 0.01]) },
            target: None,
        })
        .collect();
    let seq = MaskedSequence::new(1, slots);
    let model = TreeLstmModel::init(TreeLstmConfig::new(1, 4, 1), 3).unwrap();
    let run = model.run_sequence(&seq, CountConvention::ExcludeBias).unwrap();
    let cm = CostModel::new(n, missing, 4, 1, 1);
    assert_eq!(run.counter().cell_mults() as f64, cm.tree_max_cost());

    // Band check: 100 uniform layouts per (r, L) grid point.
    let n = 2000usize;
    let q = 3usize;
    let mut runs = 0usize;
    for l in [2usize, 3, 4] {
        let model = TreeLstmModel::init(TreeLstmConfig::new(l, q, 1), 7).unwrap();
        let base = synth_sine(n, 0.0, 3).unwrap();
        for ri in 1..=9usize {
            let r = ri as f64 / 10.0;
            let cm = CostModel::new(n, (r * n as f64).round() as usize, q, 1, l);
            for seed in 0..100u64 {
                let seq = inject_missingness(&base, r, seed * 131 + ri as u64).unwrap();
                let run = model.run_sequence(&seq, CountConvention::ExcludeBias).unwrap();
                let measured = run.counter().cell_mults() as f64;
                assert!(
                    measured >= cm.tree_min_cost() && measured <= cm.tree_max_cost(),
                    "L={l} r={r} seed={seed}: {measured} outside [{}, {}]",
                    cm.tree_min_cost(),
                    cm.tree_max_cost()
                );
                runs += 1;
            }
        }
    }
    pass(
        5,
        "cost-model equality",
        &format!("baselines exact; prefix-block equality; {runs} layouts in band"),
    );
}

/// Criterion 6: the cost crossover lands at 0.50/0.60/0.65 (±0.025) for
/// L = 2/3/4.
#[test]
fn acceptance_06_crossover() {
    let mut found = Vec::new();
    for (l, expected) in [(2usize, 0.50f64), (3, 0.60), (4, 0.65)] {
        let scan = crossover_scan(10, 1, l, 1000, 0.05);
        let r = scan.crossover_r.expect("crossover exists");
        assert!(
            (r - expected).abs() <= 0.025 + 1e-12,
            "L={l}: crossover at {r}, expected {expected} ± 0.025"
        );
        found.push(format!("L={l}: r={r}"));
    }
    pass(6, "crossover", &found.join(", "));
}

fn benchmark_pipeline(r: f64, mask_seed: u64) -> (MaskedSequence, MaskedSequence) {
    let seq = synth_sine(2000, 0.05, 1234).unwrap();
    let seq = inject_missingness(&seq, r, mask_seed).unwrap();
    let seq = make_next_value_targets(&seq);
    split_60_40(&seq).unwrap()
}

fn benchmark_train_config() -> TrainConfig {
    // Online (per-input) SGD, the training regime the comparison method
    // family actually uses; a 16-step horizon is ample for a period-40 sine.
    TrainConfig {
        lr: 1e-3,
        epochs: 200,
        bptt_horizon: 16,
        granularity: UpdateGranularity::PerStep,
        ..TrainConfig::default()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Criterion 7: on the noisy sine at q=8, lr=1e-3, 200 epochs, 5 seeds, the
/// tree's median final test MSE beats both baselines at r ∈ {0.3, 0.7} and
/// is at least 5% lower at r = 0.7. Whole benchmark under 10 minutes.
#[test]
fn acceptance_07_directional_benchmark() {
    let start = Instant::now();
    let cfg = benchmark_train_config();
    let mut summary = Vec::new();
    for r in [0.3f64, 0.7] {
        let mut tree_mse = Vec::new();
        let mut zi_mse = Vec::new();
        let mut fi_mse = Vec::new();
        for seed in 0..5u64 {
            let (tr, te) = benchmark_pipeline(r, 9000 + seed);
            let mut tree_cfg = TreeLstmConfig::new(2, 8, 1);
            tree_cfg.bptt_horizon = cfg.bptt_horizon;
            let mut tree = TreeLstmModel::init(tree_cfg, seed).unwrap();
            tree_mse.push(train(&mut tree, &tr, &te, &cfg).unwrap().last().unwrap().test_mse);
            let mut zi = BaselineModel::init(BaselineKind::Zi, 8, 1, 1e-2, seed);
            zi_mse.push(train(&mut zi, &tr, &te, &cfg).unwrap().last().unwrap().test_mse);
            let mut fi = BaselineModel::init(BaselineKind::Fi, 8, 1, 1e-2, seed);
            fi_mse.push(train(&mut fi, &tr, &te, &cfg).unwrap().last().unwrap().test_mse);
        }
        let (t, z, f) = (median(&mut tree_mse), median(&mut zi_mse), median(&mut fi_mse));
        assert!(t <= z, "r={r}: tree median {t} worse than zero-imputation {z}");
        assert!(t <= f, "r={r}: tree median {t} worse than forward-fill {f}");
        if r == 0.7 {
            assert!(t <= 0.95 * z, "r=0.7: tree {t} not ≥5% under zi {z}");
            assert!(t <= 0.95 * f, "r=0.7: tree {t} not ≥5% under fi {f}");
        }
        summary.push(format!("r={r}: tree={t:.4} zi={z:.4} fi={f:.4}"));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    pass(
        7,
        "directional benchmark",
        &format!("{} ({elapsed:?})", summary.join("; ")),
    );
}

/// Criterion 8: a train run repeated with identical flags produces
/// byte-identical model.ckpt and epochs.csv.
#[test]
fn acceptance_08_determinism() {
    let bin = env!("CARGO_BIN_EXE_treelstm");
    let dir = std::env::temp_dir().join(format!("tl-acc8-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.join("data.csv");
    let run_cli = |cli_args: &[&str]| {
        let status = Command::new(bin)
            .args(cli_args)
            .status()
            .expect("binary runs");
        assert!(status.success(), "command failed: {cli_args:?}");
    };
    run_cli(&["synth", "--n", "300", "--noise", "0.05", "--seed", "4", "--out", data.to_str().unwrap()]);
    let train_args = |out: &std::path::Path| -> Vec<String> {
        [
            "train", "--data", data.to_str().unwrap(), "--arch", "tree", "-L", "2", "--q", "4",
            "--lr", "1e-3", "--epochs", "5", "--ratio", "0.3", "--seed", "9",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain(["--out".to_string(), out.display().to_string()])
        .collect()
    };
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let args = train_args(out);
        let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        run_cli(&args);
    }
    for file in ["model.ckpt", "epochs.csv", "config.json"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    // Same flags on a fresh synth of the same seed: still identical bytes.
    let data2 = dir.join("data2.csv");
    run_cli(&["synth", "--n", "300", "--noise", "0.05", "--seed", "4", "--out", data2.to_str().unwrap()]);
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(&data2).unwrap());
    std::fs::remove_dir_all(&dir).ok();
    pass(8, "determinism", "model.ckpt, epochs.csv, config.json byte-identical");
}

/// Criterion 9: on complete data a tree with no leaves trains exactly like
/// the zero-imputation baseline (same starting weights), epoch by epoch.
#[test]
fn acceptance_09_degeneracy() {
    let seq = synth_sine(300, 0.05, 77).unwrap();
    let seq = make_next_value_targets(&seq);
    let (tr, te) = split_60_40(&seq).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        epochs: 30,
        bptt_horizon: 16,
        ..TrainConfig::default()
    };
    let mut zi = BaselineModel::init(BaselineKind::Zi, 5, 1, 1e-2, 11);
    let mut tree_cfg = TreeLstmConfig::new(2, 5, 1);
    tree_cfg.leaf_selection = LeafSelection::Explicit(vec![]);
    tree_cfg.bptt_horizon = cfg.bptt_horizon;
    let mut tree = TreeLstmModel::init(tree_cfg, 999).unwrap();
    tree.main = zi.params.clone();
    tree.w_hat = zi.w_hat.clone();

    let rz = train(&mut zi, &tr, &te, &cfg).unwrap();
    let rt = train(&mut tree, &tr, &te, &cfg).unwrap();
    let mut max_diff = 0.0f64;
    for (a, b) in rz.iter().zip(&rt) {
        max_diff = max_diff
            .max((a.train_mse - b.train_mse).abs())
            .max((a.test_mse - b.test_mse).abs());
    }
    assert!(max_diff <= 1e-12, "per-epoch divergence {max_diff}");
    pass(9, "degeneracy", &format!("30 epochs, max per-epoch MSE diff {max_diff:e}"));
}

/// Criterion 10: window lengths 1..4 on the r=0.3 benchmark all converge;
/// the per-L table is reported, not ranked (which L wins is data-dependent).
#[test]
fn acceptance_10_capacity_sweep() {
    let cfg = benchmark_train_config();
    let (tr, te) = benchmark_pipeline(0.3, 9000);
    let mut table = Vec::new();
    for l in [1usize, 2, 3, 4] {
        let mut tree_cfg = TreeLstmConfig::new(l, 8, 1);
        tree_cfg.bptt_horizon = cfg.bptt_horizon;
        let mut tree = TreeLstmModel::init(tree_cfg, 42).unwrap();
        let initial = tree.eval_mse(&te).unwrap();
        let reports = train(&mut tree, &tr, &te, &cfg).unwrap();
        let final_mse = reports.last().unwrap().test_mse;
        assert!(
            final_mse < initial,
            "L={l} did not converge: initial {initial}, final {final_mse}"
        );
        table.push(format!("L={l}: {initial:.4} → {final_mse:.4}"));
    }
    pass(10, "capacity sweep", &table.join("; "));
}

// --- helpers for flattening a tree model to a parameter vector ------------

fn flatten_model(model: &TreeLstmModel) -> Vec<f64> {
    let mut theta = Vec::new();
    for t in model.main.tensors() {
        theta.extend_from_slice(t.data());
    }
    for leaf in model.leaves.values() {
        for t in leaf.tensors() {
            theta.extend_from_slice(t.data());
        }
    }
    match &model.w_tilde {
        CombinationWeights::PerNetwork(map) => {
            for w in map.values() {
                theta.extend_from_slice(w);
            }
        }
        CombinationWeights::Shared(w) => theta.extend_from_slice(w),
    }
    theta.extend_from_slice(&model.w_hat);
    theta
}

fn unflatten_model(template: &TreeLstmModel, theta: &[f64]) -> TreeLstmModel {
    let mut model = template.clone();
    let mut at = 0;
    for t in model.main.tensors_mut() {
        let n = t.data().len();
        t.data_mut().copy_from_slice(&theta[at..at + n]);
        at += n;
    }
    for leaf in model.leaves.values_mut() {
        for t in leaf.tensors_mut() {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&theta[at..at + n]);
            at += n;
        }
    }
    match &mut model.w_tilde {
        CombinationWeights::PerNetwork(map) => {
            for w in map.values_mut() {
                let n = w.len();
                w.copy_from_slice(&theta[at..at + n]);
                at += n;
            }
        }
        CombinationWeights::Shared(w) => {
            let n = w.len();
            w.copy_from_slice(&theta[at..at + n]);
            at += n;
        }
    }
    let n = model.w_hat.len();
    model.w_hat.copy_from_slice(&theta[at..at + n]);
    model
}

fn flatten_grads(grads: &ModelGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for t in grads.main.tensors() {
        out.extend_from_slice(t.data());
    }
    for leaf in grads.leaves.values() {
        for t in leaf.tensors() {
            out.extend_from_slice(t.data());
        }
    }
    match &grads.w_tilde {
        CombinationWeights::PerNetwork(map) => {
            for w in map.values() {
                out.extend_from_slice(w);
            }
        }
        CombinationWeights::Shared(w) => out.extend_from_slice(w),
    }
    out.extend_from_slice(&grads.w_hat);
    out
}
