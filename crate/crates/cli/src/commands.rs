//! Command implementations.

use std::fs;
use std::path::Path;

use treelstm_core::{
    apply_scaler, crossover_scan, fit_scaler, inject_missingness, load_csv, load_model,
    make_next_value_targets, save_model, split_60_40, synth_sine, train as train_loop, write_csv,
    write_epoch_csv, BaselineKind, BaselineModel, CostModel, CountConvention, CsvSchema,
    MaskedSequence, ModelCheckpoint, Regressor, ScalerParams, TargetScaling, TreeLstmModel,
    cross_validate,
};

use crate::config::RunConfig;
use crate::{CliError, CvArgs, EvalArgs, MaskArgs, ModelFlags, ProfileArgs, SynthArgs, TrainArgs};

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".to_string()));
    }
    let seq = synth_sine(args.n, args.noise, args.seed)?;
    write_csv(&seq, None, &args.out)?;
    println!("wrote {} slots to {}", seq.len(), args.out.display());
    Ok(())
}

pub fn mask(args: MaskArgs) -> Result<(), CliError> {
    let loaded = load_csv(&args.data, &CsvSchema::default())?;
    let masked = inject_missingness(&loaded.sequence, args.ratio, args.seed)?;
    write_csv(&masked, loaded.header.as_deref(), &args.out)?;
    println!(
        "masked {} of {} slots ({})",
        masked.n_missing(),
        masked.len(),
        args.out.display()
    );
    Ok(())
}

/// Overlays command-line flags onto the config-file values.
fn merge_flags(flags: &ModelFlags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &flags.data {
        cfg.data = Some(v.display().to_string());
    }
    if let Some(v) = &flags.arch {
        cfg.arch = v.clone();
    }
    if let Some(v) = flags.window {
        cfg.window = v;
    }
    if let Some(v) = flags.q {
        cfg.hidden = v;
    }
    if let Some(v) = flags.lr {
        cfg.lr = v;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.ratio {
        cfg.ratio = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.bptt {
        cfg.bptt = v;
    }
    if let Some(v) = &flags.leaf_set {
        cfg.leaf_set = Some(if v.trim() == "none" || v.trim().is_empty() {
            Vec::new()
        } else {
            v.split(',').map(|s| s.trim().to_string()).collect()
        });
    }
    if flags.shared_wtilde {
        cfg.shared_wtilde = true;
    }
    if flags.per_step {
        cfg.per_step = true;
    }
    if let Some(v) = flags.clip {
        cfg.clip = if v > 0.0 { Some(v) } else { None };
    }
    if flags.no_scale {
        cfg.scale = false;
    }
    if flags.timing {
        cfg.timing = true;
    }
    if let Some(v) = flags.target_col {
        cfg.target_col = Some(v);
    }
    if let Some(v) = flags.init_variance {
        cfg.init_variance = v;
    }
    if flags.leaf_seed_previous {
        cfg.leaf_seed_previous = true;
    }
    if !["tree", "zi", "fi"].contains(&cfg.arch.as_str()) {
        return Err(CliError::Usage(format!(
            "unknown architecture {:?} (expected tree, zi, or fi)",
            cfg.arch
        )));
    }
    Ok(cfg)
}

struct Prepared {
    train: MaskedSequence,
    test: MaskedSequence,
    scaler: Option<ScalerParams>,
}

/// load → inject → targets → split → scale, in that order. The mask is drawn
/// before splitting, on the whole sequence; the scaler is fitted on the
/// training split only.
fn prepare(
    data: &Path,
    ratio: f64,
    seed: u64,
    target_col: Option<usize>,
    scale: bool,
    scaler_override: Option<&ScalerParams>,
) -> Result<Prepared, CliError> {
    let schema = CsvSchema {
        feature_cols: None,
        target_col,
    };
    let loaded = load_csv(data, &schema)?;
    let mut seq = loaded.sequence;
    if ratio > 0.0 {
        seq = inject_missingness(&seq, ratio, seed)?;
    }
    let mode = if target_col.is_none() {
        seq = make_next_value_targets(&seq);
        TargetScaling::NextValue
    } else {
        TargetScaling::Independent
    };
    let (train, test) = split_60_40(&seq)?;
    if let Some(s) = scaler_override {
        if s.features.len() != train.width() {
            return Err(CliError::Data(format!(
                "checkpoint scaler expects {} features, data has {}",
                s.features.len(),
                train.width()
            )));
        }
        return Ok(Prepared {
            train: apply_scaler(&train, s),
            test: apply_scaler(&test, s),
            scaler: Some(s.clone()),
        });
    }
    if !scale {
        return Ok(Prepared {
            train,
            test,
            scaler: None,
        });
    }
    let scaler = fit_scaler(&train, mode)?;
    Ok(Prepared {
        train: apply_scaler(&train, &scaler),
        test: apply_scaler(&test, &scaler),
        scaler: Some(scaler),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = merge_flags(&args.model)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| CliError::Usage("--data is required".to_string()))?;
    ensure_dir(&args.out)?;
    let prepared = prepare(
        Path::new(&data),
        cfg.ratio,
        cfg.seed,
        cfg.target_col,
        cfg.scale,
        None,
    )?;
    let train_cfg = cfg.train_config();
    let width = prepared.train.width();

    let (reports, checkpoint) = match cfg.arch.as_str() {
        "tree" => {
            let tree_cfg = cfg.tree_config(width)?;
            let mut model = TreeLstmModel::init(tree_cfg, cfg.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let reports = train_loop(&mut model, &prepared.train, &prepared.test, &train_cfg)?;
            (reports, ModelCheckpoint::Tree(model))
        }
        arch => {
            let kind = if arch == "zi" { BaselineKind::Zi } else { BaselineKind::Fi };
            let mut model = BaselineModel::init(kind, cfg.hidden, width, cfg.init_variance, cfg.seed);
            let reports = train_loop(&mut model, &prepared.train, &prepared.test, &train_cfg)?;
            (reports, ModelCheckpoint::Baseline(model))
        }
    };

    save_model(
        &args.out.join("model.ckpt"),
        &checkpoint,
        prepared.scaler.as_ref(),
        cfg.seed,
    )?;
    let mut csv = Vec::new();
    write_epoch_csv(&reports, &mut csv).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&args.out.join("epochs.csv"), &csv)?;
    cfg.echo_to(&args.out)?;
    if let Some(last) = reports.last() {
        println!(
            "epoch {}: train_mse={} test_mse={}",
            last.epoch, last.train_mse, last.test_mse
        );
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let (model, scaler) = load_model(&args.model)?;
    let prepared = prepare(
        &args.data,
        args.ratio.unwrap_or(0.0),
        args.seed.unwrap_or(0),
        args.target_col,
        scaler.is_some(),
        scaler.as_ref(),
    )?;
    let test = &prepared.test;
    let (mse, rows) = match &model {
        ModelCheckpoint::Tree(t) => {
            let mse = t.eval_mse(test)?;
            let rows: Vec<(usize, Option<f64>, f64)> = t
                .predict(test)?
                .into_iter()
                .map(|o| (o.slot + 1, test.target(o.slot), o.d_hat))
                .collect();
            (mse, rows)
        }
        ModelCheckpoint::Baseline(b) => {
            let mse = b.eval_mse(test)?;
            let rows: Vec<(usize, Option<f64>, f64)> = b
                .predict(test)?
                .into_iter()
                .enumerate()
                .map(|(slot, p)| (slot + 1, test.target(slot), p))
                .collect();
            (mse, rows)
        }
    };
    println!(
        "{}",
        serde_json::json!({
            "kind": model.kind(),
            "test_mse": mse,
            "n_steps": rows.len(),
        })
    );
    if args.dump_predictions {
        let out = args
            .out
            .as_ref()
            .ok_or_else(|| CliError::Usage("--dump-predictions needs --out".to_string()))?;
        ensure_dir(out)?;
        let mut buf = String::from("step,target,prediction\n");
        for (step, target, pred) in rows {
            let t = target.map(|d| d.to_string()).unwrap_or_default();
            buf.push_str(&format!("{step},{t},{pred}\n"));
        }
        write_file(&out.join("predictions.csv"), buf.as_bytes())?;
    }
    Ok(())
}

pub fn cv(args: CvArgs) -> Result<(), CliError> {
    let mut cfg = merge_flags(&args.model)?;
    if let Some(qs) = &args.q_grid {
        cfg.q_grid = qs
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("--q-grid: {e}")))?;
    }
    if let Some(ls) = &args.lr_grid {
        cfg.lr_grid = ls
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("--lr-grid: {e}")))?;
    }
    if let Some(f) = args.folds {
        cfg.folds = f;
    }
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| CliError::Usage("--data is required".to_string()))?;
    ensure_dir(&args.out)?;
    let prepared = prepare(
        Path::new(&data),
        cfg.ratio,
        cfg.seed,
        cfg.target_col,
        cfg.scale,
        None,
    )?;
    let train_cfg = cfg.train_config();
    let width = prepared.train.width();
    let seed = cfg.seed;

    // Grid points and folds each get an independent, deterministic model.
    let fold_seed = |q: usize, fold: usize| seed ^ ((q as u64) << 32) ^ (fold as u64 + 1);
    let outcome = match cfg.arch.as_str() {
        "tree" => {
            let base = cfg.tree_config(width)?;
            cross_validate(
                |q, _lr, fold| {
                    let mut c = base.clone();
                    c.hidden = q;
                    TreeLstmModel::init(c, fold_seed(q, fold)).expect("validated config")
                },
                &prepared.train,
                &train_cfg,
            )?
        }
        arch => {
            let kind = if arch == "zi" { BaselineKind::Zi } else { BaselineKind::Fi };
            let variance = cfg.init_variance;
            cross_validate(
                |q, _lr, fold| BaselineModel::init(kind, q, width, variance, fold_seed(q, fold)),
                &prepared.train,
                &train_cfg,
            )?
        }
    };

    let mut buf = String::from("q,lr,fold,val_mse\n");
    for row in &outcome.table {
        buf.push_str(&format!("{},{},{},{}\n", row.q, row.lr, row.fold, row.val_mse));
    }
    write_file(&args.out.join("cv.csv"), buf.as_bytes())?;
    cfg.echo_to(&args.out)?;
    println!(
        "{}",
        serde_json::json!({ "best_q": outcome.best_q, "best_lr": outcome.best_lr })
    );
    Ok(())
}

fn profile_row(
    buf: &mut String,
    arch: &str,
    cm: &CostModel,
    measured: Option<(u64, u64)>,
) {
    let (min, max) = match arch {
        "zi" => (cm.zi_cost() as f64, cm.zi_cost() as f64),
        "fi" => (cm.fi_cost() as f64, cm.fi_cost() as f64),
        _ => (cm.tree_min_cost(), cm.tree_max_cost()),
    };
    let (cells, comb) = match measured {
        Some((c, k)) => (c.to_string(), k.to_string()),
        None => (String::new(), String::new()),
    };
    buf.push_str(&format!(
        "{arch},{},{},{},{},{},{},{cells},{comb},{min},{max}\n",
        cm.n,
        cm.missing,
        cm.ratio(),
        cm.l,
        cm.q,
        cm.m,
    ));
}

pub fn profile(args: ProfileArgs) -> Result<(), CliError> {
    if !args.scan && !args.measure {
        return Err(CliError::Usage("profile needs --scan and/or --measure".to_string()));
    }
    ensure_dir(&args.out)?;
    let mut buf = String::from(
        "arch,N,M,r,L,q,m,measured_cells,measured_combination,formula_min,formula_max\n",
    );

    if args.scan {
        let scan = crossover_scan(args.q, args.m, args.window, args.n, args.r_step);
        for row in &scan.rows {
            let missing = (row.r * args.n as f64).round() as usize;
            let cm = CostModel::new(args.n, missing.min(args.n), args.q, args.m, args.window);
            profile_row(&mut buf, "tree", &cm, None);
            profile_row(&mut buf, "zi", &cm, None);
            profile_row(&mut buf, "fi", &cm, None);
        }
        match scan.crossover_r {
            Some(r) => println!(
                "{}",
                serde_json::json!({ "L": args.window, "crossover_r": r })
            ),
            None => println!("{}", serde_json::json!({ "L": args.window, "crossover_r": null })),
        }
    }

    if args.measure {
        let arch = args.arch.as_deref().unwrap_or("tree");
        let seq = match &args.data {
            Some(path) => load_csv(path, &CsvSchema::default())?.sequence,
            None => {
                let base = synth_sine(args.n, 0.05, args.seed)?;
                match args.ratio {
                    Some(r) if r > 0.0 => inject_missingness(&base, r, args.seed)?,
                    _ => base,
                }
            }
        };
        let cm = CostModel::new(seq.len(), seq.n_missing(), args.q, seq.width(), args.window);
        let measured = match arch {
            "zi" | "fi" => {
                let kind = if arch == "zi" { BaselineKind::Zi } else { BaselineKind::Fi };
                let model = BaselineModel::init(kind, args.q, seq.width(), 1e-2, args.seed);
                let counter = model.measure(&seq, CountConvention::ExcludeBias)?;
                (counter.cell_mults(), counter.combination_mults())
            }
            "tree" => {
                let cfg = RunConfig {
                    window: args.window,
                    hidden: args.q,
                    ..RunConfig::default()
                };
                let model = TreeLstmModel::init(cfg.tree_config(seq.width())?, args.seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                let run = model.run_sequence(&seq, CountConvention::ExcludeBias)?;
                (run.counter().cell_mults(), run.counter().combination_mults())
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown architecture {other:?} (expected tree, zi, or fi)"
                )))
            }
        };
        profile_row(&mut buf, arch, &cm, Some(measured));
        println!(
            "{}",
            serde_json::json!({
                "arch": arch,
                "measured_cells": measured.0,
                "formula_min": match arch { "zi" => cm.zi_cost() as f64, "fi" => cm.fi_cost() as f64, _ => cm.tree_min_cost() },
                "formula_max": match arch { "zi" => cm.zi_cost() as f64, "fi" => cm.fi_cost() as f64, _ => cm.tree_max_cost() },
            })
        );
    }

    write_file(&args.out.join("profile.csv"), buf.as_bytes())?;
    Ok(())
}
