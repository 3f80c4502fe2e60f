//! Loss, SGD training loop, per-epoch reporting, and cross-validated grid
//! search over (hidden size, learning rate).
//!
//! The default update granularity is one update per full pass over the
//! training sequence, with the epoch gradient being the *sum* of per-step
//! gradients (the accumulation of the per-input online updates). Per-step
//! online updates are available behind [`UpdateGranularity::PerStep`].

use std::io::Write;
use std::time::Instant;

use crate::baselines::BaselineModel;
use crate::complexity::CountConvention;
use crate::data::MaskedSequence;
use crate::error::TrainError;
use crate::tree::TreeLstmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum UpdateGranularity {
    PerSequence,
    PerStep,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub q_grid: Vec<usize>,
    pub lr_grid: Vec<f64>,
    pub folds: usize,
    pub bptt_horizon: usize,
    /// Global-norm gradient clip; `None` disables it.
    pub clip_norm: Option<f64>,
    pub granularity: UpdateGranularity,
    /// When false, reported wall times are zero so outputs are byte-stable.
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 100,
            seed: 0,
            q_grid: vec![3, 10],
            lr_grid: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            folds: 5,
            bptt_horizon: 64,
            clip_norm: Some(5.0),
            granularity: UpdateGranularity::PerSequence,
            timing: false,
        }
    }
}

/// Per-update settings handed to a model's epoch routine.
#[derive(Debug, Clone, Copy)]
pub struct SgdSettings {
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub granularity: UpdateGranularity,
    pub convention: CountConvention,
    /// BPTT horizon for models that do not carry one in their own config
    /// (the baselines); the tree uses its `bptt_horizon` field.
    pub bptt_horizon: usize,
}

impl SgdSettings {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        SgdSettings {
            lr: cfg.lr,
            clip_norm: cfg.clip_norm,
            granularity: cfg.granularity,
            convention: CountConvention::ExcludeBias,
            bptt_horizon: cfg.bptt_horizon,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    /// Mean squared error of the pass used for the update.
    pub train_mse: f64,
    pub n_targets: usize,
    pub forward_mults: u64,
    pub clipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub wall_ms: u64,
    /// Cumulative forward multiplications spent on training passes.
    pub mult_count: u64,
}

/// ½(d − d̂)².
pub fn step_loss(d: f64, d_hat: f64) -> f64 {
    0.5 * (d - d_hat) * (d - d_hat)
}

/// Plain mean squared error over (target, prediction) pairs.
pub fn sequence_mse(pairs: &[(f64, f64)]) -> Result<f64, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::NoTargets);
    }
    let sum: f64 = pairs.iter().map(|(d, p)| (d - p) * (d - p)).sum();
    Ok(sum / pairs.len() as f64)
}

/// A model the shared trainer can drive.
pub trait Regressor {
    fn sgd_epoch(&mut self, seq: &MaskedSequence, settings: &SgdSettings) -> Result<EpochStats, TrainError>;

    /// Mean squared error over the defined targets of `seq`.
    fn eval_mse(&self, seq: &MaskedSequence) -> Result<f64, TrainError>;

    /// Smallest fold length this model can train and validate on.
    fn min_fold_len(&self) -> usize;
}

fn check_finite(epoch: usize, what: &str, value: f64) -> Result<(), TrainError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite {
            epoch,
            what: what.to_string(),
        })
    }
}

impl Regressor for TreeLstmModel {
    fn sgd_epoch(&mut self, seq: &MaskedSequence, settings: &SgdSettings) -> Result<EpochStats, TrainError> {
        match settings.granularity {
            UpdateGranularity::PerStep => {
                let (sq_sum, n, counter, clipped) =
                    self.online_epoch(seq, settings.lr, settings.clip_norm, settings.convention)?;
                if n == 0 {
                    return Err(TrainError::NoTargets);
                }
                let train_mse = sq_sum / n as f64;
                check_finite(0, "loss", train_mse)?;
                Ok(EpochStats {
                    train_mse,
                    n_targets: n,
                    forward_mults: counter.cell_mults() + counter.combination_mults(),
                    clipped,
                })
            }
            UpdateGranularity::PerSequence => {
                let run = self.run_sequence(seq, settings.convention)?;
                let mut dpred = vec![0.0; run.outputs().len()];
                let mut sq_sum = 0.0;
                let mut n = 0usize;
                for (i, out) in run.outputs().iter().enumerate() {
                    if let Some(d) = seq.target(out.slot) {
                        dpred[i] = out.d_hat - d;
                        sq_sum += (d - out.d_hat) * (d - out.d_hat);
                        n += 1;
                    }
                }
                if n == 0 {
                    return Err(TrainError::NoTargets);
                }
                let train_mse = sq_sum / n as f64;
                check_finite(0, "loss", train_mse)?;
                let grads = self.backward(&run, &dpred);
                if !grads.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch: 0,
                        what: "gradient".to_string(),
                    });
                }
                let mut scale = 1.0;
                let mut clipped = false;
                if let Some(max) = settings.clip_norm {
                    let norm = grads.norm_sq().sqrt();
                    if norm > max {
                        scale = max / norm;
                        clipped = true;
                        log::debug!("gradient norm {norm:.3} clipped to {max}");
                    }
                }
                self.apply_update(&grads, -settings.lr * scale);
                let counter = run.counter();
                Ok(EpochStats {
                    train_mse,
                    n_targets: n,
                    forward_mults: counter.cell_mults() + counter.combination_mults(),
                    clipped,
                })
            }
        }
    }

    fn eval_mse(&self, seq: &MaskedSequence) -> Result<f64, TrainError> {
        let run = self.run_sequence(seq, CountConvention::ExcludeBias)?;
        let pairs: Vec<(f64, f64)> = run
            .outputs()
            .iter()
            .filter_map(|o| seq.target(o.slot).map(|d| (d, o.d_hat)))
            .collect();
        sequence_mse(&pairs)
    }

    fn min_fold_len(&self) -> usize {
        if self.is_degenerate() {
            2
        } else {
            self.config.window + 2
        }
    }
}

impl Regressor for BaselineModel {
    fn sgd_epoch(&mut self, seq: &MaskedSequence, settings: &SgdSettings) -> Result<EpochStats, TrainError> {
        match settings.granularity {
            UpdateGranularity::PerStep => {
                let (sq_sum, n, counter, clipped) = self.online_epoch(
                    seq,
                    settings.lr,
                    settings.bptt_horizon,
                    settings.clip_norm,
                    settings.convention,
                )?;
                if n == 0 {
                    return Err(TrainError::NoTargets);
                }
                let train_mse = sq_sum / n as f64;
                check_finite(0, "loss", train_mse)?;
                Ok(EpochStats {
                    train_mse,
                    n_targets: n,
                    forward_mults: counter.cell_mults() + counter.combination_mults(),
                    clipped,
                })
            }
            UpdateGranularity::PerSequence => {
                let (run, _) = self.forward_run(seq, settings.convention)?;
                let mut dpred = vec![0.0; run.preds.len()];
                let mut sq_sum = 0.0;
                let mut n = 0usize;
                for (slot, pred) in run.preds.iter().enumerate() {
                    if let Some(d) = seq.target(slot) {
                        dpred[slot] = pred - d;
                        sq_sum += (d - pred) * (d - pred);
                        n += 1;
                    }
                }
                if n == 0 {
                    return Err(TrainError::NoTargets);
                }
                let train_mse = sq_sum / n as f64;
                check_finite(0, "loss", train_mse)?;
                let (cell_grads, head_grads) = self.batch_grads(&run, &dpred, settings.bptt_horizon);
                if !cell_grads.is_finite() || !head_grads.iter().all(|g| g.is_finite()) {
                    return Err(TrainError::NonFinite {
                        epoch: 0,
                        what: "gradient".to_string(),
                    });
                }
                let norm_sq = cell_grads.norm_sq() + head_grads.iter().map(|g| g * g).sum::<f64>();
                let mut scale = 1.0;
                let mut clipped = false;
                if let Some(max) = settings.clip_norm {
                    let norm = norm_sq.sqrt();
                    if norm > max {
                        scale = max / norm;
                        clipped = true;
                        log::debug!("gradient norm {norm:.3} clipped to {max}");
                    }
                }
                let factor = -settings.lr * scale;
                for (t, g) in self.params.tensors_mut().into_iter().zip(cell_grads.tensors()) {
                    for (tv, gv) in t.data_mut().iter_mut().zip(g.data()) {
                        *tv += factor * gv;
                    }
                }
                for (wv, gv) in self.w_hat.iter_mut().zip(&head_grads) {
                    *wv += factor * gv;
                }
                let counter = run.counter;
                Ok(EpochStats {
                    train_mse,
                    n_targets: n,
                    forward_mults: counter.cell_mults() + counter.combination_mults(),
                    clipped,
                })
            }
        }
    }

    fn eval_mse(&self, seq: &MaskedSequence) -> Result<f64, TrainError> {
        let preds = self.predict(seq)?;
        let pairs: Vec<(f64, f64)> = preds
            .iter()
            .enumerate()
            .filter_map(|(slot, p)| seq.target(slot).map(|d| (d, *p)))
            .collect();
        sequence_mse(&pairs)
    }

    fn min_fold_len(&self) -> usize {
        2
    }
}

/// Trains for the configured number of epochs, reporting train/test MSE,
/// wall time (zero unless timing is enabled), and the cumulative forward
/// multiplication count of the training passes.
pub fn train<M: Regressor>(
    model: &mut M,
    train_seq: &MaskedSequence,
    test_seq: &MaskedSequence,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>, TrainError> {
    let settings = SgdSettings::from_config(cfg);
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut cumulative_mults = 0u64;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let stats = model.sgd_epoch(train_seq, &settings).map_err(|e| match e {
            TrainError::NonFinite { what, .. } => TrainError::NonFinite { epoch, what },
            other => other,
        })?;
        let test_mse = model.eval_mse(test_seq)?;
        check_finite(epoch, "test loss", test_mse)?;
        cumulative_mults += stats.forward_mults;
        let wall_ms = if cfg.timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        reports.push(EpochReport {
            epoch,
            train_mse: stats.train_mse,
            test_mse,
            wall_ms,
            mult_count: cumulative_mults,
        });
    }
    Ok(reports)
}

/// Writes the epoch stream as `epoch,train_mse,test_mse,wall_ms,mult_count`.
pub fn write_epoch_csv<W: Write>(reports: &[EpochReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,train_mse,test_mse,wall_ms,mult_count")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_mse, r.test_mse, r.wall_ms, r.mult_count
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub q: usize,
    pub lr: f64,
    pub fold: usize,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_q: usize,
    pub best_lr: f64,
    pub table: Vec<CvRow>,
}

/// Mean validation MSE per grid point; ties break toward smaller q, then
/// larger lr.
pub(crate) fn pick_best(means: &[(usize, f64, f64)]) -> (usize, f64) {
    let mut best: Option<(usize, f64, f64)> = None;
    for &(q, lr, mse) in means {
        let better = match best {
            None => true,
            Some((bq, blr, bmse)) => {
                mse < bmse || (mse == bmse && (q < bq || (q == bq && lr > blr)))
            }
        };
        if better {
            best = Some((q, lr, mse));
        }
    }
    let (q, lr, _) = best.expect("nonempty grid");
    (q, lr)
}

/// Contiguous-block k-fold cross validation over a training sequence.
///
/// Fold k validates on block k and trains on the surrounding blocks, each
/// contiguous run trained as its own subsequence (state resets at the seam,
/// one update per segment per epoch in batch mode).
pub fn cross_validate<M, F>(
    build: F,
    data: &MaskedSequence,
    cfg: &TrainConfig,
) -> Result<CvOutcome, TrainError>
where
    M: Regressor,
    F: Fn(usize, f64, usize) -> M,
{
    if cfg.q_grid.is_empty() || cfg.lr_grid.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    let folds = cfg.folds.max(2);
    let n = data.len();
    let bounds: Vec<usize> = (0..=folds).map(|k| k * n / folds).collect();
    let settings = SgdSettings::from_config(cfg);

    let mut table = Vec::new();
    let mut means = Vec::new();
    for &q in &cfg.q_grid {
        for &lr in &cfg.lr_grid {
            let mut fold_sum = 0.0;
            for fold in 0..folds {
                let mut model = build(q, lr, fold);
                let min_len = model.min_fold_len();
                let (lo, hi) = (bounds[fold], bounds[fold + 1]);
                if hi - lo < min_len {
                    return Err(TrainError::FoldTooShort {
                        fold,
                        len: hi - lo,
                        min: min_len,
                    });
                }
                let val = MaskedSequence::new(data.width(), data.slots()[lo..hi].to_vec());
                let mut segments = Vec::new();
                if lo > 0 {
                    segments.push(MaskedSequence::new(data.width(), data.slots()[..lo].to_vec()));
                }
                if hi < n {
                    segments.push(MaskedSequence::new(data.width(), data.slots()[hi..].to_vec()));
                }
                for seg in &segments {
                    if seg.len() < min_len {
                        return Err(TrainError::FoldTooShort {
                            fold,
                            len: seg.len(),
                            min: min_len,
                        });
                    }
                }
                let mut fold_settings = settings;
                fold_settings.lr = lr;
                for _epoch in 0..cfg.epochs {
                    for seg in &segments {
                        model.sgd_epoch(seg, &fold_settings)?;
                    }
                }
                let val_mse = model.eval_mse(&val)?;
                fold_sum += val_mse;
                table.push(CvRow {
                    q,
                    lr,
                    fold,
                    val_mse,
                });
            }
            means.push((q, lr, fold_sum / folds as f64));
        }
    }
    let (best_q, best_lr) = pick_best(&means);
    log::info!("cross-validation selected q={best_q}, lr={best_lr}");
    Ok(CvOutcome {
        best_q,
        best_lr,
        table,
    })
}
