//! Sequential regression over uniformly gridded data with missing samples.
//!
//! The centerpiece is a tree-structured LSTM regressor: one main LSTM carries
//! the long-range state over the existing inputs before a sliding length-L
//! window, up to 2^L−1 leaf LSTMs each model one presence pattern of the
//! window, and a masked softmax combines the eligible networks into a linear
//! head. Missing inputs are never imputed; they select which experts run.
//!
//! Alongside the tree live the two standard comparison regressors (zero
//! imputation and forward fill with an indicator feature), a deterministic
//! training and cross-validation harness, and an exact multiplication-count
//! cost model with the closed-form bounds to compare against.

// The numeric kernels pair several same-length vectors per statement;
// indexed loops keep those formulas readable.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod cell;
mod chain;
pub mod checkpoint;
pub mod complexity;
pub mod data;
pub mod error;
pub mod numeric;
pub mod presence;
pub mod trainer;
pub mod tree;

pub use baselines::{impute_forward_fill, impute_zero, BaselineKind, BaselineModel};
pub use cell::{cell_backward, cell_forward, head_predict, LstmParams, LstmState, StepTrace};
pub use checkpoint::{load_model, save_model, ModelCheckpoint};
pub use complexity::{crossover_scan, CostModel, CountConvention, CrossoverScan, MultCounter};
pub use data::{
    apply_scaler, fit_scaler, inject_missingness, load_csv, make_next_value_targets, split_60_40,
    synth_sine, write_csv, CsvSchema, LoadedCsv, MaskedSequence, ScalerParams, Slot, TargetScaling,
};
pub use error::{CheckpointError, ConfigError, DataError, TrainError};
pub use numeric::{
    affine, finite_diff_grad, finite_diff_grad_scaled, masked_softmax, sigmoid, Matrix, Rng,
};
pub use presence::{ActiveSet, PresencePattern, MAX_WINDOW};
pub use trainer::{
    cross_validate, sequence_mse, step_loss, train, write_epoch_csv, CvOutcome, CvRow, EpochReport,
    EpochStats, Regressor, SgdSettings, TrainConfig, UpdateGranularity,
};
pub use tree::{
    window_pattern, Combination, CombinationWeights, LeafSeed, LeafSelection, ModelGrads,
    SequenceRun, StepOutput, TreeLstmConfig, TreeLstmModel,
};
