//! Shared fixtures for the criterion benchmarks.

use treelstm_core::{
    inject_missingness, make_next_value_targets, synth_sine, MaskedSequence, TreeLstmConfig,
    TreeLstmModel,
};

/// Masked noisy sine with next-value targets.
pub fn masked_sequence(n: usize, ratio: f64, seed: u64) -> MaskedSequence {
    let seq = synth_sine(n, 0.05, seed).expect("valid synth parameters");
    let seq = inject_missingness(&seq, ratio, seed ^ 0xBEEF).expect("valid ratio");
    make_next_value_targets(&seq)
}

pub fn tree_model(window: usize, hidden: usize, seed: u64) -> TreeLstmModel {
    TreeLstmModel::init(TreeLstmConfig::new(window, hidden, 1), seed).expect("valid config")
}
