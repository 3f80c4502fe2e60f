//! Run configuration: built-in defaults, overridden by a JSON config file,
//! overridden by command-line flags. The merged result is echoed verbatim
//! into the output directory as config.json.

use std::path::Path;

use serde::{Deserialize, Serialize};
use treelstm_core::{
    Combination, LeafSeed, LeafSelection, PresencePattern, TrainConfig, TreeLstmConfig,
    UpdateGranularity,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<String>,
    pub arch: String,
    pub window: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub ratio: f64,
    pub seed: u64,
    pub bptt: usize,
    /// Leaf patterns as '0'/'1' strings; absent means all 2^L−1 leaves,
    /// an empty list means main network only.
    pub leaf_set: Option<Vec<String>>,
    pub shared_wtilde: bool,
    pub per_step: bool,
    pub clip: Option<f64>,
    pub scale: bool,
    pub timing: bool,
    pub target_col: Option<usize>,
    pub init_variance: f64,
    /// Seed the leaves from the main state before the window-edge input
    /// instead of after it.
    pub leaf_seed_previous: bool,
    pub q_grid: Vec<usize>,
    pub lr_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            arch: "tree".to_string(),
            window: 2,
            hidden: 8,
            lr: 1e-3,
            epochs: 100,
            ratio: 0.0,
            seed: 0,
            bptt: 64,
            leaf_set: None,
            shared_wtilde: false,
            per_step: false,
            clip: Some(5.0),
            scale: true,
            timing: false,
            target_col: None,
            init_variance: 1e-2,
            leaf_seed_previous: false,
            q_grid: vec![3, 5, 8, 10],
            lr_grid: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            folds: 5,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn tree_config(&self, input_width: usize) -> Result<TreeLstmConfig, CliError> {
        let leaf_selection = match &self.leaf_set {
            None => LeafSelection::Full,
            Some(patterns) => {
                let mut indices = Vec::with_capacity(patterns.len());
                for p in patterns {
                    let pat: PresencePattern = p
                        .parse()
                        .map_err(|e| CliError::Usage(format!("--leaf-set: {e}")))?;
                    if pat.len() != self.window {
                        return Err(CliError::Usage(format!(
                            "--leaf-set pattern {p:?} has length {}, window is {}",
                            pat.len(),
                            self.window
                        )));
                    }
                    indices.push(pat.index());
                }
                LeafSelection::Explicit(indices)
            }
        };
        let config = TreeLstmConfig {
            window: self.window,
            hidden: self.hidden,
            input: input_width,
            leaf_selection,
            combination: if self.shared_wtilde {
                Combination::Shared
            } else {
                Combination::PerNetwork
            },
            bptt_horizon: self.bptt,
            leaf_seed: if self.leaf_seed_previous {
                LeafSeed::PreWindowEdge
            } else {
                LeafSeed::WindowEdge
            },
            init_variance: self.init_variance,
        };
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            q_grid: self.q_grid.clone(),
            lr_grid: self.lr_grid.clone(),
            folds: self.folds,
            bptt_horizon: self.bptt,
            clip_norm: self.clip,
            granularity: if self.per_step {
                UpdateGranularity::PerStep
            } else {
                UpdateGranularity::PerSequence
            },
            timing: self.timing,
        }
    }

    pub fn echo_to(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))?;
        std::fs::write(dir.join("config.json"), json)
            .map_err(|e| CliError::Data(format!("cannot write config.json: {e}")))
    }
}
