//! Model checkpoints: one self-describing JSON document per model.
//!
//! Weights are serialized as row-major arrays of f64 in shortest-round-trip
//! decimal, so a save/load cycle is bit-exact. The header pins format
//! version, shapes, leaf layout, and provenance (init variance and seed); an
//! optional scaler section carries the preprocessing fitted at training time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselineModel};
use crate::cell::LstmParams;
use crate::data::ScalerParams;
use crate::error::CheckpointError;
use crate::tree::{
    Combination, CombinationWeights, LeafSelection, TreeLstmConfig, TreeLstmModel,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TreePayload {
    main: LstmParams,
    leaves: BTreeMap<usize, LstmParams>,
    w_tilde: CombinationWeights,
    w_hat: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselinePayload {
    params: LstmParams,
    w_hat: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    kind: String,
    l: usize,
    q: usize,
    m: usize,
    leaf_indices: Vec<usize>,
    shared_combination: bool,
    init_variance: f64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tree: Option<TreePayload>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<BaselinePayload>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaler: Option<ScalerParams>,
}

/// A model plus the preprocessing it was trained with.
#[derive(Debug, Clone)]
pub enum ModelCheckpoint {
    Tree(TreeLstmModel),
    Baseline(BaselineModel),
}

impl ModelCheckpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelCheckpoint::Tree(_) => "tree",
            ModelCheckpoint::Baseline(b) => b.kind.as_str(),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes the model (and optional scaler) to `path`.
pub fn save_model(
    path: &Path,
    model: &ModelCheckpoint,
    scaler: Option<&ScalerParams>,
    seed: u64,
) -> Result<(), CheckpointError> {
    let file = match model {
        ModelCheckpoint::Tree(t) => {
            if !t.is_finite() {
                return Err(CheckpointError::NonFinite("tree weights".to_string()));
            }
            CheckpointFile {
                format_version: FORMAT_VERSION,
                kind: "tree".to_string(),
                l: t.config.window,
                q: t.config.hidden,
                m: t.config.input,
                leaf_indices: t.config.leaf_indices(),
                shared_combination: matches!(t.config.combination, Combination::Shared),
                init_variance: t.config.init_variance,
                seed,
                tree: Some(TreePayload {
                    main: t.main.clone(),
                    leaves: t.leaves.clone(),
                    w_tilde: t.w_tilde.clone(),
                    w_hat: t.w_hat.clone(),
                }),
                baseline: None,
                scaler: scaler.cloned(),
            }
        }
        ModelCheckpoint::Baseline(b) => {
            if !b.params.is_finite() || !b.w_hat.iter().all(|v| v.is_finite()) {
                return Err(CheckpointError::NonFinite("baseline weights".to_string()));
            }
            CheckpointFile {
                format_version: FORMAT_VERSION,
                kind: b.kind.as_str().to_string(),
                l: 0,
                q: b.hidden_size(),
                m: b.data_width(),
                leaf_indices: Vec::new(),
                shared_combination: false,
                init_variance: 0.0,
                seed,
                tree: None,
                baseline: Some(BaselinePayload {
                    params: b.params.clone(),
                    w_hat: b.w_hat.clone(),
                }),
                scaler: scaler.cloned(),
            }
        }
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}

fn expect_shape(
    field: &str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<(), CheckpointError> {
    if expected == found {
        Ok(())
    } else {
        Err(CheckpointError::ShapeMismatch {
            field: field.to_string(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        })
    }
}

fn check_params(field: &str, p: &LstmParams, q: usize, m: usize) -> Result<(), CheckpointError> {
    expect_shape(&format!("{field}.wz"), (q, m + 1), (p.wz.rows(), p.wz.cols()))?;
    expect_shape(&format!("{field}.wi"), (q, m + 1), (p.wi.rows(), p.wi.cols()))?;
    expect_shape(&format!("{field}.wf"), (q, m + 1), (p.wf.rows(), p.wf.cols()))?;
    expect_shape(&format!("{field}.wo"), (q, m + 1), (p.wo.rows(), p.wo.cols()))?;
    expect_shape(&format!("{field}.rz"), (q, q), (p.rz.rows(), p.rz.cols()))?;
    expect_shape(&format!("{field}.ri"), (q, q), (p.ri.rows(), p.ri.cols()))?;
    expect_shape(&format!("{field}.rf"), (q, q), (p.rf.rows(), p.rf.cols()))?;
    expect_shape(&format!("{field}.ro"), (q, q), (p.ro.rows(), p.ro.cols()))?;
    if !p.is_finite() {
        return Err(CheckpointError::NonFinite(field.to_string()));
    }
    Ok(())
}

fn check_vec(field: &str, v: &[f64], expected: usize) -> Result<(), CheckpointError> {
    if v.len() != expected {
        return Err(CheckpointError::ShapeMismatch {
            field: field.to_string(),
            expected: format!("length {expected}"),
            found: format!("length {}", v.len()),
        });
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(CheckpointError::NonFinite(field.to_string()));
    }
    Ok(())
}

/// Reads a checkpoint back, validating version and every shape before any
/// model is constructed.
pub fn load_model(path: &Path) -> Result<(ModelCheckpoint, Option<ScalerParams>), CheckpointError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CheckpointError::Corrupt("missing format_version".to_string()))?
        as u32;
    if found != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found,
            supported: FORMAT_VERSION,
        });
    }
    let file: CheckpointFile =
        serde_json::from_value(value).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let model = match file.kind.as_str() {
        "tree" => {
            let payload = file
                .tree
                .ok_or_else(|| CheckpointError::Corrupt("missing tree payload".to_string()))?;
            let (l, q, m) = (file.l, file.q, file.m);
            check_params("main", &payload.main, q, m)?;
            let full: Vec<usize> = (1..(1usize << l)).collect();
            let selection = if file.leaf_indices == full {
                LeafSelection::Full
            } else {
                LeafSelection::Explicit(file.leaf_indices.clone())
            };
            let config = TreeLstmConfig {
                window: l,
                hidden: q,
                input: m,
                leaf_selection: selection,
                combination: if file.shared_combination {
                    Combination::Shared
                } else {
                    Combination::PerNetwork
                },
                init_variance: if file.init_variance > 0.0 {
                    file.init_variance
                } else {
                    1e-2
                },
                ..TreeLstmConfig::new(l.max(1), q, m)
            };
            config
                .validate()
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            let declared: Vec<usize> = payload.leaves.keys().copied().collect();
            if declared != file.leaf_indices {
                return Err(CheckpointError::ShapeMismatch {
                    field: "leaves".to_string(),
                    expected: format!("{:?}", file.leaf_indices),
                    found: format!("{declared:?}"),
                });
            }
            for (idx, leaf) in &payload.leaves {
                check_params(&format!("leaf[{idx}]"), leaf, q, m)?;
            }
            let tilde_len = config.tilde_len();
            match (&payload.w_tilde, file.shared_combination) {
                (CombinationWeights::Shared(w), true) => check_vec("w_tilde", w, tilde_len)?,
                (CombinationWeights::PerNetwork(map), false) => {
                    let mut expected_keys = vec![0usize];
                    expected_keys.extend(&file.leaf_indices);
                    let keys: Vec<usize> = map.keys().copied().collect();
                    if keys != expected_keys {
                        return Err(CheckpointError::ShapeMismatch {
                            field: "w_tilde".to_string(),
                            expected: format!("{expected_keys:?}"),
                            found: format!("{keys:?}"),
                        });
                    }
                    for (idx, w) in map {
                        check_vec(&format!("w_tilde[{idx}]"), w, tilde_len)?;
                    }
                }
                _ => {
                    return Err(CheckpointError::Corrupt(
                        "combination weight layout disagrees with shared_combination".to_string(),
                    ))
                }
            }
            check_vec("w_hat", &payload.w_hat, q + 1)?;
            ModelCheckpoint::Tree(TreeLstmModel {
                config,
                main: payload.main,
                leaves: payload.leaves,
                w_tilde: payload.w_tilde,
                w_hat: payload.w_hat,
            })
        }
        "zi" | "fi" => {
            let payload = file
                .baseline
                .ok_or_else(|| CheckpointError::Corrupt("missing baseline payload".to_string()))?;
            let kind = if file.kind == "zi" {
                BaselineKind::Zi
            } else {
                BaselineKind::Fi
            };
            let input = match kind {
                BaselineKind::Zi => file.m,
                BaselineKind::Fi => file.m + 1,
            };
            check_params("params", &payload.params, file.q, input)?;
            check_vec("w_hat", &payload.w_hat, file.q + 1)?;
            ModelCheckpoint::Baseline(BaselineModel {
                kind,
                params: payload.params,
                w_hat: payload.w_hat,
            })
        }
        other => {
            return Err(CheckpointError::KindMismatch {
                expected: "tree|zi|fi".to_string(),
                found: other.to_string(),
            })
        }
    };
    Ok((model, file.scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_scaler, synth_sine, TargetScaling};

    fn roundtrip(model: ModelCheckpoint) -> ModelCheckpoint {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&path, &model, None, 7).unwrap();
        let (back, scaler) = load_model(&path).unwrap();
        assert!(scaler.is_none());
        back
    }

    #[test]
    fn tree_roundtrip_is_bit_exact() {
        let model = TreeLstmModel::init(TreeLstmConfig::new(2, 3, 2), 42).unwrap();
        let back = match roundtrip(ModelCheckpoint::Tree(model.clone())) {
            ModelCheckpoint::Tree(t) => t,
            _ => panic!("kind changed"),
        };
        assert_eq!(model, back);
        for (a, b) in model.w_hat.iter().zip(&back.w_hat) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (t_a, t_b) in model.main.tensors().iter().zip(back.main.tensors()) {
            for (a, b) in t_a.data().iter().zip(t_b.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn awkward_values_roundtrip() {
        let mut model = TreeLstmModel::init(TreeLstmConfig::new(1, 2, 1), 1).unwrap();
        model.w_hat = vec![0.1 + 0.2, -0.0, 1e-308];
        let back = match roundtrip(ModelCheckpoint::Tree(model.clone())) {
            ModelCheckpoint::Tree(t) => t,
            _ => panic!("kind changed"),
        };
        for (a, b) in model.w_hat.iter().zip(&back.w_hat) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn baseline_roundtrip_with_scaler() {
        let model = BaselineModel::init(BaselineKind::Fi, 4, 2, 1e-2, 3);
        let data = synth_sine(20, 0.0, 1).unwrap();
        let scaler = fit_scaler(&data, TargetScaling::NextValue).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&path, &ModelCheckpoint::Baseline(model.clone()), Some(&scaler), 9).unwrap();
        let (back, loaded_scaler) = load_model(&path).unwrap();
        match back {
            ModelCheckpoint::Baseline(b) => assert_eq!(b, model),
            _ => panic!("kind changed"),
        }
        assert_eq!(loaded_scaler.unwrap(), scaler);
    }

    #[test]
    fn wrong_declared_q_is_shape_error() {
        let model = TreeLstmModel::init(TreeLstmConfig::new(2, 3, 1), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&path, &ModelCheckpoint::Tree(model), None, 1).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        value["q"] = serde_json::json!(5);
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn future_version_names_both_versions() {
        let model = TreeLstmModel::init(TreeLstmConfig::new(1, 2, 1), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&path, &ModelCheckpoint::Tree(model), None, 1).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        value["format_version"] = serde_json::json!(99);
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        match load_model(&path) {
            Err(CheckpointError::Version { found, supported }) => {
                assert_eq!((found, supported), (99, FORMAT_VERSION));
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_file_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::Corrupt(_))));
    }
}
