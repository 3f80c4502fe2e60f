//! Sequence data model, CSV ingestion, missingness injection, chronological
//! splitting, scaling, next-value targets, and a synthetic generator.
//!
//! CSV dialect: comma-separated, UTF-8, optional header row, '.' decimal
//! separator, one grid slot per row. Empty feature cells denote a fully
//! missing slot (vectors are received whole or not at all).

use std::path::Path;

use crate::error::DataError;
use crate::numeric::Rng;

/// One grid slot: an optional input vector and an optional target.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub input: Option<Vec<f64>>,
    pub target: Option<f64>,
}

/// A uniform time grid of optional inputs and targets. The grid spacing is
/// implicit (one unit); gaps between present inputs are index differences.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSequence {
    width: usize,
    slots: Vec<Slot>,
}

impl MaskedSequence {
    pub fn new(width: usize, slots: Vec<Slot>) -> Self {
        for (i, s) in slots.iter().enumerate() {
            if let Some(x) = &s.input {
                assert!(
                    x.len() == width,
                    "slot {i} has width {}, sequence declares {width}",
                    x.len()
                );
            }
        }
        MaskedSequence { width, slots }
    }

    /// Fully observed sequence from dense inputs.
    pub fn from_inputs(inputs: Vec<Vec<f64>>) -> Self {
        let width = inputs.first().map_or(0, |x| x.len());
        let slots = inputs
            .into_iter()
            .map(|input| Slot {
                input: Some(input),
                target: None,
            })
            .collect();
        MaskedSequence { width, slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Feature width m.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn input(&self, idx: usize) -> Option<&Vec<f64>> {
        self.slots[idx].input.as_ref()
    }

    pub fn target(&self, idx: usize) -> Option<f64> {
        self.slots[idx].target
    }

    pub fn is_present(&self, idx: usize) -> bool {
        self.slots[idx].input.is_some()
    }

    pub fn n_present(&self) -> usize {
        self.slots.iter().filter(|s| s.input.is_some()).count()
    }

    pub fn n_missing(&self) -> usize {
        self.len() - self.n_present()
    }

    pub fn n_targets(&self) -> usize {
        self.slots.iter().filter(|s| s.target.is_some()).count()
    }
}

/// Column selection for CSV loading.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Feature column indices; `None` means every column (minus the target).
    pub feature_cols: Option<Vec<usize>>,
    /// Optional target column. Without one, targets are built afterwards
    /// (next-value prediction).
    pub target_col: Option<usize>,
}

/// A loaded CSV: the sequence plus the header row, if one was present.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub sequence: MaskedSequence,
    pub header: Option<Vec<String>>,
}

fn parse_cell(raw: &str, row: usize, col: usize) -> Result<Option<f64>, DataError> {
    let t = raw.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| DataError::NonNumeric {
            row,
            col,
            value: raw.to_string(),
        })
}

/// Loads a CSV into a [`MaskedSequence`]. Row order is preserved; a row with
/// any empty feature cell becomes a fully missing slot. The first row is
/// treated as a header when any of its cells fails to parse as a number.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedCsv, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("row {}: {e}", i + 1)),
        })?;
        rows.push(rec.iter().map(|s| s.to_string()).collect());
    }
    if rows.is_empty() {
        return Err(DataError::EmptySequence);
    }

    let header = {
        let first = &rows[0];
        let looks_like_header = first
            .iter()
            .any(|c| !c.trim().is_empty() && c.trim().parse::<f64>().is_err());
        if looks_like_header {
            Some(rows.remove(0))
        } else {
            None
        }
    };
    if rows.is_empty() {
        return Err(DataError::EmptySequence);
    }

    let ncols = rows[0].len();
    let feature_cols: Vec<usize> = match &schema.feature_cols {
        Some(cols) => cols.clone(),
        None => (0..ncols).filter(|c| Some(*c) != schema.target_col).collect(),
    };

    let mut slots = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let rownum = i + 1 + header.is_some() as usize;
        if row.len() != ncols {
            return Err(DataError::RaggedRow {
                row: rownum,
                expected: ncols,
                found: row.len(),
            });
        }
        let mut features = Vec::with_capacity(feature_cols.len());
        let mut any_missing = false;
        for &c in &feature_cols {
            if c >= row.len() {
                return Err(DataError::RaggedRow {
                    row: rownum,
                    expected: c + 1,
                    found: row.len(),
                });
            }
            match parse_cell(&row[c], rownum, c)? {
                Some(v) => features.push(v),
                None => {
                    any_missing = true;
                    break;
                }
            }
        }
        let target = match schema.target_col {
            Some(c) if c < row.len() => parse_cell(&row[c], rownum, c)?,
            _ => None,
        };
        slots.push(Slot {
            input: if any_missing { None } else { Some(features) },
            target: if any_missing { None } else { target },
        });
    }

    Ok(LoadedCsv {
        sequence: MaskedSequence::new(feature_cols.len(), slots),
        header,
    })
}

/// Writes a sequence back to the same CSV dialect. Missing slots become rows
/// of empty fields; every field is quoted so single-column missing rows stay
/// distinct from blank lines.
pub fn write_csv(
    seq: &MaskedSequence,
    header: Option<&[String]>,
    path: &Path,
) -> Result<(), DataError> {
    let io_err = |e: csv::Error| DataError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .from_path(path)
        .map_err(io_err)?;
    if let Some(h) = header {
        writer.write_record(h).map_err(io_err)?;
    }
    let empty_row = vec![String::new(); seq.width().max(1)];
    for slot in seq.slots() {
        match &slot.input {
            Some(x) => {
                let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                writer.write_record(&row).map_err(io_err)?;
            }
            None => writer.write_record(&empty_row).map_err(io_err)?,
        }
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Deletes exactly round(r·N) slots, chosen uniformly without replacement.
/// Deterministic per (seed, N, r). Requires a fully observed sequence.
pub fn inject_missingness(
    seq: &MaskedSequence,
    ratio: f64,
    seed: u64,
) -> Result<MaskedSequence, DataError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let missing = seq.n_missing();
    if missing > 0 {
        return Err(DataError::AlreadyMasked { missing });
    }
    let n = seq.len();
    let k = (ratio * n as f64).round() as usize;
    let mut rng = Rng::new(seed);
    let chosen = rng.choose(n, k);
    let mut slots = seq.slots().to_vec();
    for idx in chosen {
        slots[idx].input = None;
        slots[idx].target = None;
    }
    Ok(MaskedSequence::new(seq.width(), slots))
}

/// Chronological 60/40 split: train gets slots 1..⌊0.6N⌋.
pub fn split_60_40(seq: &MaskedSequence) -> Result<(MaskedSequence, MaskedSequence), DataError> {
    let n = seq.len();
    if n < 5 {
        return Err(DataError::SequenceTooShort { needed: 5, found: n });
    }
    let cut = (0.6 * n as f64).floor() as usize;
    let train = MaskedSequence::new(seq.width(), seq.slots()[..cut].to_vec());
    let test = MaskedSequence::new(seq.width(), seq.slots()[cut..].to_vec());
    Ok((train, test))
}

/// Next-value targets: target at slot j is the first feature of slot j+1 when
/// that input is present, undefined otherwise. The last slot has no target.
pub fn make_next_value_targets(seq: &MaskedSequence) -> MaskedSequence {
    let n = seq.len();
    let mut slots = seq.slots().to_vec();
    for j in 0..n {
        slots[j].target = if j + 1 < n {
            seq.input(j + 1).map(|next| next[0])
        } else {
            None
        };
    }
    MaskedSequence::new(seq.width(), slots)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Affine map onto [−1, 1]; constant features map to 0.
    fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            2.0 * (v - self.min) / (self.max - self.min) - 1.0
        } else {
            0.0
        }
    }

    fn unscale(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v + 1.0) * (self.max - self.min) / 2.0 + self.min
        } else {
            self.min
        }
    }
}

/// How targets relate to features, which decides the map they scale under.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TargetScaling {
    /// Targets are next values of feature 0 and reuse its map.
    NextValue,
    /// Targets get their own min-max fitted on training targets.
    Independent,
}

/// Per-feature min/max fitted on the training split only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalerParams {
    pub features: Vec<MinMax>,
    pub target: Option<MinMax>,
    pub mode: TargetScaling,
}

/// Fits per-feature min-max on the present training inputs.
pub fn fit_scaler(train: &MaskedSequence, mode: TargetScaling) -> Result<ScalerParams, DataError> {
    let m = train.width();
    let mut features = vec![
        MinMax {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        m
    ];
    let mut seen = false;
    for slot in train.slots() {
        if let Some(x) = &slot.input {
            seen = true;
            for (f, v) in features.iter_mut().zip(x) {
                f.min = f.min.min(*v);
                f.max = f.max.max(*v);
            }
        }
    }
    if !seen {
        return Err(DataError::EmptyTrainSet);
    }
    let target = match mode {
        TargetScaling::NextValue => None,
        TargetScaling::Independent => {
            let mut mm = MinMax {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            };
            let mut any = false;
            for slot in train.slots() {
                if let Some(d) = slot.target {
                    any = true;
                    mm.min = mm.min.min(d);
                    mm.max = mm.max.max(d);
                }
            }
            if any {
                Some(mm)
            } else {
                None
            }
        }
    };
    Ok(ScalerParams {
        features,
        target,
        mode,
    })
}

impl ScalerParams {
    fn target_map(&self) -> Option<MinMax> {
        match self.mode {
            TargetScaling::NextValue => Some(self.features[0]),
            TargetScaling::Independent => self.target,
        }
    }

    pub fn scale_target(&self, v: f64) -> f64 {
        self.target_map().map_or(v, |mm| mm.scale(v))
    }

    pub fn unscale_target(&self, v: f64) -> f64 {
        self.target_map().map_or(v, |mm| mm.unscale(v))
    }
}

/// Applies the fitted maps to every present input and defined target.
pub fn apply_scaler(seq: &MaskedSequence, scaler: &ScalerParams) -> MaskedSequence {
    assert!(
        scaler.features.len() == seq.width(),
        "scaler fitted on width {}, sequence has width {}",
        scaler.features.len(),
        seq.width()
    );
    let slots = seq
        .slots()
        .iter()
        .map(|slot| Slot {
            input: slot.input.as_ref().map(|x| {
                x.iter()
                    .zip(&scaler.features)
                    .map(|(v, mm)| mm.scale(*v))
                    .collect()
            }),
            target: slot.target.map(|d| self_scale(scaler, d)),
        })
        .collect();
    MaskedSequence::new(seq.width(), slots)
}

fn self_scale(scaler: &ScalerParams, d: f64) -> f64 {
    scaler.scale_target(d)
}

/// Noisy sine, period 40 slots: x_j = sin(2πj/40) + ε, fully observed.
pub fn synth_sine(n: usize, noise_std: f64, seed: u64) -> Result<MaskedSequence, DataError> {
    if noise_std < 0.0 {
        return Err(DataError::NegativeNoise(noise_std));
    }
    if n == 0 {
        return Err(DataError::EmptySequence);
    }
    let mut rng = Rng::new(seed);
    let period = 40.0;
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let base = (2.0 * std::f64::consts::PI * j as f64 / period).sin();
            let eps = if noise_std > 0.0 {
                rng.gaussian(noise_std * noise_std)
            } else {
                0.0
            };
            vec![base + eps]
        })
        .collect();
    Ok(MaskedSequence::from_inputs(inputs))
}
