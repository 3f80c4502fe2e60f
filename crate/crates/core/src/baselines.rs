//! Imputation baselines: zero imputation (ZI) and forward fill with a
//! missingness indicator (FI). Both run one cell step and one prediction per
//! grid slot on their imputed dense streams and share the tree's head and
//! trainer.

use serde::{Deserialize, Serialize};

use crate::cell::{LstmParams, LstmState};
use crate::chain::{chain_backward, chain_forward, chain_online_epoch, ChainRun};
use crate::complexity::{CountConvention, MultCounter};
use crate::data::MaskedSequence;
use crate::error::DataError;
use crate::numeric::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Missing inputs replaced by zero vectors.
    Zi,
    /// Missing inputs replaced by the last seen input, plus a binary
    /// existence indicator as an extra feature (input width m+1).
    Fi,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::Zi => "zi",
            BaselineKind::Fi => "fi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub params: LstmParams,
    pub w_hat: Vec<f64>,
}

impl BaselineModel {
    /// Gaussian initialization; the FI cell is one input wider than the data.
    pub fn init(kind: BaselineKind, hidden: usize, data_width: usize, variance: f64, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let input = match kind {
            BaselineKind::Zi => data_width,
            BaselineKind::Fi => data_width + 1,
        };
        let params = LstmParams::init(&mut rng, hidden, input, variance);
        let w_hat = (0..hidden + 1).map(|_| rng.gaussian(variance)).collect();
        BaselineModel { kind, params, w_hat }
    }

    pub fn hidden_size(&self) -> usize {
        self.params.hidden_size()
    }

    /// Width of the raw data this model accepts.
    pub fn data_width(&self) -> usize {
        match self.kind {
            BaselineKind::Zi => self.params.input_size(),
            BaselineKind::Fi => self.params.input_size() - 1,
        }
    }

    fn check_width(&self, seq: &MaskedSequence) -> Result<(), DataError> {
        if seq.width() != self.data_width() {
            return Err(DataError::WidthMismatch {
                expected: self.data_width(),
                found: seq.width(),
            });
        }
        Ok(())
    }

    fn dense_inputs(&self, seq: &MaskedSequence) -> Vec<Vec<f64>> {
        match self.kind {
            BaselineKind::Zi => impute_zero(seq),
            BaselineKind::Fi => impute_forward_fill(seq),
        }
    }

    pub(crate) fn forward_run(
        &self,
        seq: &MaskedSequence,
        convention: CountConvention,
    ) -> Result<(ChainRun, Vec<Vec<f64>>), DataError> {
        self.check_width(seq)?;
        let dense = self.dense_inputs(seq);
        let run = chain_forward(
            &self.params,
            &self.w_hat,
            dense.iter().map(|x| Some(x.as_slice())),
            convention,
        );
        Ok((run, dense))
    }

    /// Per-slot predictions (one per grid slot).
    pub fn predict(&self, seq: &MaskedSequence) -> Result<Vec<f64>, DataError> {
        Ok(self.forward_run(seq, CountConvention::ExcludeBias)?.0.preds)
    }

    /// Forward multiplication tally over the sequence.
    pub fn measure(&self, seq: &MaskedSequence, convention: CountConvention) -> Result<MultCounter, DataError> {
        Ok(self.forward_run(seq, convention)?.0.counter)
    }

    pub(crate) fn batch_grads(
        &self,
        run: &ChainRun,
        dpred: &[f64],
        horizon: usize,
    ) -> (LstmParams, Vec<f64>) {
        chain_backward(&self.params, &self.w_hat, run, dpred, horizon)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn online_epoch(
        &mut self,
        seq: &MaskedSequence,
        lr: f64,
        horizon: usize,
        clip: Option<f64>,
        convention: CountConvention,
    ) -> Result<(f64, usize, MultCounter, bool), DataError> {
        self.check_width(seq)?;
        let dense = self.dense_inputs(seq);
        let targets: Vec<Option<f64>> = seq.slots().iter().map(|s| s.target).collect();
        Ok(chain_online_epoch(
            &mut self.params,
            &mut self.w_hat,
            dense.iter().map(|x| Some(x.as_slice())),
            &targets,
            lr,
            horizon,
            clip,
            convention,
        ))
    }

    pub fn final_state(&self, seq: &MaskedSequence) -> Result<LstmState, DataError> {
        let (run, _) = self.forward_run(seq, CountConvention::ExcludeBias)?;
        Ok(run.final_state(self.hidden_size()))
    }
}

/// Replaces every missing slot with the zero vector.
pub fn impute_zero(seq: &MaskedSequence) -> Vec<Vec<f64>> {
    let zero = vec![0.0; seq.width()];
    seq.slots()
        .iter()
        .map(|s| s.input.clone().unwrap_or_else(|| zero.clone()))
        .collect()
}

/// Repeats the last seen input for missing slots and appends an existence
/// indicator (1 = received, 0 = imputed). Leading missing slots, which have
/// no predecessor, become zero vectors with indicator 0.
pub fn impute_forward_fill(seq: &MaskedSequence) -> Vec<Vec<f64>> {
    let mut last: Option<Vec<f64>> = None;
    let width = seq.width();
    seq.slots()
        .iter()
        .map(|s| match &s.input {
            Some(x) => {
                let mut v = x.clone();
                v.push(1.0);
                last = Some(x.clone());
                v
            }
            None => {
                let mut v = last.clone().unwrap_or_else(|| vec![0.0; width]);
                v.push(0.0);
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{cell_forward, head_predict};
    use crate::data::{synth_sine, MaskedSequence, Slot};
    use crate::numeric::Matrix;

    fn masked(values: &[Option<f64>]) -> MaskedSequence {
        MaskedSequence::new(
            1,
            values
                .iter()
                .map(|v| Slot {
                    input: v.map(|x| vec![x]),
                    target: None,
                })
                .collect(),
        )
    }

    #[test]
    fn impute_zero_cases() {
        let complete = masked(&[Some(1.0), Some(2.0)]);
        assert_eq!(impute_zero(&complete), vec![vec![1.0], vec![2.0]]);

        let empty = masked(&[None, None, None]);
        assert_eq!(impute_zero(&empty), vec![vec![0.0]; 3]);

        // Three interior gaps: slots 3, 6, 7 (0-based) missing out of 11.
        let mut slots: Vec<Option<f64>> = (0..11).map(|i| Some(i as f64)).collect();
        for i in [3usize, 6, 7] {
            slots[i] = None;
        }
        let seq = masked(&slots);
        let dense = impute_zero(&seq);
        for (i, row) in dense.iter().enumerate() {
            if [3usize, 6, 7].contains(&i) {
                assert_eq!(row, &vec![0.0]);
            } else {
                assert_eq!(row, &vec![i as f64]);
            }
        }
    }

    #[test]
    fn forward_fill_cases() {
        let seq = masked(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(
            impute_forward_fill(&seq),
            vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![3.0, 1.0]]
        );

        let leading = masked(&[None, Some(2.0)]);
        assert_eq!(
            impute_forward_fill(&leading),
            vec![vec![0.0, 0.0], vec![2.0, 1.0]]
        );

        let complete = masked(&[Some(1.0), Some(2.0)]);
        assert_eq!(
            impute_forward_fill(&complete),
            vec![vec![1.0, 1.0], vec![2.0, 1.0]]
        );
    }

    #[test]
    fn indicator_column_is_existence_mask() {
        let seq = synth_sine(50, 0.0, 1).unwrap();
        let seq = crate::data::inject_missingness(&seq, 0.4, 7).unwrap();
        let dense = impute_forward_fill(&seq);
        for (slot, row) in seq.slots().iter().zip(&dense) {
            assert_eq!(row[1], if slot.input.is_some() { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn cell_call_count_is_n() {
        let seq = synth_sine(123, 0.0, 2).unwrap();
        let seq = crate::data::inject_missingness(&seq, 0.5, 3).unwrap();
        for kind in [BaselineKind::Zi, BaselineKind::Fi] {
            let model = BaselineModel::init(kind, 4, 1, 1e-2, 11);
            let counter = model.measure(&seq, CountConvention::ExcludeBias).unwrap();
            assert_eq!(counter.cell_calls(), 123);
        }
    }

    #[test]
    fn zi_on_complete_data_is_vanilla_chain() {
        let seq = synth_sine(30, 0.02, 9).unwrap();
        let model = BaselineModel::init(BaselineKind::Zi, 3, 1, 1e-2, 5);
        let preds = model.predict(&seq).unwrap();
        let mut state = LstmState::zeros(3);
        for (j, slot) in seq.slots().iter().enumerate() {
            let (next, _) = cell_forward(&model.params, slot.input.as_ref().unwrap(), &state);
            state = next;
            assert_eq!(preds[j].to_bits(), head_predict(&model.w_hat, &state.h).to_bits());
        }
    }

    #[test]
    fn fi_with_zeroed_indicator_column_embeds_zi() {
        // On complete data the indicator is always 1; zero its column in the
        // FI weights and copy everything else from ZI, and the two nets agree.
        let seq = synth_sine(40, 0.05, 4).unwrap();
        let zi = BaselineModel::init(BaselineKind::Zi, 4, 1, 1e-2, 21);
        let mut fi = BaselineModel::init(BaselineKind::Fi, 4, 1, 1e-2, 22);
        fi.w_hat = zi.w_hat.clone();
        let copy_with_zero_indicator = |src: &Matrix| -> Matrix {
            // src is q×(m+1) = q×2 for ZI: [features | bias].
            // FI wants q×3: [features | indicator | bias].
            let q = src.rows();
            let m = src.cols() - 1;
            let mut out = Matrix::zeros(q, m + 2);
            for r in 0..q {
                for c in 0..m {
                    out.set(r, c, src.at(r, c));
                }
                out.set(r, m, 0.0);
                out.set(r, m + 1, src.at(r, m));
            }
            out
        };
        fi.params.wz = copy_with_zero_indicator(&zi.params.wz);
        fi.params.wi = copy_with_zero_indicator(&zi.params.wi);
        fi.params.wf = copy_with_zero_indicator(&zi.params.wf);
        fi.params.wo = copy_with_zero_indicator(&zi.params.wo);
        fi.params.rz = zi.params.rz.clone();
        fi.params.ri = zi.params.ri.clone();
        fi.params.rf = zi.params.rf.clone();
        fi.params.ro = zi.params.ro.clone();

        let pz = zi.predict(&seq).unwrap();
        let pf = fi.predict(&seq).unwrap();
        for (a, b) in pz.iter().zip(&pf) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let seq = synth_sine(10, 0.0, 1).unwrap();
        let model = BaselineModel::init(BaselineKind::Zi, 3, 2, 1e-2, 1);
        assert!(matches!(
            model.predict(&seq),
            Err(DataError::WidthMismatch { expected: 2, found: 1 })
        ));
    }
}
