//! Shared plain-chain regressor machinery.
//!
//! A chain run feeds a single LSTM cell over a slot sequence (consuming only
//! the present inputs), predicts through the linear head at every slot, and
//! retains traces for backpropagation. The imputation baselines run it on
//! dense imputed streams; a tree with no leaves runs it directly on the
//! masked stream; the tree's main network reuses the truncated-BPTT walker.

use crate::cell::{cell_backward, cell_forward, head_predict, LstmParams, LstmState, StepTrace};
use crate::complexity::{CountConvention, MultCounter};

/// Forward artifacts of one chain pass.
#[derive(Debug, Clone)]
pub(crate) struct ChainRun {
    /// One trace per consumed input, in consumption order.
    pub traces: Vec<StepTrace>,
    /// State after each cell call (parallel to `traces`).
    pub states: Vec<LstmState>,
    /// For each slot, the number of cell calls made once the slot was
    /// processed (0 means the state is still the zero initial state).
    pub calls_at_slot: Vec<usize>,
    /// Head prediction at every slot.
    pub preds: Vec<f64>,
    pub counter: MultCounter,
}

impl ChainRun {
    pub fn final_state(&self, hidden: usize) -> LstmState {
        self.states
            .last()
            .cloned()
            .unwrap_or_else(|| LstmState::zeros(hidden))
    }

    fn h_at_call(&self, idx: usize, hidden: usize) -> Vec<f64> {
        if idx == 0 {
            vec![0.0; hidden]
        } else {
            self.states[idx - 1].h.clone()
        }
    }
}

/// Runs the chain over per-slot optional inputs, predicting at every slot.
pub(crate) fn chain_forward<'a, I>(
    params: &LstmParams,
    w_hat: &[f64],
    inputs: I,
    convention: CountConvention,
) -> ChainRun
where
    I: Iterator<Item = Option<&'a [f64]>>,
{
    let q = params.hidden_size();
    let width = params.input_size();
    let mut counter = MultCounter::new(convention);
    let mut state = LstmState::zeros(q);
    let mut traces = Vec::new();
    let mut states = Vec::new();
    let mut calls_at_slot = Vec::new();
    let mut preds = Vec::new();
    for input in inputs {
        if let Some(x) = input {
            let (next, trace) = cell_forward(params, x, &state);
            counter.add_cell(q, width);
            state = next;
            traces.push(trace);
            states.push(state.clone());
        }
        counter.add_combination(q as u64 + 1);
        preds.push(head_predict(w_hat, &state.h));
        calls_at_slot.push(traces.len());
    }
    ChainRun {
        traces,
        states,
        calls_at_slot,
        preds,
        counter,
    }
}

/// Per-call-index gradient contributions flowing into a chain's states.
#[derive(Debug, Clone)]
pub(crate) struct ChainContribs {
    /// Indexed by call index 0..=K; index 0 targets the initial state and is
    /// discarded by the walk.
    pub dh: Vec<Vec<f64>>,
    pub dc: Vec<Vec<f64>>,
}

impl ChainContribs {
    pub fn zeros(calls: usize, hidden: usize) -> Self {
        ChainContribs {
            dh: vec![vec![0.0; hidden]; calls + 1],
            dc: vec![vec![0.0; hidden]; calls + 1],
        }
    }

    pub fn add_dh(&mut self, call_idx: usize, v: &[f64]) {
        for (a, b) in self.dh[call_idx].iter_mut().zip(v) {
            *a += b;
        }
    }

    pub fn add_dc(&mut self, call_idx: usize, v: &[f64]) {
        for (a, b) in self.dc[call_idx].iter_mut().zip(v) {
            *a += b;
        }
    }
}

/// Backpropagates injected contributions through the chain.
///
/// Truncation: the accumulated adjoint is zeroed whenever the walk crosses a
/// call index that is a multiple of `horizon`, so every contribution unrolls
/// through at most `horizon` cells.
pub(crate) fn bptt_chain(
    params: &LstmParams,
    traces: &[StepTrace],
    contribs: &ChainContribs,
    horizon: usize,
) -> LstmParams {
    let q = params.hidden_size();
    let m = params.input_size();
    let mut grads = LstmParams::zeros(q, m);
    let mut dh = vec![0.0; q];
    let mut dc = vec![0.0; q];
    for k in (1..=traces.len()).rev() {
        for (a, b) in dh.iter_mut().zip(&contribs.dh[k]) {
            *a += b;
        }
        for (a, b) in dc.iter_mut().zip(&contribs.dc[k]) {
            *a += b;
        }
        if dh.iter().all(|v| *v == 0.0) && dc.iter().all(|v| *v == 0.0) {
            continue;
        }
        let (g, _dx, dh_prev, dc_prev) = cell_backward(params, &traces[k - 1], &dh, &dc);
        grads.add_assign(&g);
        dh = dh_prev;
        dc = dc_prev;
        if (k - 1) % horizon == 0 {
            dh.iter_mut().for_each(|v| *v = 0.0);
            dc.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    grads
}

/// Backpropagates per-slot prediction gradients through a full chain run.
/// Returns (cell gradients, head gradients).
pub(crate) fn chain_backward(
    params: &LstmParams,
    w_hat: &[f64],
    run: &ChainRun,
    dpred: &[f64],
    horizon: usize,
) -> (LstmParams, Vec<f64>) {
    assert_eq!(dpred.len(), run.preds.len(), "prediction gradient length mismatch");
    let q = params.hidden_size();
    let mut dw_hat = vec![0.0; q + 1];
    let mut contribs = ChainContribs::zeros(run.traces.len(), q);
    for (slot, &dd) in dpred.iter().enumerate() {
        if dd == 0.0 {
            continue;
        }
        let idx = run.calls_at_slot[slot];
        let h = run.h_at_call(idx, q);
        for j in 0..q {
            dw_hat[j] += dd * h[j];
        }
        dw_hat[q] += dd;
        if idx > 0 {
            let mut dh = vec![0.0; q];
            for j in 0..q {
                dh[j] = dd * w_hat[j];
            }
            contribs.add_dh(idx, &dh);
        }
    }
    let grads = bptt_chain(params, &run.traces, &contribs, horizon);
    (grads, dw_hat)
}

/// One online (per-step) training pass over the chain: every defined-target
/// slot backpropagates its own loss through at most `horizon` retained cells
/// and updates the weights immediately.
///
/// Traces made before an update are reused afterwards; that first-order
/// staleness is the usual online truncated-BPTT compromise.
#[allow(clippy::too_many_arguments)]
pub(crate) fn chain_online_epoch<'a, I>(
    params: &mut LstmParams,
    w_hat: &mut [f64],
    inputs: I,
    targets: &[Option<f64>],
    lr: f64,
    horizon: usize,
    clip_norm: Option<f64>,
    convention: CountConvention,
) -> (f64, usize, MultCounter, bool)
where
    I: Iterator<Item = Option<&'a [f64]>>,
{
    let q = params.hidden_size();
    let width = params.input_size();
    let mut counter = MultCounter::new(convention);
    let mut state = LstmState::zeros(q);
    let mut traces: Vec<StepTrace> = Vec::new();
    let mut sq_err_sum = 0.0;
    let mut n_targets = 0usize;
    let mut clipped = false;
    for (slot, input) in inputs.enumerate() {
        if let Some(x) = input {
            let (next, trace) = cell_forward(params, x, &state);
            counter.add_cell(q, width);
            state = next;
            traces.push(trace);
        }
        counter.add_combination(q as u64 + 1);
        let pred = head_predict(w_hat, &state.h);
        if let Some(d) = targets[slot] {
            sq_err_sum += (d - pred) * (d - pred);
            n_targets += 1;
            let dd = pred - d;
            let mut dw_hat = vec![0.0; q + 1];
            for j in 0..q {
                dw_hat[j] = dd * state.h[j];
            }
            dw_hat[q] = dd;
            let calls = traces.len();
            let grads = if calls > 0 {
                let mut dh = vec![0.0; q];
                let mut dc = vec![0.0; q];
                for j in 0..q {
                    dh[j] = dd * w_hat[j];
                }
                let mut g = LstmParams::zeros(q, width);
                let stop = calls.saturating_sub(horizon);
                for k in (stop + 1..=calls).rev() {
                    let (gk, _dx, dh_prev, dc_prev) = cell_backward(params, &traces[k - 1], &dh, &dc);
                    g.add_assign(&gk);
                    dh = dh_prev;
                    dc = dc_prev;
                }
                g
            } else {
                LstmParams::zeros(q, width)
            };
            let norm_sq: f64 = grads.norm_sq() + dw_hat.iter().map(|v| v * v).sum::<f64>();
            let mut scale = 1.0;
            if let Some(max) = clip_norm {
                let norm = norm_sq.sqrt();
                if norm > max {
                    scale = max / norm;
                    clipped = true;
                }
            }
            for (t, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                for (tv, gv) in t.data_mut().iter_mut().zip(g.data()) {
                    *tv -= lr * scale * gv;
                }
            }
            for (wv, gv) in w_hat.iter_mut().zip(&dw_hat) {
                *wv -= lr * scale * gv;
            }
        }
    }
    (sq_err_sum, n_targets, counter, clipped)
}
