//! The tree regressor: a main LSTM over pre-window history plus up to 2^L−1
//! presence-pattern-indexed leaf LSTMs over the sliding window, combined by a
//! masked softmax and a linear head.
//!
//! Grid convention: slots are 0-based here; predictions are emitted for every
//! window end e ∈ [L, N−1] (the 1-based m ∈ [L+1, N] of the usual statement).
//! At step e the main network consumes slot e−L if present, its state then
//! reflects every existing input at slots ≤ e−L, and the active leaves replay
//! the window's present inputs from that state. After the last step the main
//! network drains the remaining window inputs so it consumes each existing
//! input exactly once per pass.

use std::collections::BTreeMap;

use crate::cell::{cell_backward, cell_forward, head_predict, LstmParams, LstmState, StepTrace};
use crate::chain::{
    bptt_chain, chain_backward, chain_forward, chain_online_epoch, ChainContribs, ChainRun,
};
use crate::complexity::{CountConvention, MultCounter};
use crate::data::MaskedSequence;
use crate::error::{ConfigError, DataError};
use crate::numeric::{dot, masked_softmax, Rng};
use crate::presence::{PresencePattern, MAX_WINDOW};

/// Which leaf networks exist. An empty explicit list degenerates the model to
/// a plain LSTM regressor on the existing inputs (no window lag, prediction
/// at every slot) — the main network is then the whole architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeafSelection {
    Full,
    Explicit(Vec<usize>),
}

/// One combination weight vector per network, or a single shared one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    PerNetwork,
    Shared,
}

/// Which main state seeds the leaves at step e: the state after consuming
/// slot e−L (default, the prose reading) or the state just before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafSeed {
    WindowEdge,
    PreWindowEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLstmConfig {
    pub window: usize,
    pub hidden: usize,
    pub input: usize,
    pub leaf_selection: LeafSelection,
    pub combination: Combination,
    pub bptt_horizon: usize,
    pub leaf_seed: LeafSeed,
    pub init_variance: f64,
}

impl TreeLstmConfig {
    pub fn new(window: usize, hidden: usize, input: usize) -> Self {
        TreeLstmConfig {
            window,
            hidden,
            input,
            leaf_selection: LeafSelection::Full,
            combination: Combination::PerNetwork,
            bptt_horizon: 64,
            leaf_seed: LeafSeed::WindowEdge,
            init_variance: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window < 1 || self.window > MAX_WINDOW {
            return Err(ConfigError::InvalidWindow(self.window));
        }
        if self.hidden < 1 || self.input < 1 {
            return Err(ConfigError::InvalidSizes {
                q: self.hidden,
                m: self.input,
            });
        }
        if self.bptt_horizon < 1 {
            return Err(ConfigError::InvalidHorizon);
        }
        if self.init_variance <= 0.0 {
            return Err(ConfigError::InvalidVariance(self.init_variance));
        }
        if let LeafSelection::Explicit(list) = &self.leaf_selection {
            let max = 1usize << self.window;
            for &i in list {
                if i == 0 || i >= max {
                    return Err(ConfigError::LeafIndexOutOfRange {
                        index: i,
                        max,
                        l: self.window,
                    });
                }
            }
        }
        Ok(())
    }

    /// Resolved, sorted leaf indices.
    pub fn leaf_indices(&self) -> Vec<usize> {
        match &self.leaf_selection {
            LeafSelection::Full => (1..(1usize << self.window)).collect(),
            LeafSelection::Explicit(list) => {
                let mut v = list.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    /// Length of the combination feature [p_current; p_network; h̄].
    pub fn tilde_len(&self) -> usize {
        self.hidden + 2 * self.window
    }
}

/// Per-network or shared combination weights; also carries their gradients.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum CombinationWeights {
    PerNetwork(BTreeMap<usize, Vec<f64>>),
    Shared(Vec<f64>),
}

impl CombinationWeights {
    fn get(&self, net: usize) -> &[f64] {
        match self {
            CombinationWeights::PerNetwork(map) => map
                .get(&net)
                .unwrap_or_else(|| panic!("no combination weights for network {net}")),
            CombinationWeights::Shared(v) => v,
        }
    }

    fn add(&mut self, net: usize, grad: &[f64]) {
        let target = match self {
            CombinationWeights::PerNetwork(map) => map
                .get_mut(&net)
                .unwrap_or_else(|| panic!("no combination weights for network {net}")),
            CombinationWeights::Shared(v) => v,
        };
        for (a, b) in target.iter_mut().zip(grad) {
            *a += b;
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            CombinationWeights::PerNetwork(map) => {
                map.values().flat_map(|v| v.iter()).map(|x| x * x).sum()
            }
            CombinationWeights::Shared(v) => v.iter().map(|x| x * x).sum(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            CombinationWeights::PerNetwork(map) => {
                map.values().all(|v| v.iter().all(|x| x.is_finite()))
            }
            CombinationWeights::Shared(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLstmModel {
    pub config: TreeLstmConfig,
    pub main: LstmParams,
    pub leaves: BTreeMap<usize, LstmParams>,
    pub w_tilde: CombinationWeights,
    pub w_hat: Vec<f64>,
}

/// Gradients mirroring the model layout.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub main: LstmParams,
    pub leaves: BTreeMap<usize, LstmParams>,
    pub w_tilde: CombinationWeights,
    pub w_hat: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros(model: &TreeLstmModel) -> Self {
        let cfg = &model.config;
        let leaves = model
            .leaves
            .keys()
            .map(|&i| (i, LstmParams::zeros(cfg.hidden, cfg.input)))
            .collect();
        let w_tilde = match &model.w_tilde {
            CombinationWeights::PerNetwork(map) => CombinationWeights::PerNetwork(
                map.keys().map(|&i| (i, vec![0.0; cfg.tilde_len()])).collect(),
            ),
            CombinationWeights::Shared(_) => CombinationWeights::Shared(vec![0.0; cfg.tilde_len()]),
        };
        ModelGrads {
            main: LstmParams::zeros(cfg.hidden, cfg.input),
            leaves,
            w_tilde,
            w_hat: vec![0.0; cfg.hidden + 1],
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.main.norm_sq()
            + self.leaves.values().map(|p| p.norm_sq()).sum::<f64>()
            + self.w_tilde.norm_sq()
            + self.w_hat.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.main.is_finite()
            && self.leaves.values().all(|p| p.is_finite())
            && self.w_tilde.is_finite()
            && self.w_hat.iter().all(|x| x.is_finite())
    }

    pub fn w_tilde_grad(&self, net: usize) -> &[f64] {
        self.w_tilde.get(net)
    }
}

/// Prediction artifacts of one emitted step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// 0-based grid index of the newest window slot.
    pub slot: usize,
    pub pattern: PresencePattern,
    /// Combination weights over all 2^L network slots; exactly 0 outside the
    /// active, configured set.
    pub alpha: Vec<f64>,
    pub h_hat: Vec<f64>,
    pub d_hat: f64,
}

#[derive(Debug, Clone)]
struct LeafRun {
    net: usize,
    traces: Vec<StepTrace>,
}

#[derive(Debug, Clone)]
struct TreeStep {
    out: StepOutput,
    /// Active ∩ configured network indices (always starts with 0).
    nets: Vec<usize>,
    /// Final outputs h̄ per entry of `nets`.
    h_bars: Vec<Vec<f64>>,
    /// Combination features per entry of `nets`.
    h_tildes: Vec<Vec<f64>>,
    leaf_runs: Vec<LeafRun>,
    /// Main cell calls made before/after this step consumed its edge slot.
    calls_before: usize,
    calls_after: usize,
}

#[derive(Debug, Clone)]
enum RunData {
    Windowed {
        steps: Vec<TreeStep>,
        main_traces: Vec<StepTrace>,
        main_states: Vec<LstmState>,
    },
    Plain(ChainRun),
}

/// Retained forward pass over one sequence.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    outputs: Vec<StepOutput>,
    data: RunData,
    final_state: LstmState,
    counter: MultCounter,
    main_cell_calls: u64,
    leaf_cell_calls: u64,
}

impl SequenceRun {
    pub fn outputs(&self) -> &[StepOutput] {
        &self.outputs
    }

    pub fn final_state(&self) -> &LstmState {
        &self.final_state
    }

    pub fn counter(&self) -> &MultCounter {
        &self.counter
    }

    pub fn main_cell_calls(&self) -> u64 {
        self.main_cell_calls
    }

    pub fn leaf_cell_calls(&self) -> u64 {
        self.leaf_cell_calls
    }

    /// Main-network states after each consumed input, in consumption order.
    pub fn main_states(&self) -> Vec<LstmState> {
        match &self.data {
            RunData::Windowed { main_states, .. } => main_states.clone(),
            RunData::Plain(run) => run.states.clone(),
        }
    }
}

/// Presence pattern of the window ending at 0-based slot `end` (inclusive).
/// Requires end+1 ≥ window and end < len.
pub fn window_pattern(seq: &MaskedSequence, end: usize, window: usize) -> PresencePattern {
    assert!(
        end + 1 >= window && end < seq.len(),
        "window end {end} out of range for L={window}, N={}",
        seq.len()
    );
    let bits: Vec<u8> = (0..window)
        .map(|j| seq.is_present(end + 1 - window + j) as u8)
        .collect();
    PresencePattern::from_bits(&bits)
}

/// Like [`window_pattern`] but tolerates ends earlier than a full window by
/// padding the oldest positions with zeros.
fn window_pattern_padded(seq: &MaskedSequence, end: usize, window: usize) -> PresencePattern {
    let bits: Vec<u8> = (0..window)
        .map(|j| {
            let pos = end as isize + 1 - window as isize + j as isize;
            if pos < 0 {
                0
            } else {
                seq.is_present(pos as usize) as u8
            }
        })
        .collect();
    PresencePattern::from_bits(&bits)
}

struct StepGrads {
    w_hat: Vec<f64>,
    w_tilde: Vec<(usize, Vec<f64>)>,
    leaves: Vec<(usize, LstmParams)>,
    /// (main call index, dh, dc) contributions.
    main: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl TreeLstmModel {
    /// Gaussian-initialized model. Draw order is fixed: main cell, then
    /// leaves ascending, then combination weights (network 0 first), then the
    /// head.
    pub fn init(config: TreeLstmConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let variance = config.init_variance;
        let main = LstmParams::init(&mut rng, config.hidden, config.input, variance);
        let mut leaves = BTreeMap::new();
        for i in config.leaf_indices() {
            leaves.insert(i, LstmParams::init(&mut rng, config.hidden, config.input, variance));
        }
        let tilde_len = config.tilde_len();
        let mut draw_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gaussian(variance)).collect() };
        let w_tilde = match config.combination {
            Combination::PerNetwork => {
                let mut map = BTreeMap::new();
                map.insert(0, draw_vec(tilde_len));
                for i in config.leaf_indices() {
                    map.insert(i, draw_vec(tilde_len));
                }
                CombinationWeights::PerNetwork(map)
            }
            Combination::Shared => CombinationWeights::Shared(draw_vec(tilde_len)),
        };
        let w_hat = draw_vec(config.hidden + 1);
        Ok(TreeLstmModel {
            config,
            main,
            leaves,
            w_tilde,
            w_hat,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.leaves.is_empty()
    }

    fn check_width(&self, seq: &MaskedSequence) -> Result<(), DataError> {
        if seq.width() != self.config.input {
            return Err(DataError::WidthMismatch {
                expected: self.config.input,
                found: seq.width(),
            });
        }
        Ok(())
    }

    /// Runs one forward pass, retaining traces for backpropagation.
    pub fn run_sequence(
        &self,
        seq: &MaskedSequence,
        convention: CountConvention,
    ) -> Result<SequenceRun, DataError> {
        self.check_width(seq)?;
        if self.is_degenerate() {
            return Ok(self.run_plain(seq, convention));
        }
        let l = self.config.window;
        let q = self.config.hidden;
        let n = seq.len();
        if n < l + 1 {
            return Err(DataError::SequenceTooShort {
                needed: l + 1,
                found: n,
            });
        }
        let mut counter = MultCounter::new(convention);
        let mut state = LstmState::zeros(q);
        let mut main_traces: Vec<StepTrace> = Vec::new();
        let mut main_states: Vec<LstmState> = Vec::new();
        let mut steps = Vec::with_capacity(n - l);
        let mut leaf_cell_calls = 0u64;

        for end in l..n {
            let edge = end - l;
            let calls_before = main_traces.len();
            let prev_state = state.clone();
            if let Some(x) = seq.input(edge) {
                let (next, trace) = cell_forward(&self.main, x, &state);
                counter.add_cell(q, self.config.input);
                state = next;
                main_traces.push(trace);
                main_states.push(state.clone());
            }
            let calls_after = main_traces.len();
            let seed_state = match self.config.leaf_seed {
                LeafSeed::WindowEdge => &state,
                LeafSeed::PreWindowEdge => &prev_state,
            };
            let step = self.execute_step(
                seq,
                end,
                &state,
                seed_state,
                calls_before,
                calls_after,
                &mut counter,
                &mut leaf_cell_calls,
            );
            steps.push(step);
        }

        // Drain the window's tail so every existing input is consumed once.
        for slot in (n - l)..n {
            if let Some(x) = seq.input(slot) {
                let (next, trace) = cell_forward(&self.main, x, &state);
                counter.add_cell(q, self.config.input);
                state = next;
                main_traces.push(trace);
                main_states.push(state.clone());
            }
        }

        let outputs = steps.iter().map(|s| s.out.clone()).collect();
        let main_cell_calls = main_traces.len() as u64;
        Ok(SequenceRun {
            outputs,
            data: RunData::Windowed {
                steps,
                main_traces,
                main_states,
            },
            final_state: state,
            counter,
            main_cell_calls,
            leaf_cell_calls,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn execute_step(
        &self,
        seq: &MaskedSequence,
        end: usize,
        main_state: &LstmState,
        seed_state: &LstmState,
        calls_before: usize,
        calls_after: usize,
        counter: &mut MultCounter,
        leaf_cell_calls: &mut u64,
    ) -> TreeStep {
        let l = self.config.window;
        let q = self.config.hidden;
        let pattern = window_pattern(seq, end, l);
        let active = pattern.active_set();
        let mut nets = Vec::with_capacity(active.len());
        for net in active.iter() {
            if net == 0 || self.leaves.contains_key(&net) {
                nets.push(net);
            }
        }

        let mut h_bars: Vec<Vec<f64>> = Vec::with_capacity(nets.len());
        let mut leaf_runs = Vec::new();
        for &net in &nets {
            if net == 0 {
                h_bars.push(main_state.h.clone());
                continue;
            }
            let leaf_pattern = PresencePattern::from_index(net, l);
            let params = &self.leaves[&net];
            let mut leaf_state = seed_state.clone();
            let mut traces = Vec::with_capacity(leaf_pattern.ones());
            for offset in leaf_pattern.leaf_positions() {
                let slot = end + 1 - l + offset;
                let x = seq
                    .input(slot)
                    .expect("active leaf pattern covers only present slots");
                let (next, trace) = cell_forward(params, x, &leaf_state);
                counter.add_cell(q, self.config.input);
                *leaf_cell_calls += 1;
                leaf_state = next;
                traces.push(trace);
            }
            h_bars.push(leaf_state.h);
            leaf_runs.push(LeafRun { net, traces });
        }

        let pattern_bits = pattern.bits_f64();
        let mut h_tildes = Vec::with_capacity(nets.len());
        let mut logits = vec![0.0; 1usize << l];
        for (pos, &net) in nets.iter().enumerate() {
            let net_pattern = PresencePattern::from_index(net, l);
            let mut h_tilde = Vec::with_capacity(self.config.tilde_len());
            h_tilde.extend_from_slice(&pattern_bits);
            h_tilde.extend(net_pattern.bits_f64());
            h_tilde.extend_from_slice(&h_bars[pos]);
            logits[net] = dot(self.w_tilde.get(net), &h_tilde);
            counter.add_combination(self.config.tilde_len() as u64);
            h_tildes.push(h_tilde);
        }
        let alpha = masked_softmax(&logits, &nets);

        let mut h_hat = vec![0.0; q];
        for (pos, &net) in nets.iter().enumerate() {
            let a = alpha[net];
            for j in 0..q {
                h_hat[j] += a * h_bars[pos][j];
            }
            counter.add_combination(q as u64);
        }
        let d_hat = head_predict(&self.w_hat, &h_hat);
        counter.add_combination(q as u64 + 1);

        TreeStep {
            out: StepOutput {
                slot: end,
                pattern,
                alpha,
                h_hat,
                d_hat,
            },
            nets,
            h_bars,
            h_tildes,
            leaf_runs,
            calls_before,
            calls_after,
        }
    }

    fn run_plain(&self, seq: &MaskedSequence, convention: CountConvention) -> SequenceRun {
        let q = self.config.hidden;
        let l = self.config.window;
        let run = chain_forward(
            &self.main,
            &self.w_hat,
            seq.slots().iter().map(|s| s.input.as_deref()),
            convention,
        );
        let outputs = run
            .preds
            .iter()
            .enumerate()
            .map(|(slot, &d_hat)| {
                let mut alpha = vec![0.0; 1usize << l];
                alpha[0] = 1.0;
                let idx = run.calls_at_slot[slot];
                let h = if idx == 0 {
                    vec![0.0; q]
                } else {
                    run.states[idx - 1].h.clone()
                };
                StepOutput {
                    slot,
                    pattern: window_pattern_padded(seq, slot, l),
                    alpha,
                    h_hat: h,
                    d_hat,
                }
            })
            .collect();
        let final_state = run.final_state(q);
        let counter = run.counter;
        let main_cell_calls = run.traces.len() as u64;
        SequenceRun {
            outputs,
            data: RunData::Plain(run),
            final_state,
            counter,
            main_cell_calls,
            leaf_cell_calls: 0,
        }
    }

    /// Convenience forward pass returning only the step outputs.
    pub fn predict(&self, seq: &MaskedSequence) -> Result<Vec<StepOutput>, DataError> {
        Ok(self
            .run_sequence(seq, CountConvention::ExcludeBias)?
            .outputs
            .clone())
    }

    fn step_backward(&self, step: &TreeStep, dd: f64) -> StepGrads {
        let q = self.config.hidden;
        let l = self.config.window;
        let mut w_hat = vec![0.0; q + 1];
        for j in 0..q {
            w_hat[j] = dd * step.out.h_hat[j];
        }
        w_hat[q] = dd;
        let mut dh_hat = vec![0.0; q];
        for j in 0..q {
            dh_hat[j] = dd * self.w_hat[j];
        }

        // Softmax combination backward over the active networks.
        let k = step.nets.len();
        let mut dalpha = vec![0.0; k];
        for (pos, _) in step.nets.iter().enumerate() {
            dalpha[pos] = dot(&dh_hat, &step.h_bars[pos]);
        }
        let alphas: Vec<f64> = step.nets.iter().map(|&net| step.out.alpha[net]).collect();
        let mix: f64 = alphas.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let mut w_tilde = Vec::with_capacity(k);
        let mut leaves = Vec::new();
        let mut main = Vec::new();
        for (pos, &net) in step.nets.iter().enumerate() {
            let dlogit = alphas[pos] * (dalpha[pos] - mix);
            let mut grad = vec![0.0; self.config.tilde_len()];
            for (g, h) in grad.iter_mut().zip(&step.h_tildes[pos]) {
                *g = dlogit * h;
            }
            w_tilde.push((net, grad));
            // dh̄ = α·dĥ + dlogit·(h̄ block of w̃).
            let w = self.w_tilde.get(net);
            let mut dh_bar = vec![0.0; q];
            for j in 0..q {
                dh_bar[j] = alphas[pos] * dh_hat[j] + dlogit * w[2 * l + j];
            }
            if net == 0 {
                if step.calls_after > 0 {
                    main.push((step.calls_after, dh_bar, vec![0.0; q]));
                }
            } else {
                let leaf_run = step
                    .leaf_runs
                    .iter()
                    .find(|r| r.net == net)
                    .expect("leaf run recorded for active leaf");
                let params = &self.leaves[&net];
                let mut grads = LstmParams::zeros(q, self.config.input);
                let mut dh = dh_bar;
                let mut dc = vec![0.0; q];
                for trace in leaf_run.traces.iter().rev() {
                    let (g, _dx, dh_prev, dc_prev) = cell_backward(params, trace, &dh, &dc);
                    grads.add_assign(&g);
                    dh = dh_prev;
                    dc = dc_prev;
                }
                leaves.push((net, grads));
                let seed_idx = match self.config.leaf_seed {
                    LeafSeed::WindowEdge => step.calls_after,
                    LeafSeed::PreWindowEdge => step.calls_before,
                };
                if seed_idx > 0 {
                    main.push((seed_idx, dh, dc));
                }
            }
        }
        StepGrads {
            w_hat,
            w_tilde,
            leaves,
            main,
        }
    }

    /// Backpropagates per-step prediction gradients (aligned with the run's
    /// outputs) through the whole pass. Leaf recurrences unroll fully; the
    /// main recurrence unrolls at most `bptt_horizon` steps per loss site.
    pub fn backward(&self, run: &SequenceRun, dpred: &[f64]) -> ModelGrads {
        assert_eq!(
            dpred.len(),
            run.outputs.len(),
            "prediction gradient count must match emitted steps"
        );
        let mut grads = ModelGrads::zeros(self);
        match &run.data {
            RunData::Plain(chain_run) => {
                let (main, w_hat) = chain_backward(
                    &self.main,
                    &self.w_hat,
                    chain_run,
                    dpred,
                    self.config.bptt_horizon,
                );
                grads.main = main;
                grads.w_hat = w_hat;
            }
            RunData::Windowed {
                steps, main_traces, ..
            } => {
                let q = self.config.hidden;
                let mut contribs = ChainContribs::zeros(main_traces.len(), q);
                for (step, &dd) in steps.iter().zip(dpred).rev() {
                    if dd == 0.0 {
                        continue;
                    }
                    let sg = self.step_backward(step, dd);
                    for (a, b) in grads.w_hat.iter_mut().zip(&sg.w_hat) {
                        *a += b;
                    }
                    for (net, g) in &sg.w_tilde {
                        grads.w_tilde.add(*net, g);
                    }
                    for (net, g) in &sg.leaves {
                        grads.leaves.get_mut(net).expect("configured leaf").add_assign(g);
                    }
                    for (idx, dh, dc) in &sg.main {
                        contribs.add_dh(*idx, dh);
                        contribs.add_dc(*idx, dc);
                    }
                }
                grads.main = bptt_chain(&self.main, main_traces, &contribs, self.config.bptt_horizon);
            }
        }
        grads
    }

    /// θ ← θ + factor·g for every trainable tensor.
    pub fn apply_update(&mut self, grads: &ModelGrads, factor: f64) {
        for (t, g) in self.main.tensors_mut().into_iter().zip(grads.main.tensors()) {
            for (tv, gv) in t.data_mut().iter_mut().zip(g.data()) {
                *tv += factor * gv;
            }
        }
        for (net, leaf) in self.leaves.iter_mut() {
            let g = &grads.leaves[net];
            for (t, gt) in leaf.tensors_mut().into_iter().zip(g.tensors()) {
                for (tv, gv) in t.data_mut().iter_mut().zip(gt.data()) {
                    *tv += factor * gv;
                }
            }
        }
        match (&mut self.w_tilde, &grads.w_tilde) {
            (CombinationWeights::PerNetwork(map), CombinationWeights::PerNetwork(gmap)) => {
                for (net, w) in map.iter_mut() {
                    for (wv, gv) in w.iter_mut().zip(&gmap[net]) {
                        *wv += factor * gv;
                    }
                }
            }
            (CombinationWeights::Shared(w), CombinationWeights::Shared(g)) => {
                for (wv, gv) in w.iter_mut().zip(g) {
                    *wv += factor * gv;
                }
            }
            _ => panic!("combination weight layout mismatch between model and gradients"),
        }
        for (wv, gv) in self.w_hat.iter_mut().zip(&grads.w_hat) {
            *wv += factor * gv;
        }
    }

    /// Online (per-step) training pass; see the trainer for when this runs.
    pub(crate) fn online_epoch(
        &mut self,
        seq: &MaskedSequence,
        lr: f64,
        clip: Option<f64>,
        convention: CountConvention,
    ) -> Result<(f64, usize, MultCounter, bool), DataError> {
        self.check_width(seq)?;
        if self.is_degenerate() {
            let targets: Vec<Option<f64>> = seq.slots().iter().map(|s| s.target).collect();
            let inputs: Vec<Option<&[f64]>> = seq.slots().iter().map(|s| s.input.as_deref()).collect();
            return Ok(chain_online_epoch(
                &mut self.main,
                &mut self.w_hat,
                inputs.into_iter(),
                &targets,
                lr,
                self.config.bptt_horizon,
                clip,
                convention,
            ));
        }
        let l = self.config.window;
        let q = self.config.hidden;
        let n = seq.len();
        if n < l + 1 {
            return Err(DataError::SequenceTooShort {
                needed: l + 1,
                found: n,
            });
        }
        let horizon = self.config.bptt_horizon;
        let mut counter = MultCounter::new(convention);
        let mut state = LstmState::zeros(q);
        let mut main_traces: Vec<StepTrace> = Vec::new();
        let mut sq_err_sum = 0.0;
        let mut n_targets = 0usize;
        let mut clipped = false;
        let mut leaf_calls = 0u64;

        for end in l..n {
            let edge = end - l;
            let calls_before = main_traces.len();
            let prev_state = state.clone();
            if let Some(x) = seq.input(edge) {
                let (next, trace) = cell_forward(&self.main, x, &state);
                counter.add_cell(q, self.config.input);
                state = next;
                main_traces.push(trace);
            }
            let calls_after = main_traces.len();
            let seed_state = match self.config.leaf_seed {
                LeafSeed::WindowEdge => &state,
                LeafSeed::PreWindowEdge => &prev_state,
            };
            let step = self.execute_step(
                seq,
                end,
                &state,
                seed_state,
                calls_before,
                calls_after,
                &mut counter,
                &mut leaf_calls,
            );
            let Some(d) = seq.target(end) else { continue };
            sq_err_sum += (d - step.out.d_hat) * (d - step.out.d_hat);
            n_targets += 1;
            let dd = step.out.d_hat - d;
            let sg = self.step_backward(&step, dd);
            let mut grads = ModelGrads::zeros(self);
            grads.w_hat = sg.w_hat;
            for (net, g) in &sg.w_tilde {
                grads.w_tilde.add(*net, g);
            }
            for (net, g) in &sg.leaves {
                grads.leaves.get_mut(net).expect("configured leaf").add_assign(g);
            }
            if !sg.main.is_empty() {
                let top = sg.main.iter().map(|(i, _, _)| *i).max().unwrap();
                let stop = top.saturating_sub(horizon);
                let mut dh = vec![0.0; q];
                let mut dc = vec![0.0; q];
                for k in (stop + 1..=top).rev() {
                    for (idx, cdh, cdc) in &sg.main {
                        if *idx == k {
                            for (a, b) in dh.iter_mut().zip(cdh) {
                                *a += b;
                            }
                            for (a, b) in dc.iter_mut().zip(cdc) {
                                *a += b;
                            }
                        }
                    }
                    let (g, _dx, dh_prev, dc_prev) =
                        cell_backward(&self.main, &main_traces[k - 1], &dh, &dc);
                    grads.main.add_assign(&g);
                    dh = dh_prev;
                    dc = dc_prev;
                }
            }
            let mut scale = 1.0;
            if let Some(max) = clip {
                let norm = grads.norm_sq().sqrt();
                if norm > max {
                    scale = max / norm;
                    clipped = true;
                }
            }
            self.apply_update(&grads, -lr * scale);
        }
        for slot in (n - l)..n {
            if let Some(x) = seq.input(slot) {
                let (next, trace) = cell_forward(&self.main, x, &state);
                counter.add_cell(q, self.config.input);
                state = next;
                main_traces.push(trace);
            }
        }
        Ok((sq_err_sum, n_targets, counter, clipped))
    }

    /// Grows the window by one slot. Leaves whose new pattern starts with 0
    /// inherit the trained weights of the same index in this model; leaves
    /// with the new oldest slot present are freshly initialized. Inherited
    /// combination weights are zero-padded at the two new pattern positions.
    pub fn grow_window(&self, seed: u64) -> Result<TreeLstmModel, ConfigError> {
        let old_l = self.config.window;
        let new_l = old_l + 1;
        if new_l > MAX_WINDOW {
            return Err(ConfigError::InvalidWindow(new_l));
        }
        let half = 1usize << old_l;
        let q = self.config.hidden;
        let new_selection = match &self.config.leaf_selection {
            LeafSelection::Full => LeafSelection::Full,
            LeafSelection::Explicit(list) => {
                let mut v: Vec<usize> = list.clone();
                v.push(half); // pattern [1, 0…0]: only the new slot present
                for &i in list {
                    v.push(i + half);
                }
                v.sort_unstable();
                v.dedup();
                LeafSelection::Explicit(v)
            }
        };
        let config = TreeLstmConfig {
            window: new_l,
            leaf_selection: new_selection,
            ..self.config.clone()
        };
        config.validate()?;

        let mut rng = Rng::new(seed);
        let variance = config.init_variance;
        let mut leaves = BTreeMap::new();
        for i in config.leaf_indices() {
            let inherited = if i < half { self.leaves.get(&i) } else { None };
            let params = match inherited {
                Some(p) => p.clone(),
                None => LstmParams::init(&mut rng, q, config.input, variance),
            };
            leaves.insert(i, params);
        }
        let pad = |w: &[f64]| -> Vec<f64> {
            // [p_cur (L); p_net (L); h (q)] → [0; p_cur; 0; p_net; h].
            let mut out = Vec::with_capacity(w.len() + 2);
            out.push(0.0);
            out.extend_from_slice(&w[..old_l]);
            out.push(0.0);
            out.extend_from_slice(&w[old_l..]);
            out
        };
        let w_tilde = match &self.w_tilde {
            CombinationWeights::Shared(w) => CombinationWeights::Shared(pad(w)),
            CombinationWeights::PerNetwork(old) => {
                let mut map = BTreeMap::new();
                map.insert(
                    0,
                    old.get(&0).map(|w| pad(w)).unwrap_or_else(|| {
                        (0..config.tilde_len()).map(|_| rng.gaussian(variance)).collect()
                    }),
                );
                for i in config.leaf_indices() {
                    let inherited = if i < half { old.get(&i) } else { None };
                    let w = match inherited {
                        Some(w) => pad(w),
                        None => (0..config.tilde_len()).map(|_| rng.gaussian(variance)).collect(),
                    };
                    map.insert(i, w);
                }
                CombinationWeights::PerNetwork(map)
            }
        };
        Ok(TreeLstmModel {
            config,
            main: self.main.clone(),
            leaves,
            w_tilde,
            w_hat: self.w_hat.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.main.is_finite()
            && self.leaves.values().all(|p| p.is_finite())
            && self.w_tilde.is_finite()
            && self.w_hat.iter().all(|x| x.is_finite())
    }
}
