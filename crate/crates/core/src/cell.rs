//! The LSTM cell: forward step and hand-derived backward step.
//!
//! No peephole connections. Biases live in the last column of each input
//! weight matrix (the input is implicitly augmented with a trailing 1); the
//! recurrent matrices carry no bias. Gradients are derived by hand and
//! certified against central finite differences in the test tree.

use serde::{Deserialize, Serialize};

use crate::numeric::{affine, dot, sigmoid_vec, tanh_vec, Matrix, Rng};

/// Weights of one LSTM cell. Input matrices are q×(m+1), recurrent q×q.
///
/// The same struct carries gradients, which mirror the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub wz: Matrix,
    pub wi: Matrix,
    pub wf: Matrix,
    pub wo: Matrix,
    pub rz: Matrix,
    pub ri: Matrix,
    pub rf: Matrix,
    pub ro: Matrix,
}

impl LstmParams {
    /// Gaussian-initialized parameters. Matrices are drawn in declaration
    /// order (wz, wi, wf, wo, rz, ri, rf, ro), each row-major.
    pub fn init(rng: &mut Rng, hidden: usize, input: usize, variance: f64) -> Self {
        LstmParams {
            wz: Matrix::from_gaussian(rng, hidden, input + 1, variance),
            wi: Matrix::from_gaussian(rng, hidden, input + 1, variance),
            wf: Matrix::from_gaussian(rng, hidden, input + 1, variance),
            wo: Matrix::from_gaussian(rng, hidden, input + 1, variance),
            rz: Matrix::from_gaussian(rng, hidden, hidden, variance),
            ri: Matrix::from_gaussian(rng, hidden, hidden, variance),
            rf: Matrix::from_gaussian(rng, hidden, hidden, variance),
            ro: Matrix::from_gaussian(rng, hidden, hidden, variance),
        }
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams {
            wz: Matrix::zeros(hidden, input + 1),
            wi: Matrix::zeros(hidden, input + 1),
            wf: Matrix::zeros(hidden, input + 1),
            wo: Matrix::zeros(hidden, input + 1),
            rz: Matrix::zeros(hidden, hidden),
            ri: Matrix::zeros(hidden, hidden),
            rf: Matrix::zeros(hidden, hidden),
            ro: Matrix::zeros(hidden, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.wz.rows()
    }

    /// Input width m (bias column excluded).
    pub fn input_size(&self) -> usize {
        self.wz.cols() - 1
    }

    pub fn tensors(&self) -> [&Matrix; 8] {
        [
            &self.wz, &self.wi, &self.wf, &self.wo, &self.rz, &self.ri, &self.rf, &self.ro,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 8] {
        [
            &mut self.wz,
            &mut self.wi,
            &mut self.wf,
            &mut self.wo,
            &mut self.rz,
            &mut self.ri,
            &mut self.rf,
            &mut self.ro,
        ]
    }

    pub fn add_assign(&mut self, other: &LstmParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.tensors().iter().map(|t| t.norm_sq()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// The (c, h) pair of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// Everything cached by one forward step; replaying the state equations on
/// the cached gates reproduces (c, h) bit-exactly.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One forward step:
/// z = tanh(Wz·\[x;1\] + Rz·h), gates i/f/o via sigmoid, c = i⊙z + f⊙c_prev,
/// h = o⊙tanh(c).
pub fn cell_forward(p: &LstmParams, x: &[f64], s: &LstmState) -> (LstmState, StepTrace) {
    let q = p.hidden_size();
    assert!(
        s.h.len() == q && s.c.len() == q,
        "state size mismatch: params have q={q}, state has h={}, c={}",
        s.h.len(),
        s.c.len()
    );
    let mut az = affine(&p.wz, x);
    let mut ai = affine(&p.wi, x);
    let mut af = affine(&p.wf, x);
    let mut ao = affine(&p.wo, x);
    for (a, r) in az.iter_mut().zip(p.rz.mul_vec(&s.h)) {
        *a += r;
    }
    for (a, r) in ai.iter_mut().zip(p.ri.mul_vec(&s.h)) {
        *a += r;
    }
    for (a, r) in af.iter_mut().zip(p.rf.mul_vec(&s.h)) {
        *a += r;
    }
    for (a, r) in ao.iter_mut().zip(p.ro.mul_vec(&s.h)) {
        *a += r;
    }
    let z = tanh_vec(&az);
    let i = sigmoid_vec(&ai);
    let f = sigmoid_vec(&af);
    let o = sigmoid_vec(&ao);
    let mut c = vec![0.0; q];
    for j in 0..q {
        c[j] = i[j] * z[j] + f[j] * s.c[j];
    }
    let tanh_c = tanh_vec(&c);
    let mut h = vec![0.0; q];
    for j in 0..q {
        h[j] = o[j] * tanh_c[j];
    }
    let state = LstmState { c: c.clone(), h: h.clone() };
    let trace = StepTrace {
        x: x.to_vec(),
        h_prev: s.h.clone(),
        c_prev: s.c.clone(),
        z,
        i,
        f,
        o,
        c,
        tanh_c,
        h,
    };
    (state, trace)
}

/// Backward through one traced step. `dh` and `dc` are the loss gradients
/// w.r.t. the step's output and cell state. Returns the parameter gradients
/// plus the gradients flowing to the input and the previous state.
pub fn cell_backward(
    p: &LstmParams,
    trace: &StepTrace,
    dh: &[f64],
    dc_in: &[f64],
) -> (LstmParams, Vec<f64>, Vec<f64>, Vec<f64>) {
    let q = p.hidden_size();
    let m = p.input_size();
    assert!(
        trace.x.len() == m && trace.h_prev.len() == q,
        "trace shape mismatch: params are q={q}, m={m}; trace has x={}, h={}",
        trace.x.len(),
        trace.h_prev.len()
    );

    let mut da_o = vec![0.0; q];
    let mut dc = vec![0.0; q];
    for j in 0..q {
        let do_j = dh[j] * trace.tanh_c[j];
        da_o[j] = do_j * trace.o[j] * (1.0 - trace.o[j]);
        dc[j] = dc_in[j] + dh[j] * trace.o[j] * (1.0 - trace.tanh_c[j] * trace.tanh_c[j]);
    }
    let mut da_i = vec![0.0; q];
    let mut da_z = vec![0.0; q];
    let mut da_f = vec![0.0; q];
    let mut dc_prev = vec![0.0; q];
    for j in 0..q {
        da_i[j] = dc[j] * trace.z[j] * trace.i[j] * (1.0 - trace.i[j]);
        da_z[j] = dc[j] * trace.i[j] * (1.0 - trace.z[j] * trace.z[j]);
        da_f[j] = dc[j] * trace.c_prev[j] * trace.f[j] * (1.0 - trace.f[j]);
        dc_prev[j] = dc[j] * trace.f[j];
    }

    let mut grads = LstmParams::zeros(q, m);
    let mut x_aug = trace.x.clone();
    x_aug.push(1.0);
    grads.wz.add_outer(&da_z, &x_aug);
    grads.wi.add_outer(&da_i, &x_aug);
    grads.wf.add_outer(&da_f, &x_aug);
    grads.wo.add_outer(&da_o, &x_aug);
    grads.rz.add_outer(&da_z, &trace.h_prev);
    grads.ri.add_outer(&da_i, &trace.h_prev);
    grads.rf.add_outer(&da_f, &trace.h_prev);
    grads.ro.add_outer(&da_o, &trace.h_prev);

    let mut dx = vec![0.0; m];
    let mut dh_prev = vec![0.0; q];
    for (w, da) in [(&p.wz, &da_z), (&p.wi, &da_i), (&p.wf, &da_f), (&p.wo, &da_o)] {
        let full = w.t_mul_vec(da);
        for j in 0..m {
            dx[j] += full[j];
        }
    }
    for (r, da) in [(&p.rz, &da_z), (&p.ri, &da_i), (&p.rf, &da_f), (&p.ro, &da_o)] {
        for (acc, v) in dh_prev.iter_mut().zip(r.t_mul_vec(da)) {
            *acc += v;
        }
    }
    (grads, dx, dh_prev, dc_prev)
}

/// d̂ = wᵀ[h; 1]: the linear head with its bias in the last coordinate.
pub fn head_predict(w_hat: &[f64], h: &[f64]) -> f64 {
    assert!(
        w_hat.len() == h.len() + 1,
        "head weight length {} does not match hidden size {} + 1",
        w_hat.len(),
        h.len()
    );
    dot(&w_hat[..h.len()], h) + w_hat[h.len()]
}
