//! A second, independently written LSTM forward pass: plain scalar loops,
//! no shared helpers. The library implementation must match it bit for bit,
//! which pins both the equations and the floating-point evaluation order.

#![allow(clippy::needless_range_loop)]

use treelstm_core::{cell_forward, LstmParams, LstmState, Matrix, Rng};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One cell step written out longhand. Accumulation order mirrors the
/// contract: input-weight dot (bias last), then the recurrent dot added on.
fn oracle_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let q = p.hidden_size();
    let m = p.input_size();
    let gate_input = |w: &Matrix, r: &Matrix, row: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..m {
            acc += w.at(row, j) * x[j];
        }
        acc += w.at(row, m);
        let mut rec = 0.0;
        for j in 0..q {
            rec += r.at(row, j) * h_prev[j];
        }
        acc + rec
    };
    let mut c = vec![0.0; q];
    let mut h = vec![0.0; q];
    for row in 0..q {
        let z = gate_input(&p.wz, &p.rz, row).tanh();
        let i = sig(gate_input(&p.wi, &p.ri, row));
        let f = sig(gate_input(&p.wf, &p.rf, row));
        let o = sig(gate_input(&p.wo, &p.ro, row));
        c[row] = i * z + f * c_prev[row];
        h[row] = o * c[row].tanh();
    }
    (c, h)
}

fn assert_bits_eq(a: &[f64], b: &[f64], what: &str) {
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        assert_eq!(x.to_bits(), y.to_bits(), "{what}[{j}]: {x} vs {y}");
    }
}

#[test]
fn seeded_single_step_matches_oracle_bitwise() {
    let p = LstmParams::init(&mut Rng::new(42), 2, 1, 1e-1);
    let s0 = LstmState::zeros(2);
    let x = [1.0];
    let (state, _) = cell_forward(&p, &x, &s0);
    let (c, h) = oracle_step(&p, &x, &s0.h, &s0.c);
    assert_bits_eq(&state.c, &c, "c");
    assert_bits_eq(&state.h, &h, "h");
}

#[test]
fn chained_steps_match_oracle_bitwise() {
    let p = LstmParams::init(&mut Rng::new(7), 3, 2, 1e-1);
    let mut rng = Rng::new(99);
    let mut state = LstmState::zeros(3);
    let mut oc = vec![0.0; 3];
    let mut oh = vec![0.0; 3];
    for _ in 0..25 {
        let x: Vec<f64> = (0..2).map(|_| rng.gaussian(1.0)).collect();
        let (next, _) = cell_forward(&p, &x, &state);
        let (c, h) = oracle_step(&p, &x, &oh, &oc);
        assert_bits_eq(&next.c, &c, "c");
        assert_bits_eq(&next.h, &h, "h");
        state = next;
        oc = c;
        oh = h;
    }
}
