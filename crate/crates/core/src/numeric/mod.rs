//! Minimal dense linear algebra, activations, masked softmax, and a
//! finite-difference gradient oracle.
//!
//! All arithmetic is in f64. Dimension mismatches are programmer errors and
//! panic naming both shapes. Everything here is a pure function except [`Rng`].

mod rng;

pub use rng::Rng;

use serde::{Deserialize, Serialize};

/// Dense row-major matrix with explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from nested rows; panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            assert!(
                row.len() == c,
                "ragged matrix: row 0 has {c} entries, row {i} has {}",
                row.len()
            );
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// y = A·x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert!(
            x.len() == self.cols,
            "matrix-vector mismatch: {}x{} vs vector of length {}",
            self.rows,
            self.cols,
            x.len()
        );
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y[r] = acc;
        }
        y
    }

    /// y = Aᵀ·x.
    pub fn t_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert!(
            x.len() == self.rows,
            "transposed matrix-vector mismatch: {}x{} vs vector of length {}",
            self.rows,
            self.cols,
            x.len()
        );
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += xr * w;
            }
        }
        y
    }

    /// self += u·vᵀ (rank-one accumulate, used for weight gradients).
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        assert!(
            u.len() == self.rows && v.len() == self.cols,
            "outer-product mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            u.len(),
            v.len()
        );
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let ur = u[r];
            for (w, vv) in row.iter_mut().zip(v) {
                *w += ur * vv;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "matrix add mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

/// W·[x; 1]: affine map with the bias folded into the last matrix column.
/// `w` must have exactly `x.len() + 1` columns.
pub fn affine(w: &Matrix, x: &[f64]) -> Vec<f64> {
    assert!(
        w.cols() == x.len() + 1,
        "affine mismatch: matrix is {}x{}, input has length {} (need {} columns)",
        w.rows(),
        w.cols(),
        x.len(),
        x.len() + 1
    );
    let m = x.len();
    let mut y = vec![0.0; w.rows()];
    for r in 0..w.rows() {
        let row = &w.data[r * w.cols..(r + 1) * w.cols];
        let mut acc = 0.0;
        for (wv, xv) in row[..m].iter().zip(x) {
            acc += wv * xv;
        }
        acc += row[m];
        y[r] = acc;
    }
    y
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid(x)).collect()
}

pub fn tanh_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.tanh()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert!(
        a.len() == b.len(),
        "dot product mismatch: lengths {} vs {}",
        a.len(),
        b.len()
    );
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// a += s·b.
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    assert!(a.len() == b.len(), "axpy mismatch: {} vs {}", a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

/// Softmax over the `active` subset of `logits`, exactly zero elsewhere.
///
/// Stabilized by subtracting the maximum active logit. Panics if `active` is
/// empty or indexes past the end of `logits`.
pub fn masked_softmax(logits: &[f64], active: &[usize]) -> Vec<f64> {
    assert!(!active.is_empty(), "masked_softmax: empty active set");
    let mut max = f64::NEG_INFINITY;
    for &i in active {
        assert!(
            i < logits.len(),
            "masked_softmax: active index {i} out of range for {} logits",
            logits.len()
        );
        if logits[i] > max {
            max = logits[i];
        }
    }
    let mut out = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for &i in active {
        let e = (logits[i] - max).exp();
        out[i] = e;
        sum += e;
    }
    for &i in active {
        out[i] /= sum;
    }
    out
}

/// Central-difference gradient estimate with a fixed step.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, theta: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let fp = f(&probe);
        probe[j] = orig - h;
        let fm = f(&probe);
        probe[j] = orig;
        grad[j] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Central differences with a per-coordinate step h·max(1, |θ_j|).
pub fn finite_diff_grad_scaled<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    theta: &[f64],
    base_h: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let h = base_h * theta[j].abs().max(1.0);
        let orig = probe[j];
        probe[j] = orig + h;
        let fp = f(&probe);
        probe[j] = orig - h;
        let fm = f(&probe);
        probe[j] = orig;
        grad[j] = (fp - fm) / (2.0 * h);
    }
    grad
}
