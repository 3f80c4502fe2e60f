//! Deterministic random number generation.
//!
//! xoshiro256++ seeded through splitmix64, with Box–Muller for Gaussians.
//! The stream is a fixed function of the 64-bit seed on every platform, so
//! weight initialization, missingness masks, and shuffles reproduce exactly.

use super::Matrix;

#[derive(Debug, Clone)]
pub struct Rng {
    state: [u64; 4],
    cached_gaussian: Option<f64>,
}

fn splitmix64(seed: &mut u64) -> u64 {
    *seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *seed;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        Rng {
            state: [
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
            ],
            cached_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Widening-multiply reduction.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Zero-mean Gaussian with the given variance (Box–Muller, second sample
    /// cached).
    pub fn gaussian(&mut self, variance: f64) -> f64 {
        assert!(variance > 0.0, "gaussian variance must be positive, got {variance}");
        let std = variance.sqrt();
        if let Some(z) = self.cached_gaussian.take() {
            return z * std;
        }
        let mut u1 = self.uniform();
        while u1 == 0.0 {
            u1 = self.uniform();
        }
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_gaussian = Some(r * theta.sin());
        r * theta.cos() * std
    }

    /// Choose k distinct indices from 0..n (partial Fisher–Yates), returned
    /// sorted ascending.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut chosen: Vec<usize> = idx[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }
}

impl Matrix {
    /// Matrix with i.i.d. zero-mean Gaussian entries of the given variance,
    /// drawn row-major.
    pub fn from_gaussian(rng: &mut Rng, rows: usize, cols: usize, variance: f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.gaussian(variance);
        }
        m
    }
}
