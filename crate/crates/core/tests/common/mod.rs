#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslr_core::{Complex64, FilterBank, MultichannelSignal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signal(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> MultichannelSignal {
    let v = (0..channels * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    MultichannelSignal::new(channels, len, 8000.0, v).unwrap()
}

pub fn random_bank(rng: &mut ChaCha8Rng, m: usize, n: usize, len: usize) -> FilterBank {
    let taps = (0..m * n * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    FilterBank::new(m, n, len, taps).unwrap()
}

/// Explicit STFT matrix: row `f * Q + q` holds the analysis atom of bin `f`
/// in frame `q`, built from the textbook definition.
pub struct DenseFrame {
    pub rows: Vec<Vec<Complex64>>,
    pub len: usize,
}

impl DenseFrame {
    pub fn cosine(t: usize, l: usize, r: usize) -> Self {
        let window: Vec<f64> = (0..l).map(|k| (PI * (k as f64 + 0.5) / l as f64).sin()).collect();
        Self::with_window(t, &window, r)
    }

    pub fn rect(t: usize, l: usize) -> Self {
        Self::with_window(t, &vec![1.0; l], 1)
    }

    fn with_window(t: usize, window: &[f64], r: usize) -> Self {
        let l = window.len();
        let hop = l / r;
        let q_len = t.div_ceil(hop) + r - 1;
        let mut rows = vec![vec![Complex64::new(0.0, 0.0); t]; q_len * l];
        for q in 0..q_len {
            let start = (q * hop) as isize - (l - hop) as isize;
            for f in 0..l {
                let row = &mut rows[f * q_len + q];
                for (k, w) in window.iter().enumerate() {
                    let idx = start + k as isize;
                    if (0..t as isize).contains(&idx) {
                        let angle = -2.0 * PI * (f * k) as f64 / l as f64;
                        row[idx as usize] = Complex64::from_polar(*w, angle);
                    }
                }
            }
        }
        Self { rows, len: t }
    }

    pub fn analyze(&self, s: &[f64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(s).map(|(a, &x)| a * x).sum())
            .collect()
    }

    /// Real part of the adjoint.
    pub fn synthesize(&self, c: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (row, ci) in self.rows.iter().zip(c) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += (a.conj() * ci).re;
            }
        }
        out
    }

    /// Largest eigenvalue of `Psi^* Psi` by power iteration.
    pub fn norm_sq(&self) -> f64 {
        let mut v = vec![1.0; self.len];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w = self.synthesize(&self.analyze(&v));
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = n / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.iter().map(|x| x / n).collect();
        }
        lambda
    }
}

/// Chambolle-Pock for `min ||Psi s||_1` over the ball `||s - x|| <= eps`.
/// Iterates stay in the ball; returns the final primal point.
pub fn reference_l1_ball(frame: &DenseFrame, x: &[f64], eps: f64, iters: usize) -> Vec<f64> {
    let norm = frame.norm_sq().sqrt() * 1.01;
    let (tau, sigma) = (0.99 / norm, 0.99 / norm);
    let project = |v: &mut Vec<f64>| {
        let d = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d > eps {
            for (a, b) in v.iter_mut().zip(x) {
                *a = b + (*a - b) * eps / d;
            }
        }
    };
    let mut s = x.to_vec();
    let mut s_bar = s.clone();
    let mut y = vec![Complex64::new(0.0, 0.0); frame.rows.len()];
    for _ in 0..iters {
        let k = frame.analyze(&s_bar);
        for (yi, ki) in y.iter_mut().zip(&k) {
            let v = *yi + ki * sigma;
            *yi = if v.norm() > 1.0 { v / v.norm() } else { v };
        }
        let back = frame.synthesize(&y);
        let mut s_new: Vec<f64> = s.iter().zip(&back).map(|(a, b)| a - tau * b).collect();
        project(&mut s_new);
        s_bar = s_new.iter().zip(&s).map(|(a, b)| 2.0 * a - b).collect();
        s = s_new;
    }
    s
}

pub fn l1(c: &[Complex64]) -> f64 {
    c.iter().map(|v| v.norm()).sum()
}
