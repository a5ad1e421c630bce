//! Complex FFT for arbitrary lengths.
//!
//! Power-of-two sizes use an iterative radix-2 kernel with precomputed
//! twiddles. Other sizes go through Bluestein's chirp-z algorithm on top of a
//! power-of-two kernel. Transforms are unnormalised in both directions, so
//! `inverse(forward(x)) == n * x`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Radix2(Radix2),
    Bluestein(Bluestein),
}

impl Fft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "fft length must be positive");
        let kind = if len.is_power_of_two() {
            Kind::Radix2(Radix2::new(len))
        } else {
            Kind::Bluestein(Bluestein::new(len))
        };
        Self { len, kind }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X[f] = sum_k x[k] exp(-2 pi i f k / n)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        match &self.kind {
            Kind::Radix2(r) => r.forward(buf),
            Kind::Bluestein(b) => b.forward(buf),
        }
    }

    /// In-place unnormalised inverse transform.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        // conj . forward . conj
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

#[derive(Debug, Clone)]
struct Radix2 {
    len: usize,
    /// Twiddles of every stage laid out contiguously: the stage with
    /// half-size `h` stores `exp(-i pi k / h)` for `k < h` at offset `h - 1`.
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        let mut twiddles = Vec::with_capacity(len.saturating_sub(1));
        let mut half = 1;
        while half < len {
            for k in 0..half {
                let angle = -PI * k as f64 / half as f64;
                twiddles.push(Complex64::new(libm::cos(angle), libm::sin(angle)));
            }
            half *= 2;
        }
        let bits = len.trailing_zeros();
        let bitrev = (0..len as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        Self {
            len,
            twiddles,
            bitrev,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.len;
        for (i, &j) in self.bitrev.iter().enumerate() {
            let j = j as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        if n >= 2 {
            for pair in buf.chunks_exact_mut(2) {
                let (a, b) = (pair[0], pair[1]);
                pair[0] = a + b;
                pair[1] = a - b;
            }
        }
        let mut half = 2;
        while half < n {
            let tw = &self.twiddles[half - 1..2 * half - 1];
            for block in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            half *= 2;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    len: usize,
    inner: Radix2,
    /// exp(-i pi k^2 / n) for k < n
    chirp: Vec<Complex64>,
    /// forward transform of the conjugate chirp, wrapped to the inner length
    kernel: Vec<Complex64>,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let inner_len = (2 * len - 1).next_power_of_two();
        let inner = Radix2::new(inner_len);
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                // k^2 mod 2n keeps the angle small for long transforms
                let k2 = ((k as u128 * k as u128) % (2 * len as u128)) as f64;
                let angle = -PI * k2 / len as f64;
                Complex64::new(libm::cos(angle), libm::sin(angle))
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); inner_len];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[inner_len - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Self {
            len,
            inner,
            chirp,
            kernel,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let m = self.inner.len;
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..self.len {
            work[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(&mut work);
        for (w, h) in work.iter_mut().zip(&self.kernel) {
            *w = (*w * h).conj();
        }
        // conjugated forward == inverse up to conjugation
        self.inner.forward(&mut work);
        let scale = 1.0 / m as f64;
        for k in 0..self.len {
            buf[k] = work[k].conj() * scale * self.chirp[k];
        }
    }
}
