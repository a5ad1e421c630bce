//! Convolutive mixing operator `A` and its adjoint.
//!
//! `[A(s)]_m(t) = sum_n (a_mn * s_n)(t)` for `t` in `[0, T)`: full causal
//! convolution restricted to the first `T` samples. The adjoint zero-extends
//! its input past `T` and correlates with the same filters,
//! `[A^*(x)]_n(t) = sum_m sum_k a_mn(k) x_m(t + k)`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, shape_err};
use crate::fft::Fft;
use crate::signal::MultichannelSignal;
use crate::{Error, Result};

/// `M x N` bank of FIR filters, taps stored row-major as `[m][n][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    num_out: usize,
    num_in: usize,
    filter_len: usize,
    taps: Vec<f64>,
}

impl FilterBank {
    pub fn new(num_out: usize, num_in: usize, filter_len: usize, taps: Vec<f64>) -> Result<Self> {
        if num_out == 0 || num_in == 0 || filter_len == 0 {
            return Err(config_err!(
                "filter bank dimensions must be positive (got {num_out} x {num_in} x {filter_len})"
            ));
        }
        if taps.len() != num_out * num_in * filter_len {
            return Err(shape_err!(
                "filter bank {num_out} x {num_in} x {filter_len} needs {} taps, got {}",
                num_out * num_in * filter_len,
                taps.len()
            ));
        }
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter taps".into()));
        }
        if taps.iter().all(|v| *v == 0.0) {
            return Err(config_err!("filter bank has no nonzero tap"));
        }
        Ok(Self {
            num_out,
            num_in,
            filter_len,
            taps,
        })
    }

    /// `M = N` bank with a unit impulse on the diagonal.
    pub fn identity(channels: usize) -> Self {
        let mut taps = vec![0.0; channels * channels];
        for c in 0..channels {
            taps[c * channels + c] = 1.0;
        }
        Self::new(channels, channels, 1, taps).expect("identity bank is valid")
    }

    pub fn num_out(&self) -> usize {
        self.num_out
    }

    pub fn num_in(&self) -> usize {
        self.num_in
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn filter(&self, m: usize, n: usize) -> &[f64] {
        let l = self.filter_len;
        let start = (m * self.num_in + n) * l;
        &self.taps[start..start + l]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.num_out,
            self.num_in,
            self.filter_len,
            self.taps.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Filters longer than this use FFT overlap-add.
pub const FFT_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionPath {
    Naive,
    Fft,
    /// FFT for filters longer than [`FFT_THRESHOLD`] taps, naive otherwise.
    Auto,
}

/// `A` for a fixed filter bank and signal length, with cached filter
/// spectra for the FFT path.
#[derive(Debug, Clone)]
pub struct MixingOperator {
    filters: FilterBank,
    signal_len: usize,
    fast: Option<FastConv>,
}

#[derive(Debug, Clone)]
struct FastConv {
    fft: Fft,
    block_len: usize,
    /// spectrum of `a_mn`, indexed `m * N + n`
    spectra: Vec<Vec<Complex64>>,
}

impl MixingOperator {
    pub fn new(filters: &FilterBank, signal_len: usize) -> Self {
        Self::with_path(filters, signal_len, ConvolutionPath::Auto)
    }

    pub fn with_path(filters: &FilterBank, signal_len: usize, path: ConvolutionPath) -> Self {
        let use_fft = match path {
            ConvolutionPath::Naive => false,
            ConvolutionPath::Fft => true,
            ConvolutionPath::Auto => filters.filter_len > FFT_THRESHOLD,
        };
        let fast = use_fft.then(|| FastConv::new(filters, signal_len));
        Self {
            filters: filters.clone(),
            signal_len,
            fast,
        }
    }

    pub fn filters(&self) -> &FilterBank {
        &self.filters
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn num_sources(&self) -> usize {
        self.filters.num_in
    }

    pub fn num_mixtures(&self) -> usize {
        self.filters.num_out
    }

    fn check(&self, signal: &MultichannelSignal, channels: usize, what: &str) -> Result<()> {
        if signal.num_channels() != channels {
            return Err(shape_err!(
                "{what}: expected {channels} channels, got {}",
                signal.num_channels()
            ));
        }
        if signal.num_samples() != self.signal_len {
            return Err(shape_err!(
                "{what}: expected {} samples, got {}",
                self.signal_len,
                signal.num_samples()
            ));
        }
        Ok(())
    }

    /// `A(s)`: `N x T` sources to `M x T` mixture.
    pub fn forward(&self, sources: &MultichannelSignal) -> Result<MultichannelSignal> {
        self.check(sources, self.filters.num_in, "mix_forward")?;
        let (m_ch, n_ch, t_len) = (self.filters.num_out, self.filters.num_in, self.signal_len);
        let out = match &self.fast {
            Some(fast) => {
                let inputs: Vec<&[f64]> = sources.channels().collect();
                fast.convolve(&inputs, m_ch, t_len, |o, i| o * n_ch + i)
            }
            None => {
                let mut out = vec![0.0; m_ch * t_len];
                for m in 0..m_ch {
                    let y = &mut out[m * t_len..(m + 1) * t_len];
                    for n in 0..n_ch {
                        convolve_naive(self.filters.filter(m, n), sources.channel(n), y);
                    }
                }
                out
            }
        };
        MultichannelSignal::new(m_ch, t_len, sources.sample_rate(), out)
    }

    /// `A^*(x)`: `M x T` mixture to `N x T` sources.
    pub fn adjoint(&self, mixture: &MultichannelSignal) -> Result<MultichannelSignal> {
        self.check(mixture, self.filters.num_out, "mix_adjoint")?;
        let (m_ch, n_ch, t_len) = (self.filters.num_out, self.filters.num_in, self.signal_len);
        let out = match &self.fast {
            Some(fast) => {
                // correlation = time reversal . convolution . time reversal
                let reversed: Vec<Vec<f64>> = mixture
                    .channels()
                    .map(|c| c.iter().rev().copied().collect())
                    .collect();
                let inputs: Vec<&[f64]> = reversed.iter().map(Vec::as_slice).collect();
                let mut out = fast.convolve(&inputs, n_ch, t_len, |o, i| i * n_ch + o);
                for row in out.chunks_exact_mut(t_len) {
                    row.reverse();
                }
                out
            }
            None => {
                let mut out = vec![0.0; n_ch * t_len];
                for n in 0..n_ch {
                    let y = &mut out[n * t_len..(n + 1) * t_len];
                    for m in 0..m_ch {
                        correlate_naive(self.filters.filter(m, n), mixture.channel(m), y);
                    }
                }
                out
            }
        };
        MultichannelSignal::new(n_ch, t_len, mixture.sample_rate(), out)
    }

    /// Power iteration on `A^* A`. Returns `sqrt` of the last
    /// `||A^*A v|| / ||v||`, a lower bound of `||A||` that does not decrease
    /// with `iterations`.
    pub fn norm_estimate(&self, iterations: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.filters.num_in;
        let t = self.signal_len;
        let start: Vec<f64> = (0..n * t).map(|_| rng.sample(StandardNormal)).collect();
        let mut v = MultichannelSignal::new(n, t, 1.0, start).expect("finite start vector");
        let norm = v.norm();
        v.scale(1.0 / norm);
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let w = self
                .adjoint(&self.forward(&v).expect("shape checked"))
                .expect("shape checked");
            let lambda = w.norm();
            if lambda == 0.0 || !lambda.is_finite() {
                return if lambda == 0.0 { 0.0 } else { estimate };
            }
            estimate = libm::sqrt(lambda);
            v = w;
            v.scale(1.0 / lambda);
        }
        estimate
    }
}

impl FastConv {
    fn new(filters: &FilterBank, signal_len: usize) -> Self {
        let l = filters.filter_len;
        let full = (signal_len + l - 1).next_power_of_two();
        let fft_len = (4 * l).next_power_of_two().max(256).min(full);
        let block_len = fft_len - l + 1;
        let fft = Fft::new(fft_len);
        let spectra = (0..filters.num_out * filters.num_in)
            .map(|idx| {
                let taps = &filters.taps[idx * l..(idx + 1) * l];
                let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
                for (b, t) in buf.iter_mut().zip(taps) {
                    b.re = *t;
                }
                fft.forward(&mut buf);
                buf
            })
            .collect();
        Self {
            fft,
            block_len,
            spectra,
        }
    }

    /// Overlap-add: `out_o = sum_i h(o, i) * in_i`, truncated to `t_len`.
    fn convolve(
        &self,
        inputs: &[&[f64]],
        num_outputs: usize,
        t_len: usize,
        spectrum_index: impl Fn(usize, usize) -> usize,
    ) -> Vec<f64> {
        let p = self.fft.len();
        let mut out = vec![0.0; num_outputs * t_len];
        let mut in_spec = vec![vec![Complex64::new(0.0, 0.0); p]; inputs.len()];
        let mut acc = vec![Complex64::new(0.0, 0.0); p];
        let mut t0 = 0;
        while t0 < t_len {
            let end = (t0 + self.block_len).min(t_len);
            // two real blocks per complex transform
            for pair in (0..inputs.len()).step_by(2) {
                let buf = &mut acc;
                buf.fill(Complex64::new(0.0, 0.0));
                for (b, v) in buf.iter_mut().zip(&inputs[pair][t0..end]) {
                    b.re = *v;
                }
                if pair + 1 < inputs.len() {
                    for (b, v) in buf.iter_mut().zip(&inputs[pair + 1][t0..end]) {
                        b.im = *v;
                    }
                }
                self.fft.forward(buf);
                for f in 0..p {
                    let z = buf[f];
                    let zc = buf[(p - f) % p].conj();
                    in_spec[pair][f] = (z + zc) * 0.5;
                    if pair + 1 < inputs.len() {
                        in_spec[pair + 1][f] = (z - zc) * Complex64::new(0.0, -0.5);
                    }
                }
            }
            // outputs are real, so two of them share one inverse transform
            for o in (0..num_outputs).step_by(2) {
                acc.fill(Complex64::new(0.0, 0.0));
                for (i, spec) in in_spec.iter().enumerate() {
                    let h = &self.spectra[spectrum_index(o, i)];
                    for f in 0..p {
                        acc[f] += h[f] * spec[f];
                    }
                    if o + 1 < num_outputs {
                        let h2 = &self.spectra[spectrum_index(o + 1, i)];
                        let j = Complex64::new(0.0, 1.0);
                        for f in 0..p {
                            acc[f] += j * h2[f] * spec[f];
                        }
                    }
                }
                self.fft.inverse(&mut acc);
                let scale = 1.0 / p as f64;
                let n_valid = (t_len - t0).min(p);
                let y = &mut out[o * t_len + t0..o * t_len + t0 + n_valid];
                for (dst, v) in y.iter_mut().zip(&acc) {
                    *dst += v.re * scale;
                }
                if o + 1 < num_outputs {
                    let y = &mut out[(o + 1) * t_len + t0..(o + 1) * t_len + t0 + n_valid];
                    for (dst, v) in y.iter_mut().zip(&acc) {
                        *dst += v.im * scale;
                    }
                }
            }
            t0 = end;
        }
        out
    }
}

/// `y += (a * x)` restricted to `y.len()` samples.
pub fn convolve_naive(a: &[f64], x: &[f64], y: &mut [f64]) {
    for (t, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, tap) in a.iter().enumerate().take(t + 1) {
            acc += tap * x[t - k];
        }
        *out += acc;
    }
}

/// `y(t) += sum_k a(k) x(t + k)` with `x` zero past its end.
pub fn correlate_naive(a: &[f64], x: &[f64], y: &mut [f64]) {
    let t_len = x.len();
    for (t, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, tap) in a.iter().enumerate() {
            if t + k >= t_len {
                break;
            }
            acc += tap * x[t + k];
        }
        *out += acc;
    }
}

pub fn mix_forward(sources: &MultichannelSignal, filters: &FilterBank) -> Result<MultichannelSignal> {
    if sources.num_channels() != filters.num_in() {
        return Err(shape_err!(
            "filter bank expects {} sources, got {}",
            filters.num_in(),
            sources.num_channels()
        ));
    }
    MixingOperator::new(filters, sources.num_samples()).forward(sources)
}

pub fn mix_adjoint(mixture: &MultichannelSignal, filters: &FilterBank) -> Result<MultichannelSignal> {
    if mixture.num_channels() != filters.num_out() {
        return Err(shape_err!(
            "filter bank expects {} mixture channels, got {}",
            filters.num_out(),
            mixture.num_channels()
        ));
    }
    MixingOperator::new(filters, mixture.num_samples()).adjoint(mixture)
}

/// Seed of the power-iteration start vector used by
/// [`operator_norm_estimate`].
pub const NORM_ESTIMATE_SEED: u64 = 0x5eed_0a0b;

/// Power-iteration estimate of `||A||` for signals of `signal_len` samples.
/// Callers needing an upper bound should apply their own safety factor.
pub fn operator_norm_estimate(filters: &FilterBank, signal_len: usize, iterations: usize) -> f64 {
    MixingOperator::new(filters, signal_len).norm_estimate(iterations, NORM_ESTIMATE_SEED)
}

/// Share of each synthetic filter's expected energy placed in the
/// reverberant tail, relative to the direct path.
pub const TAIL_TO_DIRECT: f64 = 0.5;

/// Pseudo-random room-like filters.
///
/// Each `a_mn` has a direct path of random gain in `[0.5, 1]` at a random
/// fractional delay (linear interpolation over two taps), followed from two
/// taps later by Gaussian noise whose expected energy decays as
/// `exp(-t / decay)`. The tail is scaled so that its expected energy is
/// [`TAIL_TO_DIRECT`] times the direct-path gain squared in the long-decay
/// limit, and vanishes as `decay -> 0`.
pub fn generate_synthetic_filters(
    m: usize,
    n: usize,
    len: usize,
    decay: f64,
    seed: u64,
) -> Result<FilterBank> {
    if m == 0 || n == 0 || len == 0 {
        return Err(config_err!("filter dimensions must be positive"));
    }
    if !(decay > 0.0 && decay.is_finite()) {
        return Err(config_err!("decay must be positive, got {decay}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_delay = ((len / 10) as f64).clamp(1.0, (len - 1).max(1) as f64);
    // sum_t exp(-t / decay) over t >= 0
    let envelope_mass = 1.0 / (1.0 - libm::exp(-1.0 / decay));
    let mut taps = vec![0.0; m * n * len];
    for filter in taps.chunks_exact_mut(len) {
        let gain: f64 = rng.random_range(0.5..1.0);
        let delay: f64 = if len > 1 {
            rng.random_range(0.0..max_delay)
        } else {
            0.0
        };
        let onset = delay as usize;
        let frac = delay - onset as f64;
        filter[onset] += gain * (1.0 - frac);
        if onset + 1 < len {
            filter[onset + 1] += gain * frac;
        }
        let tail_std = gain * libm::sqrt(TAIL_TO_DIRECT / envelope_mass);
        for (t, tap) in filter.iter_mut().enumerate().skip(onset + 2) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *tap += tail_std * libm::exp(-0.5 * t as f64 / decay) * noise;
        }
    }
    FilterBank::new(m, n, len, taps)
}
