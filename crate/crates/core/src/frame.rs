//! STFT analysis/synthesis pair used as the sparsifying tight frame.
//!
//! Every source channel of length `T` is cut into `Q` frames of `L` samples
//! with hop `L / R`. Frame `q` starts at `q * hop - (L - hop)`, so the first
//! and last samples are covered by the same number of windows as interior
//! samples. Samples outside `[0, T)` are zero on analysis and discarded on
//! synthesis; these embed/restrict maps are mutual adjoints, which keeps
//! [`istft`] the exact adjoint of [`stft`].
//!
//! Coefficients are stored per source as a column-major `Q x F` matrix with
//! `F = L` (full two-sided spectrum): bin `f` of frame `q` sits at
//! `f * Q + q`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{config_err, shape_err};
use crate::fft::Fft;
use crate::signal::MultichannelSignal;
use crate::{Error, Result};

/// Analysis window shape.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowKind {
    /// `sin(pi (k + 0.5) / L)`, the square root of a periodic Hann window.
    /// Tight for any even redundancy.
    Cosine,
    Rectangular,
    Custom(Vec<f64>),
}

impl WindowKind {
    pub fn samples(&self, len: usize) -> Result<Vec<f64>> {
        let w = match self {
            WindowKind::Cosine => (0..len)
                .map(|k| libm::sin(PI * (k as f64 + 0.5) / len as f64))
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Custom(w) => {
                if w.len() != len {
                    return Err(config_err!(
                        "custom window has {} samples, window length is {len}",
                        w.len()
                    ));
                }
                w.clone()
            }
        };
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(config_err!("window entries must be finite and non-negative"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(config_err!("window is identically zero"));
        }
        Ok(w)
    }
}

/// Geometry of the STFT frame for signals of a fixed length.
///
/// The frame constant `nu` (with `Psi Psi^* = nu Id`) is measured from
/// impulse probes when the configuration is built, together with the
/// relative deviation from tightness.
#[derive(Debug, Clone)]
pub struct StftConfig {
    signal_len: usize,
    window_len: usize,
    redundancy: usize,
    hop: usize,
    num_frames: usize,
    kind: WindowKind,
    window: Vec<f64>,
    frame_constant: f64,
    tightness_residual: f64,
    fft: Arc<Fft>,
}

impl PartialEq for StftConfig {
    fn eq(&self, other: &Self) -> bool {
        self.signal_len == other.signal_len
            && self.window_len == other.window_len
            && self.redundancy == other.redundancy
            && self.window == other.window
    }
}

impl StftConfig {
    pub const DEFAULT_WINDOW_LEN: usize = 1024;
    pub const DEFAULT_REDUNDANCY: usize = 2;

    pub fn new(
        signal_len: usize,
        window_len: usize,
        redundancy: usize,
        kind: WindowKind,
    ) -> Result<Self> {
        if signal_len == 0 {
            return Err(config_err!("signal length must be positive"));
        }
        if window_len == 0 || redundancy == 0 {
            return Err(config_err!("window length and redundancy must be positive"));
        }
        if window_len % redundancy != 0 {
            return Err(config_err!(
                "window length {window_len} is not divisible by redundancy {redundancy}"
            ));
        }
        let window = kind.samples(window_len)?;
        let hop = window_len / redundancy;
        let num_frames = signal_len.div_ceil(hop) + redundancy - 1;
        let mut cfg = Self {
            signal_len,
            window_len,
            redundancy,
            hop,
            num_frames,
            kind,
            window,
            frame_constant: 1.0,
            tightness_residual: f64::INFINITY,
            fft: Arc::new(Fft::new(window_len)),
        };
        let (nu, residual) = cfg.measure();
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(config_err!("frame constant is not positive ({nu})"));
        }
        cfg.frame_constant = nu;
        cfg.tightness_residual = residual;
        Ok(cfg)
    }

    /// Cosine window of the default length and redundancy.
    pub fn default_for(signal_len: usize) -> Result<Self> {
        Self::new(
            signal_len,
            Self::DEFAULT_WINDOW_LEN,
            Self::DEFAULT_REDUNDANCY,
            WindowKind::Cosine,
        )
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn redundancy(&self) -> usize {
        self.redundancy
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.window_len
    }

    /// `B = Q * F`, the number of coefficients per source.
    pub fn num_coeffs(&self) -> usize {
        self.num_frames * self.window_len
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn window_kind(&self) -> &WindowKind {
        &self.kind
    }

    pub fn frame_constant(&self) -> f64 {
        self.frame_constant
    }

    /// Relative tightness residual measured at construction.
    pub fn tightness_residual(&self) -> f64 {
        self.tightness_residual
    }

    pub fn check_tight(&self, tolerance: f64) -> Result<()> {
        if self.tightness_residual <= tolerance {
            Ok(())
        } else {
            Err(Error::NotTight {
                residual: self.tightness_residual,
                tolerance,
            })
        }
    }

    fn frame_start(&self, q: usize) -> isize {
        (q * self.hop) as isize - (self.window_len - self.hop) as isize
    }

    /// Range of window offsets `k` for which `frame_start(q) + k` is inside
    /// the signal.
    fn valid_offsets(&self, q: usize) -> (isize, usize, usize) {
        let start = self.frame_start(q);
        let lo = (-start).max(0) as usize;
        let hi = (self.signal_len as isize - start).clamp(0, self.window_len as isize) as usize;
        (start, lo, hi.max(lo))
    }

    fn load_frame(&self, x: &[f64], q: usize, buf: &mut [Complex64], imag: bool) {
        let (start, lo, hi) = self.valid_offsets(q);
        for k in lo..hi {
            let v = self.window[k] * x[(start + k as isize) as usize];
            if imag {
                buf[k].im = v;
            } else {
                buf[k].re = v;
            }
        }
    }

    /// Analysis of one real channel into a column-major `Q x F` block.
    /// Two frames share one complex transform.
    pub(crate) fn analyze_channel(&self, x: &[f64], out: &mut [Complex64], buf: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.signal_len);
        debug_assert_eq!(out.len(), self.num_coeffs());
        let q_len = self.num_frames;
        let l = self.window_len;
        let buf = &mut buf[..l];
        let mut q = 0;
        while q < q_len {
            let paired = q + 1 < q_len;
            buf.fill(Complex64::new(0.0, 0.0));
            self.load_frame(x, q, buf, false);
            if paired {
                self.load_frame(x, q + 1, buf, true);
            }
            self.fft.forward(buf);
            if paired {
                for f in 0..l {
                    let z = buf[f];
                    let zc = buf[(l - f) % l].conj();
                    out[f * q_len + q] = (z + zc) * 0.5;
                    let d = (z - zc) * 0.5;
                    out[f * q_len + q + 1] = Complex64::new(d.im, -d.re);
                }
            } else {
                for (f, v) in buf.iter().enumerate() {
                    out[f * q_len + q] = *v;
                }
            }
            q += 2;
        }
    }

    fn accumulate_frame(&self, q: usize, src: impl Fn(usize) -> f64, dst: &mut [f64]) {
        let (start, lo, hi) = self.valid_offsets(q);
        for k in lo..hi {
            dst[(start + k as isize) as usize] += self.window[k] * src(k);
        }
    }

    /// Adjoint of [`Self::analyze_channel`]. Accumulates the real part into
    /// `re` and, when given, the imaginary part into `im`.
    pub(crate) fn synthesize_channel(
        &self,
        c: &[Complex64],
        re: &mut [f64],
        im: Option<&mut [f64]>,
        buf: &mut [Complex64],
    ) {
        debug_assert_eq!(c.len(), self.num_coeffs());
        let q_len = self.num_frames;
        let l = self.window_len;
        let buf = &mut buf[..l];
        if let Some(im) = im {
            for q in 0..q_len {
                for (f, b) in buf.iter_mut().enumerate() {
                    *b = c[f * q_len + q];
                }
                self.fft.inverse(buf);
                self.accumulate_frame(q, |k| buf[k].re, re);
                self.accumulate_frame(q, |k| buf[k].im, im);
            }
            return;
        }
        // Re(IFFT(c)) = IFFT of the Hermitian part of c, so two frames fit in
        // one transform as H(c_q) + i H(c_{q+1}).
        let mut q = 0;
        while q < q_len {
            if q + 1 < q_len {
                for f in 0..l {
                    let g = (l - f) % l;
                    let a = (c[f * q_len + q] + c[g * q_len + q].conj()) * 0.5;
                    let b = (c[f * q_len + q + 1] + c[g * q_len + q + 1].conj()) * 0.5;
                    buf[f] = Complex64::new(a.re - b.im, a.im + b.re);
                }
                self.fft.inverse(buf);
                self.accumulate_frame(q, |k| buf[k].re, re);
                self.accumulate_frame(q + 1, |k| buf[k].im, re);
            } else {
                for (f, b) in buf.iter_mut().enumerate() {
                    *b = c[f * q_len + q];
                }
                self.fft.inverse(buf);
                self.accumulate_frame(q, |k| buf[k].re, re);
            }
            q += 2;
        }
    }

    pub(crate) fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.window_len]
    }

    /// Applies `Psi Psi^*` to the unit impulse at `t`. Returns the value at
    /// `t` and the energy everywhere else.
    fn impulse_response(&self, t: usize, buf: &mut [Complex64]) -> (f64, f64) {
        // Only frames covering t produce nonzero coefficients.
        let l = self.window_len;
        let lo = t.saturating_sub(l - 1);
        let span_start = lo;
        let span_end = (t + l).min(self.signal_len);
        let mut acc = vec![0.0; span_end - span_start];
        for q in 0..self.num_frames {
            let start = self.frame_start(q);
            let offset = t as isize - start;
            if offset < 0 || offset >= l as isize {
                continue;
            }
            buf.fill(Complex64::new(0.0, 0.0));
            buf[offset as usize] = Complex64::new(self.window[offset as usize], 0.0);
            self.fft.forward(buf);
            self.fft.inverse(buf);
            let (_, k_lo, k_hi) = self.valid_offsets(q);
            for k in k_lo..k_hi {
                let pos = (start + k as isize) as usize;
                acc[pos - span_start] += self.window[k] * buf[k].re;
            }
        }
        let diag = acc[t - span_start];
        let off: f64 = acc
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t - span_start)
            .map(|(_, v)| v * v)
            .sum();
        (diag, off)
    }

    /// Impulse positions that exercise every distinct column of
    /// `Psi Psi^*`. Away from the edges the operator is periodic with period
    /// `hop`, so the first and last `L + hop` positions cover all cases.
    fn probe_positions(&self) -> Vec<usize> {
        let t = self.signal_len;
        let edge = (self.window_len + self.hop).min(t);
        let mut positions: Vec<usize> = (0..edge).collect();
        positions.extend((t - edge).max(edge)..t);
        positions
    }

    fn measure(&self) -> (f64, f64) {
        let mut buf = self.scratch();
        let responses: Vec<(f64, f64)> = self
            .probe_positions()
            .into_iter()
            .map(|t| self.impulse_response(t, &mut buf))
            .collect();
        let nu = responses.iter().map(|r| r.0).sum::<f64>() / responses.len() as f64;
        (nu, residual_against(&responses, nu))
    }
}

fn residual_against(responses: &[(f64, f64)], nu: f64) -> f64 {
    responses
        .iter()
        .map(|(d, off)| libm::sqrt((d - nu) * (d - nu) + off) / nu)
        .fold(0.0, f64::max)
}

/// Max over impulse probes of `||(Psi Psi^*) s - nu s|| / (nu ||s||)`, using
/// the frame constant stored in `cfg`.
pub fn verify_tight_frame(cfg: &StftConfig) -> f64 {
    let mut buf = cfg.scratch();
    let responses: Vec<(f64, f64)> = cfg
        .probe_positions()
        .into_iter()
        .map(|t| cfg.impulse_response(t, &mut buf))
        .collect();
    residual_against(&responses, cfg.frame_constant)
}

/// Complex STFT coefficients of `N` signals, one `Q x F` column-major block
/// per source.
#[derive(Debug, Clone, PartialEq)]
pub struct TfTensor {
    num_sources: usize,
    num_frames: usize,
    num_bins: usize,
    sample_rate: f64,
    coeffs: Vec<Complex64>,
}

impl TfTensor {
    pub fn zeros(num_sources: usize, cfg: &StftConfig, sample_rate: f64) -> Self {
        Self {
            num_sources,
            num_frames: cfg.num_frames(),
            num_bins: cfg.num_bins(),
            sample_rate,
            coeffs: vec![Complex64::new(0.0, 0.0); num_sources * cfg.num_coeffs()],
        }
    }

    pub fn from_coeffs(
        num_sources: usize,
        cfg: &StftConfig,
        sample_rate: f64,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if coeffs.len() != num_sources * cfg.num_coeffs() {
            return Err(shape_err!(
                "expected {} coefficients, got {}",
                num_sources * cfg.num_coeffs(),
                coeffs.len()
            ));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("TF coefficients".into()));
        }
        Ok(Self {
            num_sources,
            num_frames: cfg.num_frames(),
            num_bins: cfg.num_bins(),
            sample_rate,
            coeffs,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn coeffs_per_source(&self) -> usize {
        self.num_frames * self.num_bins
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Row `n` of `s Psi`, i.e. `vec` of the `Q x F` coefficient matrix.
    pub fn source(&self, n: usize) -> &[Complex64] {
        let b = self.coeffs_per_source();
        &self.coeffs[n * b..(n + 1) * b]
    }

    pub fn source_mut(&mut self, n: usize) -> &mut [Complex64] {
        let b = self.coeffs_per_source();
        &mut self.coeffs[n * b..(n + 1) * b]
    }

    /// Coefficient of source `n` at frame `q`, bin `f`.
    pub fn get(&self, n: usize, q: usize, f: usize) -> Complex64 {
        self.source(n)[f * self.num_frames + q]
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.coeffs.iter().map(|c| c.norm_sqr()).sum())
    }

    fn check_cfg(&self, cfg: &StftConfig) -> Result<()> {
        if self.num_frames != cfg.num_frames() || self.num_bins != cfg.num_bins() {
            return Err(shape_err!(
                "coefficients are {} x {} per source, configuration expects {} x {}",
                self.num_frames,
                self.num_bins,
                cfg.num_frames(),
                cfg.num_bins()
            ));
        }
        Ok(())
    }
}

/// Element-wise magnitude of one source's coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    rows: usize,
    cols: usize,
    /// column-major, `rows x cols`
    values: Vec<f64>,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.rows
    }

    pub fn num_bins(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, q: usize, f: usize) -> f64 {
        self.values[f * self.rows + q]
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_column_slice(self.rows, self.cols, &self.values)
    }
}

/// Analysis `s Psi` of every channel of `signal`.
pub fn stft(signal: &MultichannelSignal, cfg: &StftConfig) -> Result<TfTensor> {
    if signal.num_samples() != cfg.signal_len() {
        return Err(config_err!(
            "signal has {} samples, STFT configured for {}",
            signal.num_samples(),
            cfg.signal_len()
        ));
    }
    let mut out = TfTensor::zeros(signal.num_channels(), cfg, signal.sample_rate());
    let mut buf = cfg.scratch();
    for (n, x) in signal.channels().enumerate() {
        cfg.analyze_channel(x, out.source_mut(n), &mut buf);
    }
    Ok(out)
}

/// Adjoint synthesis `c Psi^*`, returning the real part together with the
/// relative size of the discarded imaginary part.
pub fn istft_with_residual(
    coeffs: &TfTensor,
    cfg: &StftConfig,
) -> Result<(MultichannelSignal, f64)> {
    coeffs.check_cfg(cfg)?;
    let t = cfg.signal_len();
    let n = coeffs.num_sources();
    let mut re = vec![0.0; n * t];
    let mut im = vec![0.0; n * t];
    let mut buf = cfg.scratch();
    for s in 0..n {
        cfg.synthesize_channel(
            coeffs.source(s),
            &mut re[s * t..(s + 1) * t],
            Some(&mut im[s * t..(s + 1) * t]),
            &mut buf,
        );
    }
    let re_norm = libm::sqrt(crate::signal::dot(&re, &re));
    let im_norm = libm::sqrt(crate::signal::dot(&im, &im));
    let residual = if im_norm == 0.0 {
        0.0
    } else {
        im_norm / re_norm.max(f64::MIN_POSITIVE)
    };
    let signal = MultichannelSignal::new(n, t, coeffs.sample_rate(), re)?;
    Ok((signal, residual))
}

/// Adjoint synthesis `c Psi^*` (real part).
pub fn istft(coeffs: &TfTensor, cfg: &StftConfig) -> Result<MultichannelSignal> {
    coeffs.check_cfg(cfg)?;
    let t = cfg.signal_len();
    let n = coeffs.num_sources();
    let mut re = vec![0.0; n * t];
    let mut buf = cfg.scratch();
    for s in 0..n {
        cfg.synthesize_channel(coeffs.source(s), &mut re[s * t..(s + 1) * t], None, &mut buf);
    }
    MultichannelSignal::new(n, t, coeffs.sample_rate(), re)
}

/// `|c|` without the cost of `hypot`; falls back to it on overflow.
#[inline]
pub fn magnitude(c: Complex64) -> f64 {
    let m = libm::sqrt(c.re * c.re + c.im * c.im);
    if m.is_finite() && m > 0.0 || c.re == 0.0 && c.im == 0.0 {
        m
    } else {
        c.norm()
    }
}

pub fn spectrogram(coeffs: &TfTensor, source_index: usize) -> Result<Spectrogram> {
    if source_index >= coeffs.num_sources() {
        return Err(Error::Index {
            index: source_index,
            len: coeffs.num_sources(),
        });
    }
    Ok(Spectrogram {
        rows: coeffs.num_frames(),
        cols: coeffs.num_bins(),
        values: coeffs.source(source_index).iter().map(|c| magnitude(*c)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, t: usize, seed: u64) -> MultichannelSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * t).map(|_| rng.random_range(-1.0..1.0)).collect();
        MultichannelSignal::new(n, t, 8000.0, v).unwrap()
    }

    #[test]
    fn geometry() {
        let cfg = StftConfig::new(100, 16, 2, WindowKind::Cosine).unwrap();
        assert_eq!(cfg.hop(), 8);
        assert_eq!(cfg.num_frames(), 13 + 1);
        assert_eq!(cfg.num_coeffs(), 14 * 16);
        assert_eq!(cfg.frame_start(0), -8);
    }

    #[test]
    fn rejects_bad_redundancy() {
        assert!(matches!(
            StftConfig::new(100, 16, 3, WindowKind::Cosine),
            Err(Error::Config(_))
        ));
        assert!(StftConfig::new(100, 16, 2, WindowKind::Custom(vec![1.0; 15])).is_err());
        assert!(StftConfig::new(100, 4, 2, WindowKind::Custom(vec![1.0, -1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn cosine_window_is_tight_with_nu_equal_to_window_len() {
        let cfg = StftConfig::new(300, 32, 2, WindowKind::Cosine).unwrap();
        assert!((cfg.frame_constant() - 32.0).abs() < 1e-9);
        assert!(verify_tight_frame(&cfg) < 1e-10);
    }

    #[test]
    fn rectangular_no_overlap_is_tight() {
        let cfg = StftConfig::new(200, 64, 1, WindowKind::Rectangular).unwrap();
        assert!((cfg.frame_constant() - 64.0).abs() < 1e-9);
        assert!(verify_tight_frame(&cfg) < 1e-10);
    }

    #[test]
    fn corrupted_window_is_flagged() {
        let mut w = WindowKind::Cosine.samples(32).unwrap();
        w[5] *= 1.5;
        let cfg = StftConfig::new(300, 32, 2, WindowKind::Custom(w)).unwrap();
        assert!(verify_tight_frame(&cfg) > 1e-3);
        assert!(matches!(cfg.check_tight(1e-8), Err(Error::NotTight { .. })));
    }

    #[test]
    fn zero_signal_maps_to_zero() {
        let cfg = StftConfig::new(64, 16, 2, WindowKind::Cosine).unwrap();
        let tf = stft(&MultichannelSignal::zeros(2, 64, 1.0), &cfg).unwrap();
        assert!(tf.as_slice().iter().all(|c| c.norm() == 0.0));
        let back = istft(&tf, &cfg).unwrap();
        assert!(back.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn length_mismatch_is_a_config_error() {
        let cfg = StftConfig::new(64, 16, 2, WindowKind::Cosine).unwrap();
        let s = MultichannelSignal::zeros(1, 65, 1.0);
        assert!(matches!(stft(&s, &cfg), Err(Error::Config(_))));
        let other = StftConfig::new(64, 32, 2, WindowKind::Cosine).unwrap();
        let tf = TfTensor::zeros(1, &other, 1.0);
        assert!(matches!(istft(&tf, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn reconstruction_and_parseval() {
        let cfg = StftConfig::new(257, 32, 2, WindowKind::Cosine).unwrap();
        let s = random_signal(2, 257, 3);
        let tf = stft(&s, &cfg).unwrap();
        let nu = cfg.frame_constant();
        let energy = tf.frobenius_norm().powi(2);
        assert!((energy - nu * s.norm().powi(2)).abs() / energy < 1e-10);
        let (back, imag) = istft_with_residual(&tf, &cfg).unwrap();
        assert!(imag < 1e-8);
        let mut diff = back.clone();
        diff.axpy(-nu, &s);
        assert!(diff.norm() / (nu * s.norm()) < 1e-10);
    }

    /// Per-frame DFT oracle, independent of the FFT path.
    fn direct_frame_dft(cfg: &StftConfig, x: &[f64], q: usize) -> Vec<Complex64> {
        let l = cfg.window_len();
        let start = cfg.frame_start(q);
        (0..l)
            .map(|f| {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..l {
                    let t = start + k as isize;
                    if t < 0 || t >= x.len() as isize {
                        continue;
                    }
                    let ang = -2.0 * PI * ((f * k) % l) as f64 / l as f64;
                    acc += cfg.window()[k] * x[t as usize] * Complex64::new(libm::cos(ang), libm::sin(ang));
                }
                acc
            })
            .collect()
    }

    fn bin_share(cfg: &StftConfig, x: &[f64], bin: usize, spread: usize) -> Vec<f64> {
        let l = cfg.window_len();
        let s = MultichannelSignal::new(1, x.len(), 1.0, x.to_vec()).unwrap();
        let tf = stft(&s, &cfg).unwrap();
        let interior = cfg.redundancy()..cfg.num_frames() - cfg.redundancy();
        interior
            .map(|q| {
                let oracle = direct_frame_dft(cfg, x, q);
                for (f, v) in oracle.iter().enumerate() {
                    assert!((v - tf.get(0, q, f)).norm() < 1e-9);
                }
                let total: f64 = oracle.iter().map(|c| c.norm_sqr()).sum();
                // a real tone occupies the bin and its mirror
                let near: f64 = (bin - spread..=bin + spread)
                    .flat_map(|f| [f, l - f])
                    .map(|f| oracle[f].norm_sqr())
                    .sum();
                near / total
            })
            .collect()
    }

    #[test]
    fn bin_center_sinusoid_concentrates_energy() {
        let l = 64;
        let t_len = 640;
        let bin = 5;
        let x: Vec<f64> = (0..t_len)
            .map(|t| libm::cos(2.0 * PI * bin as f64 * t as f64 / l as f64 + 0.3))
            .collect();

        let rect = StftConfig::new(t_len, l, 1, WindowKind::Rectangular).unwrap();
        for share in bin_share(&rect, &x, bin, 0) {
            assert!(share >= 0.99, "{share}");
        }
        // the cosine window's main lobe spans two bins either side
        let cosine = StftConfig::new(t_len, l, 2, WindowKind::Cosine).unwrap();
        for share in bin_share(&cosine, &x, bin, 2) {
            assert!(share >= 0.99, "{share}");
        }
    }

    #[test]
    fn spectrogram_is_elementwise_modulus() {
        let cfg = StftConfig::new(32, 8, 2, WindowKind::Cosine).unwrap();
        let b = cfg.num_coeffs();
        let tf = TfTensor::from_coeffs(2, &cfg, 1.0, vec![Complex64::new(3.0, 4.0); 2 * b]).unwrap();
        let sp = spectrogram(&tf, 1).unwrap();
        assert!(sp.as_slice().iter().all(|v| *v == 5.0));
        assert!(matches!(spectrogram(&tf, 2), Err(Error::Index { index: 2, len: 2 })));

        let real: Vec<Complex64> = (0..b).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let tf = TfTensor::from_coeffs(1, &cfg, 1.0, real.clone()).unwrap();
        let sp = spectrogram(&tf, 0).unwrap();
        assert!(sp.as_slice().iter().zip(&real).all(|(a, b)| *a == b.re));
    }

    #[test]
    fn spectrogram_random_matches_scalar_modulus() {
        let cfg = StftConfig::new(48, 8, 2, WindowKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c: Vec<Complex64> = (0..cfg.num_coeffs())
            .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let tf = TfTensor::from_coeffs(1, &cfg, 1.0, c.clone()).unwrap();
        let sp = spectrogram(&tf, 0).unwrap();
        for (i, v) in c.iter().enumerate() {
            let expected = libm::sqrt(v.re * v.re + v.im * v.im);
            assert!((sp.as_slice()[i] - expected).abs() <= 1e-15 * expected.max(1.0));
        }
    }
}
