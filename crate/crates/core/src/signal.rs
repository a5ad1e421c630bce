use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, shape_err};
use crate::Result;

/// Real-valued channels × samples matrix, stored row-major (one row per
/// channel).
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    num_channels: usize,
    num_samples: usize,
    sample_rate: f64,
    samples: Vec<f64>,
}

impl MultichannelSignal {
    pub fn new(
        num_channels: usize,
        num_samples: usize,
        sample_rate: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if num_channels == 0 || num_samples == 0 {
            return Err(config_err!(
                "signal needs at least one channel and one sample (got {num_channels} x {num_samples})"
            ));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(config_err!("sample rate must be positive, got {sample_rate}"));
        }
        if samples.len() != num_channels * num_samples {
            return Err(shape_err!(
                "expected {} samples for {num_channels} x {num_samples}, got {}",
                num_channels * num_samples,
                samples.len()
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite("signal samples".into()));
        }
        Ok(Self {
            num_channels,
            num_samples,
            sample_rate,
            samples,
        })
    }

    pub fn zeros(num_channels: usize, num_samples: usize, sample_rate: f64) -> Self {
        assert!(num_channels > 0 && num_samples > 0 && sample_rate > 0.0);
        Self {
            num_channels,
            num_samples,
            sample_rate,
            samples: vec![0.0; num_channels * num_samples],
        }
    }

    pub fn from_channels(channels: &[Vec<f64>], sample_rate: f64) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(shape_err!("channels have different lengths"));
        }
        let samples = channels.iter().flatten().copied().collect();
        Self::new(channels.len(), n, sample_rate, samples)
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.samples
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        let t = self.num_samples;
        &self.samples[index * t..(index + 1) * t]
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut [f64] {
        let t = self.num_samples;
        &mut self.samples[index * t..(index + 1) * t]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.num_samples)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_channels == other.num_channels && self.num_samples == other.num_samples
    }

    pub(crate) fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(shape_err!(
                "{what}: {} x {} vs {} x {}",
                self.num_channels,
                self.num_samples,
                other.num_channels,
                other.num_samples
            ))
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(dot(&self.samples, &self.samples))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.samples, &other.samples)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let d: f64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        libm::sqrt(d)
    }

    pub fn scale(&mut self, factor: f64) {
        self.samples.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            ..*self
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
