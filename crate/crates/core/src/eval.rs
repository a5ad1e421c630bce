//! Scoring and the synthetic benchmark protocol.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::config_err;
use crate::frame::{StftConfig, WindowKind};
use crate::mixing::{generate_synthetic_filters, MixingOperator};
use crate::signal::MultichannelSignal;
use crate::solver::{sslr_from, Clock, SeparationProblem, SolverConfig};
use crate::{Error, Result};

/// Cap on the magnitude of [`sdr`] in dB.
pub const SDR_CAP_DB: f64 = 300.0;

/// Signal-to-distortion ratio with a gain-only allowed distortion: the
/// target is the projection of `estimate` on `truth`.
pub fn sdr(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(crate::error::shape_err!(
            "estimate has {} samples, reference has {}",
            estimate.len(),
            truth.len()
        ));
    }
    let truth_energy: f64 = truth.iter().map(|v| v * v).sum();
    if truth_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let gain = crate::signal::dot(estimate, truth) / truth_energy;
    let target_energy = gain * gain * truth_energy;
    let distortion: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, s)| {
            let d = e - gain * s;
            d * d
        })
        .sum();
    if target_energy == 0.0 {
        return Ok(-SDR_CAP_DB);
    }
    if distortion == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * libm::log10(target_energy / distortion)).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

/// SDR of every channel of `estimates` against the matching channel of
/// `truth`.
pub fn sdr_per_source(estimates: &MultichannelSignal, truth: &MultichannelSignal) -> Result<Vec<f64>> {
    estimates.check_same_shape(truth, "sdr")?;
    estimates
        .channels()
        .zip(truth.channels())
        .map(|(e, s)| sdr(e, s))
        .collect()
}

/// Sums of `rank` narrowband tones with slowly varying, partly silent
/// envelopes, so that each spectrogram has numerical rank close to `rank`.
/// Tones sit at distinct bin centres at least four bins apart; envelopes are
/// piecewise linear between knots spaced four hops apart. Every source is
/// scaled to a peak of `amplitude`.
pub fn generate_lowrank_sources_scaled(
    n: usize,
    t: usize,
    rank: usize,
    amplitude: f64,
    seed: u64,
    stft_cfg: &StftConfig,
    sample_rate: f64,
) -> Result<MultichannelSignal> {
    if rank == 0 || rank > stft_cfg.num_frames().min(stft_cfg.num_bins()) {
        return Err(config_err!(
            "source rank {rank} must be in 1..=min(Q, F) = {}",
            stft_cfg.num_frames().min(stft_cfg.num_bins())
        ));
    }
    let l = stft_cfg.window_len();
    // usable positive-frequency bins, away from DC and Nyquist
    let lo = 2;
    let hi = (l / 2).saturating_sub(2);
    let spacing = if hi > lo && (hi - lo) / rank >= 4 { 4 } else { 1 };
    if hi <= lo || (hi - lo) / spacing < rank {
        return Err(config_err!("window of {l} samples cannot hold {rank} separated tones"));
    }
    let knot_step = 4 * stft_cfg.hop();
    let num_knots = t / knot_step + 2;
    let mut out = vec![0.0; n * t];
    for (source, row) in out.chunks_exact_mut(t).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(source as u64 + 1)));
        let mut bins: Vec<usize> = Vec::with_capacity(rank);
        while bins.len() < rank {
            let candidate = rng.random_range(lo..hi);
            if bins.iter().all(|b| b.abs_diff(candidate) >= spacing) {
                bins.push(candidate);
            }
        }
        for &bin in &bins {
            let omega = 2.0 * PI * bin as f64 / l as f64;
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let knots: Vec<f64> = (0..num_knots)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        let u: f64 = rng.random_range(0.2..1.0);
                        u * u
                    } else {
                        0.0
                    }
                })
                .collect();
            for (i, v) in row.iter_mut().enumerate() {
                let pos = i as f64 / knot_step as f64;
                let k = pos as usize;
                let frac = pos - k as f64;
                let env = knots[k] * (1.0 - frac) + knots[k + 1] * frac;
                *v += env * libm::cos(omega * i as f64 + phase);
            }
        }
        let peak = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let scale = amplitude / peak;
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    MultichannelSignal::new(n, t, sample_rate, out)
}

/// Unit-peak synthetic low-rank sources.
pub fn generate_lowrank_sources(
    n: usize,
    t: usize,
    rank: usize,
    seed: u64,
    stft_cfg: &StftConfig,
    sample_rate: f64,
) -> Result<MultichannelSignal> {
    generate_lowrank_sources_scaled(n, t, rank, 1.0, seed, stft_cfg, sample_rate)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Synthetic { rank: usize },
    /// Ground-truth sources supplied by the caller.
    Signals(MultichannelSignal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub seed: u64,
    pub num_mixtures: usize,
    pub num_sources: usize,
    pub num_samples: usize,
    pub sample_rate: f64,
    pub filter_len: usize,
    pub filter_decay: f64,
    pub sources: SourceSpec,
    pub eps: f64,
    pub rank_sweep: Vec<usize>,
    pub window_len: usize,
    pub redundancy: usize,
}

/// Decay giving 60 dB of energy loss over `len` taps.
pub fn decay_for_len(len: usize) -> f64 {
    len as f64 / libm::log(1e6)
}

impl Scenario {
    /// Desk-scale analogue of the reverberant music protocol: 2 s at 8 kHz,
    /// rank-5 sources, 200-tap filters.
    pub fn synthetic(id: impl Into<String>, seed: u64, num_mixtures: usize, num_sources: usize) -> Self {
        Self {
            id: id.into(),
            seed,
            num_mixtures,
            num_sources,
            num_samples: 16_000,
            sample_rate: 8_000.0,
            filter_len: 200,
            filter_decay: decay_for_len(200),
            sources: SourceSpec::Synthetic { rank: 5 },
            eps: 1e-4,
            rank_sweep: vec![5, 10, 20, 30],
            window_len: StftConfig::DEFAULT_WINDOW_LEN,
            redundancy: StftConfig::DEFAULT_REDUNDANCY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_mixtures == 0 || self.num_sources == 0 || self.num_samples == 0 {
            return Err(config_err!("scenario {}: dimensions must be positive", self.id));
        }
        if !(self.sample_rate > 0.0 && self.eps > 0.0 && self.filter_decay > 0.0) {
            return Err(config_err!("scenario {}: rates and radii must be positive", self.id));
        }
        if self.filter_len == 0 {
            return Err(config_err!("scenario {}: filter length must be positive", self.id));
        }
        Ok(())
    }

    pub fn frame(&self) -> Result<StftConfig> {
        StftConfig::new(self.num_samples, self.window_len, self.redundancy, WindowKind::Cosine)
    }

    /// Ground truth, mixing filters and mixture.
    pub fn realize(&self) -> Result<Realization> {
        self.validate()?;
        let frame = self.frame()?;
        for &r in &self.rank_sweep {
            if r == 0 || r > frame.num_frames().min(frame.num_bins()) {
                return Err(config_err!("scenario {}: rank {r} out of range", self.id));
            }
        }
        let truth = match &self.sources {
            SourceSpec::Synthetic { rank } => generate_lowrank_sources(
                self.num_sources,
                self.num_samples,
                *rank,
                self.seed.wrapping_add(1),
                &frame,
                self.sample_rate,
            )?,
            SourceSpec::Signals(s) => {
                if s.num_channels() != self.num_sources || s.num_samples() != self.num_samples {
                    return Err(crate::error::shape_err!(
                        "scenario {}: supplied sources do not match N x T",
                        self.id
                    ));
                }
                s.clone()
            }
        };
        let filters = generate_synthetic_filters(
            self.num_mixtures,
            self.num_sources,
            self.filter_len,
            self.filter_decay,
            self.seed,
        )?;
        let mixture = MixingOperator::new(&filters, self.num_samples).forward(&truth)?;
        Ok(Realization {
            truth,
            filters,
            mixture,
            frame,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub truth: MultichannelSignal,
    pub filters: crate::FilterBank,
    pub mixture: MultichannelSignal,
    pub frame: StftConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    /// Returns the normalised matched filter `A^*(x) / max(1, ||A||^2)`.
    MatchedFilter,
    Solver(SolverConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub id: String,
    pub kind: MethodKind,
}

impl Method {
    pub fn matched_filter() -> Self {
        Self {
            id: "matched-filter".into(),
            kind: MethodKind::MatchedFilter,
        }
    }

    pub fn ssra(base: &SolverConfig) -> Self {
        Self {
            id: "ssra".into(),
            kind: MethodKind::Solver(SolverConfig {
                rank_enabled: false,
                ..base.clone()
            }),
        }
    }

    pub fn sslr(base: &SolverConfig, rank: usize) -> Result<Self> {
        Ok(Self {
            id: format!("sslr-r{rank}"),
            kind: MethodKind::Solver(SolverConfig {
                rank: crate::RankBudget::new(rank)?,
                rank_enabled: true,
                ..base.clone()
            }),
        })
    }

    pub fn rank(&self) -> Option<usize> {
        match &self.kind {
            MethodKind::Solver(cfg) if cfg.rank_enabled => Some(cfg.rank.get()),
            _ => None,
        }
    }
}

/// One `(scenario, method)` cell of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub scenario_id: String,
    pub method_id: String,
    pub seed: u64,
    pub num_sources: usize,
    pub num_mixtures: usize,
    pub rank: Option<usize>,
    pub sdr_per_source: Vec<f64>,
    pub mean_sdr_db: f64,
    pub std_sdr_db: f64,
    pub iters: usize,
    pub wall_ms: f64,
    pub config_hash: u64,
    pub error: Option<String>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// FNV-1a over the debug rendering of the cell configuration.
pub fn config_hash(scenario: &Scenario, method: &Method) -> u64 {
    let text = format!("{scenario:?}|{method:?}");
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn solver_for(scenario: &Scenario, cfg: &SolverConfig) -> SolverConfig {
    SolverConfig {
        eps: scenario.eps,
        seed: scenario.seed,
        ..cfg.clone()
    }
}

fn run_method(
    scenario: &Scenario,
    method: &Method,
    problem: &SeparationProblem,
    clock: &dyn Clock,
) -> Result<(MultichannelSignal, usize)> {
    let s0 = problem.matched_filter()?;
    match &method.kind {
        MethodKind::MatchedFilter => Ok((s0, 0)),
        MethodKind::Solver(cfg) => {
            let cfg = solver_for(scenario, cfg);
            let result = sslr_from(problem, &cfg, s0, clock)?;
            let iters = result.total_iterations();
            Ok((result.estimates, iters))
        }
    }
}

/// Runs every method on every scenario, in order. Failures are recorded in
/// the affected rows and do not stop the run.
pub fn run_benchmark(scenarios: &[Scenario], methods: &[Method], clock: &dyn Clock) -> Result<Vec<BenchmarkRow>> {
    if scenarios.is_empty() || methods.is_empty() {
        return Err(config_err!("benchmark needs at least one scenario and one method"));
    }
    let mut rows = Vec::with_capacity(scenarios.len() * methods.len());
    for scenario in scenarios {
        let prepared = scenario.realize().and_then(|r| {
            let norm_iterations = methods
                .iter()
                .filter_map(|m| match &m.kind {
                    MethodKind::Solver(c) => Some(c.norm_iterations),
                    MethodKind::MatchedFilter => None,
                })
                .max()
                .unwrap_or(SolverConfig::default().norm_iterations);
            let problem = SeparationProblem::new(&r.mixture, &r.filters, &r.frame, norm_iterations, scenario.seed)?;
            Ok((r, problem))
        });
        for method in methods {
            let start = clock.elapsed_ms();
            let mut row = BenchmarkRow {
                scenario_id: scenario.id.clone(),
                method_id: method.id.clone(),
                seed: scenario.seed,
                num_sources: scenario.num_sources,
                num_mixtures: scenario.num_mixtures,
                rank: method.rank(),
                sdr_per_source: Vec::new(),
                mean_sdr_db: f64::NAN,
                std_sdr_db: f64::NAN,
                iters: 0,
                wall_ms: 0.0,
                config_hash: config_hash(scenario, method),
                error: None,
            };
            let outcome = match &prepared {
                Ok((r, problem)) => run_method(scenario, method, problem, clock)
                    .and_then(|(est, iters)| Ok((sdr_per_source(&est, &r.truth)?, iters))),
                Err(e) => Err(e.clone()),
            };
            match outcome {
                Ok((sdrs, iters)) => {
                    let (mean, std) = mean_std(&sdrs);
                    row.mean_sdr_db = mean;
                    row.std_sdr_db = std;
                    row.sdr_per_source = sdrs;
                    row.iters = iters;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row.wall_ms = clock.elapsed_ms() - start;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean ± std of the per-cell mean SDR across seeds, for one method at one
/// number of sources.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method_id: String,
    pub num_sources: usize,
    pub cells: usize,
    pub failures: usize,
    pub mean_sdr_db: f64,
    pub std_sdr_db: f64,
}

/// Groups rows by `(method, N)` in order of first appearance.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for row in rows {
        let key = (row.method_id.clone(), row.num_sources);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method_id, n)| {
            let group: Vec<&BenchmarkRow> = rows
                .iter()
                .filter(|r| r.method_id == method_id && r.num_sources == n)
                .collect();
            let values: Vec<f64> = group
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| r.mean_sdr_db)
                .collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                method_id,
                num_sources: n,
                cells: group.len(),
                failures: group.len() - values.len(),
                mean_sdr_db: mean,
                std_sdr_db: std,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdr_examples() {
        let s = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(sdr(&s, &s).unwrap(), SDR_CAP_DB);
        let twice: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        assert_eq!(sdr(&twice, &s).unwrap(), SDR_CAP_DB);
        // n orthogonal to s with equal norm
        let truth = [1.0, 0.0, 1.0, 0.0];
        let est = [1.0, 1.0, 1.0, 1.0];
        assert!(sdr(&est, &truth).unwrap().abs() < 1e-12);
        assert_eq!(sdr(&[0.0; 4], &truth).unwrap(), -SDR_CAP_DB);
        assert_eq!(sdr(&truth, &[0.0; 4]), Err(Error::ZeroReference));
        assert!(sdr(&truth, &[1.0; 3]).is_err());
    }

    #[test]
    fn silent_sources_when_amplitude_is_zero() {
        let cfg = StftConfig::new(2048, 256, 2, WindowKind::Cosine).unwrap();
        let s = generate_lowrank_sources_scaled(2, 2048, 3, 0.0, 5, &cfg, 8000.0).unwrap();
        assert!(s.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sources_are_unit_peak_and_deterministic() {
        let cfg = StftConfig::new(4096, 256, 2, WindowKind::Cosine).unwrap();
        let a = generate_lowrank_sources(3, 4096, 4, 9, &cfg, 8000.0).unwrap();
        let b = generate_lowrank_sources(3, 4096, 4, 9, &cfg, 8000.0).unwrap();
        assert_eq!(a, b);
        for c in a.channels() {
            let peak = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_out_of_range_is_rejected() {
        let cfg = StftConfig::new(512, 64, 2, WindowKind::Cosine).unwrap();
        assert!(generate_lowrank_sources(1, 512, 0, 1, &cfg, 8000.0).is_err());
        assert!(generate_lowrank_sources(1, 512, cfg.num_frames() + 1, 1, &cfg, 8000.0).is_err());
    }

    #[test]
    fn summary_groups_by_method_and_sources() {
        let row = |method: &str, n: usize, sdr: f64| BenchmarkRow {
            scenario_id: "s".into(),
            method_id: method.into(),
            seed: 0,
            num_sources: n,
            num_mixtures: 2,
            rank: None,
            sdr_per_source: vec![sdr],
            mean_sdr_db: sdr,
            std_sdr_db: 0.0,
            iters: 0,
            wall_ms: 0.0,
            config_hash: 0,
            error: None,
        };
        let rows = vec![row("a", 3, 1.0), row("b", 3, 5.0), row("a", 3, 3.0), row("a", 4, 2.0)];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 3);
        assert_eq!(summary[0].method_id, "a");
        assert_eq!(summary[0].cells, 2);
        assert!((summary[0].mean_sdr_db - 2.0).abs() < 1e-12);
        assert!((summary[0].std_sdr_db - 1.0).abs() < 1e-12);
    }
}
