//! Run configuration: a TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sslr_core::eval::{decay_for_len, Method, Scenario, SourceSpec};
use sslr_core::solver::{Tau, WeightFloor};
use sslr_core::{RankBudget, SolverConfig, StftConfig};

use crate::error::{CliError, CliResult};

/// Rank budget of the spectrogram constraint, or `off` for plain reweighted
/// analysis sparsity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSetting {
    Off,
    Rank(usize),
}

impl fmt::Display for RankSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Off => f.write_str("off"),
            Self::Rank(r) => write!(f, "{r}"),
        }
    }
}

impl std::str::FromStr for RankSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("off") {
            return Ok(Self::Off);
        }
        match s.parse::<usize>() {
            Ok(r) if r > 0 => Ok(Self::Rank(r)),
            _ => Err(format!("expected a positive integer or 'off', got '{s}'")),
        }
    }
}

impl Serialize for RankSetting {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Off => serializer.serialize_str("off"),
            Self::Rank(r) => serializer.serialize_u64(*r as u64),
        }
    }
}

impl<'de> Deserialize<'de> for RankSetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(r) => format!("{r}").parse(),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloorSetting {
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub eps: f64,
    pub rank: RankSetting,
    pub gamma: f64,
    /// Explicit primal step; chosen from the operator norm when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub rounds: usize,
    pub iters: usize,
    pub inner_tol: f64,
    pub reweight: bool,
    pub reweight_floor: FloorSetting,
    pub seed: u64,
    pub norm_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            eps: d.eps,
            rank: RankSetting::Rank(d.rank.get()),
            gamma: d.gamma,
            tau: None,
            rounds: d.reweight_rounds,
            iters: d.max_inner_iters,
            inner_tol: d.inner_tol,
            reweight: d.reweight_enabled,
            reweight_floor: match d.reweight_floor {
                WeightFloor::Relative(v) => FloorSetting::Relative(v),
                WeightFloor::Absolute(v) => FloorSetting::Absolute(v),
            },
            seed: d.seed,
            norm_iterations: d.norm_iterations,
        }
    }
}

impl SolverSection {
    pub fn to_solver_config(&self) -> CliResult<SolverConfig> {
        let defaults = SolverConfig::default();
        let (rank, rank_enabled) = match self.rank {
            RankSetting::Off => (defaults.rank, false),
            RankSetting::Rank(r) => (RankBudget::new(r)?, true),
        };
        let cfg = SolverConfig {
            eps: self.eps,
            rank,
            rank_enabled,
            gamma: self.gamma,
            tau: self.tau.map_or(Tau::Auto, Tau::Fixed),
            max_inner_iters: self.iters,
            inner_tol: self.inner_tol,
            reweight_rounds: self.rounds,
            reweight_floor: match self.reweight_floor {
                FloorSetting::Relative(v) => WeightFloor::Relative(v),
                FloorSetting::Absolute(v) => WeightFloor::Absolute(v),
            },
            reweight_enabled: self.reweight,
            seed: self.seed,
            norm_iterations: self.norm_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub window: usize,
    pub redundancy: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        Self {
            window: StftConfig::DEFAULT_WINDOW_LEN,
            redundancy: StftConfig::DEFAULT_REDUNDANCY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub seeds: Vec<u64>,
    pub mixtures: usize,
    pub sources: Vec<usize>,
    pub samples: usize,
    pub sample_rate: f64,
    pub filter_len: usize,
    /// Energy decay constant in taps; 60 dB over the filter length if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_decay: Option<f64>,
    pub source_rank: usize,
    pub ranks: Vec<usize>,
    pub ssra: bool,
    pub matched_filter: bool,
    /// Record wall-clock times in the results. Off by default so that
    /// repeated runs give identical files.
    pub timing: bool,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        let s = Scenario::synthetic("", 0, 2, 3);
        Self {
            seeds: (0..5).collect(),
            mixtures: s.num_mixtures,
            sources: vec![s.num_sources],
            samples: s.num_samples,
            sample_rate: s.sample_rate,
            filter_len: s.filter_len,
            filter_decay: None,
            source_rank: 5,
            ranks: s.rank_sweep,
            ssra: true,
            matched_filter: true,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filters: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub truth: Vec<PathBuf>,
    pub out: PathBuf,
    pub verbosity: u8,
    pub solver: SolverSection,
    pub stft: StftSection,
    pub benchmark: BenchmarkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mixture: None,
            filters: None,
            truth: Vec::new(),
            out: PathBuf::from("sslr-out"),
            verbosity: 1,
            solver: SolverSection::default(),
            stft: StftSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|message| CliError::Format {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes to TOML")
    }

    pub fn stft_config(&self, signal_len: usize) -> CliResult<StftConfig> {
        Ok(StftConfig::new(
            signal_len,
            self.stft.window,
            self.stft.redundancy,
            sslr_core::WindowKind::Cosine,
        )?)
    }

    pub fn scenarios(&self) -> CliResult<Vec<Scenario>> {
        let b = &self.benchmark;
        if b.seeds.is_empty() || b.sources.is_empty() {
            return Err(CliError::Config("benchmark needs at least one seed and one source count".into()));
        }
        let mut out = Vec::with_capacity(b.seeds.len() * b.sources.len());
        for &n in &b.sources {
            for &seed in &b.seeds {
                let mut s = Scenario::synthetic(format!("m{}-n{n}-seed{seed}", b.mixtures), seed, b.mixtures, n);
                s.num_samples = b.samples;
                s.sample_rate = b.sample_rate;
                s.filter_len = b.filter_len;
                s.filter_decay = b.filter_decay.unwrap_or_else(|| decay_for_len(b.filter_len));
                s.sources = SourceSpec::Synthetic { rank: b.source_rank };
                s.eps = self.solver.eps;
                s.rank_sweep = b.ranks.clone();
                s.window_len = self.stft.window;
                s.redundancy = self.stft.redundancy;
                s.validate()?;
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn methods(&self) -> CliResult<Vec<Method>> {
        let base = self.solver.to_solver_config()?;
        let mut out = Vec::new();
        if self.benchmark.matched_filter {
            out.push(Method::matched_filter());
        }
        if self.benchmark.ssra {
            out.push(Method::ssra(&base));
        }
        for &r in &self.benchmark.ranks {
            out.push(Method::sslr(&base, r)?);
        }
        if out.is_empty() {
            return Err(CliError::Config("benchmark has no methods".into()));
        }
        Ok(out)
    }
}
