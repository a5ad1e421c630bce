//! The `separate`, `benchmark` and `filters` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use sslr_core::eval::{run_benchmark, sdr_per_source, summarize, BenchmarkRow};
use sslr_core::mixing::generate_synthetic_filters;
use sslr_core::solver::{sslr_separate_with, Clock, NoClock};
use sslr_core::{FilterBank, MultichannelSignal, SeparationResult};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::filters::{read_filter_bank, write_filter_bank};
use crate::report;
use crate::wav::{read_stacked, read_wav, write_wav, WavEncoding};

/// Milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_manifest(cfg: &RunConfig, command: &str) -> CliResult<PathBuf> {
    let path = cfg.out.join("manifest.toml");
    let text = format!("# sslr {command}\n{}", cfg.to_toml());
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("no {what} given")))
}

#[derive(Debug)]
pub struct SeparateOutcome {
    pub result: SeparationResult,
    pub source_files: Vec<PathBuf>,
    pub clipped: usize,
}

pub fn separate(cfg: &RunConfig, clock: &dyn Clock) -> CliResult<SeparateOutcome> {
    let mixture_path = required(&cfg.mixture, "mixture file")?;
    let filters_path = required(&cfg.filters, "filter bank file")?;
    let mixture = read_wav(mixture_path)?;
    let filters = read_filter_bank(filters_path)?;
    if filters.num_out() != mixture.num_channels() {
        return Err(CliError::Config(format!(
            "filter bank has {} outputs but the mixture has {} channels",
            filters.num_out(),
            mixture.num_channels()
        )));
    }
    let truth = if cfg.truth.is_empty() {
        None
    } else {
        let truth = read_stacked(&cfg.truth)?;
        if truth.num_channels() != filters.num_in() || truth.num_samples() != mixture.num_samples() {
            return Err(CliError::Config(format!(
                "reference sources are {} x {}, expected {} x {}",
                truth.num_channels(),
                truth.num_samples(),
                filters.num_in(),
                mixture.num_samples()
            )));
        }
        Some(truth)
    };
    let solver_cfg = cfg.solver.to_solver_config()?;
    let stft_cfg = cfg.stft_config(mixture.num_samples())?;

    let mut result = sslr_separate_with(&mixture, &filters, &solver_cfg, &stft_cfg, clock)?;
    if let Some(truth) = &truth {
        result.sdr_per_source = Some(sdr_per_source(&result.estimates, truth)?);
    }

    create_dir(&cfg.out)?;
    let mut source_files = Vec::with_capacity(result.estimates.num_channels());
    let mut clipped = 0;
    for (n, channel) in result.estimates.channels().enumerate() {
        let path = cfg.out.join(format!("source_{n}.wav"));
        let mono = MultichannelSignal::new(1, channel.len(), mixture.sample_rate(), channel.to_vec())?;
        clipped += write_wav(&mono, &path, WavEncoding::Float32)?;
        source_files.push(path);
    }
    report::write_diagnostics_csv(&result.rounds, &cfg.out.join("diagnostics.csv"))?;
    if let Some(sdr) = &result.sdr_per_source {
        report::write_sdr_csv(sdr, &cfg.out.join("sdr.csv"))?;
    }
    write_manifest(cfg, "separate")?;
    Ok(SeparateOutcome {
        result,
        source_files,
        clipped,
    })
}

/// Runs the synthetic benchmark and writes `results.csv`, `summary.txt` and
/// the manifest under the output directory.
pub fn benchmark(cfg: &RunConfig) -> CliResult<Vec<BenchmarkRow>> {
    let scenarios = cfg.scenarios()?;
    let methods = cfg.methods()?;
    let rows = if cfg.benchmark.timing {
        run_benchmark(&scenarios, &methods, &WallClock::start())?
    } else {
        run_benchmark(&scenarios, &methods, &NoClock)?
    };
    create_dir(&cfg.out)?;
    report::write_results_csv(&rows, &cfg.out.join("results.csv"))?;
    let table = report::summary_table(&summarize(&rows));
    let summary_path = cfg.out.join("summary.txt");
    std::fs::write(&summary_path, &table).map_err(|e| CliError::io(&summary_path, e))?;
    write_manifest(cfg, "benchmark")?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub mixtures: usize,
    pub sources: usize,
    pub len: usize,
    pub decay: f64,
    pub seed: u64,
}

pub fn generate_filters(spec: &FilterSpec, path: &Path) -> CliResult<FilterBank> {
    let bank = generate_synthetic_filters(spec.mixtures, spec.sources, spec.len, spec.decay, spec.seed)?;
    write_filter_bank(&bank, path)?;
    Ok(bank)
}
