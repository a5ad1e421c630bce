//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sslr_core::eval::{decay_for_len, summarize};

use crate::commands::{self, FilterSpec, WallClock};
use crate::config::{RankSetting, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::summary_table;
use crate::selftest;

#[derive(Debug, Parser)]
#[command(name = "sslr", version, about = "Sparse and low-rank separation of convolutive mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the sources of a mixture with known filters.
    Separate,
    /// Run the synthetic benchmark and write a results table.
    Benchmark,
    /// Check the numerical invariants of the operators.
    Selftest,
    /// Write a synthetic filter bank.
    Filters(FilterArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, default_value_t = 2)]
    pub mixtures: usize,
    #[arg(long, default_value_t = 3)]
    pub sources: usize,
    #[arg(long, default_value_t = 200)]
    pub len: usize,
    /// Energy decay constant in taps [default: 60 dB over the length]
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

/// Flags taking precedence over the configuration file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mixture: Option<PathBuf>,
    #[arg(long, global = true)]
    pub filters: Option<PathBuf>,
    /// Reference source files, stacked in order
    #[arg(long, global = true, num_args = 1..)]
    pub truth: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Spectrogram rank budget, or `off`
    #[arg(long, global = true)]
    pub rank: Option<RankSetting>,
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub redundancy: Option<usize>,
    /// Benchmark seeds, e.g. `0,1,2`
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Benchmark source counts, e.g. `2,3,4`
    #[arg(long, global = true, value_delimiter = ',')]
    pub sources_list: Option<Vec<usize>>,
    /// Benchmark rank sweep, e.g. `5,10`
    #[arg(long, global = true, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Record wall-clock times in benchmark results
    #[arg(long, global = true)]
    pub timing: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

impl Overrides {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        if self.mixture.is_some() {
            cfg.mixture = self.mixture.clone();
        }
        if self.filters.is_some() {
            cfg.filters = self.filters.clone();
        }
        if !self.truth.is_empty() {
            cfg.truth = self.truth.clone();
        }
        set!(self.out => cfg.out);
        set!(self.eps => cfg.solver.eps);
        set!(self.rank => cfg.solver.rank);
        set!(self.rounds => cfg.solver.rounds);
        set!(self.iters => cfg.solver.iters);
        set!(self.gamma => cfg.solver.gamma);
        set!(self.window => cfg.stft.window);
        set!(self.redundancy => cfg.stft.redundancy);
        set!(self.seeds => cfg.benchmark.seeds);
        set!(self.sources_list => cfg.benchmark.sources);
        set!(self.ranks => cfg.benchmark.ranks);
        if let Some(seed) = self.seed {
            cfg.solver.seed = seed;
            if self.seeds.is_none() {
                cfg.benchmark.seeds = vec![seed];
            }
        }
        cfg.benchmark.timing |= self.timing;
        if self.quiet {
            cfg.verbosity = 0;
        } else {
            cfg.verbosity = cfg.verbosity.saturating_add(self.verbose);
        }
        Ok(cfg)
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = cli.overrides.resolve()?;
    let loud = cfg.verbosity > 0;
    match &cli.command {
        Command::Separate => {
            let outcome = commands::separate(&cfg, &WallClock::start())?;
            if loud {
                for round in &outcome.result.rounds {
                    let last = round.iterations.last();
                    println!(
                        "round {}: {} iterations, objective {:.6e} -> {:.6e}, residual {:.3e}",
                        round.round,
                        round.iterations.iterations(),
                        round.start_objective,
                        round.final_objective,
                        last.map_or(f64::NAN, |r| r.residual)
                    );
                }
                if let Some(sdr) = &outcome.result.sdr_per_source {
                    for (n, v) in sdr.iter().enumerate() {
                        println!("source {n}: SDR {v:.2} dB");
                    }
                }
                for path in &outcome.source_files {
                    println!("wrote {}", path.display());
                }
            }
            if outcome.clipped > 0 {
                eprintln!("warning: {} samples clipped to [-1, 1] on output", outcome.clipped);
            }
        }
        Command::Benchmark => {
            let rows = commands::benchmark(&cfg)?;
            if loud {
                print!("{}", summary_table(&summarize(&rows)));
            }
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("warning: {failed} benchmark cells failed, see results.csv");
            }
        }
        Command::Selftest => {
            let checks = selftest::run(&cfg)?;
            for check in &checks {
                println!("{check}");
            }
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| c.name.clone())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::Checks(failed));
            }
        }
        Command::Filters(args) => {
            let spec = FilterSpec {
                mixtures: args.mixtures,
                sources: args.sources,
                len: args.len,
                decay: args.decay.unwrap_or_else(|| decay_for_len(args.len)),
                seed: args.seed,
            };
            commands::generate_filters(&spec, &args.output)?;
            if loud {
                println!("wrote {}", args.output.display());
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
