//! CSV tables and the plain-text summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sslr_core::eval::{BenchmarkRow, SummaryRow};
use sslr_core::solver::RoundDiagnostics;

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct ResultRecord<'a> {
    scenario_id: &'a str,
    method_id: &'a str,
    seed: u64,
    #[serde(rename = "N")]
    num_sources: usize,
    #[serde(rename = "M")]
    num_mixtures: usize,
    r: String,
    mean_sdr_db: f64,
    std_sdr_db: f64,
    iters: usize,
    wall_ms: f64,
    config_hash: String,
    status: &'a str,
}

#[derive(Debug, Serialize)]
struct DiagnosticsRecord {
    round: usize,
    iter: usize,
    residual: f64,
    objective: f64,
    s_change: f64,
    rank_excess: String,
    wall_ms: f64,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for record in records {
        writer.serialize(record).map_err(csv_err(path))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn results_csv_string(rows: &[BenchmarkRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(result_record(row))
            .expect("benchmark rows serialize to CSV");
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

fn result_record(row: &BenchmarkRow) -> ResultRecord<'_> {
    ResultRecord {
        scenario_id: &row.scenario_id,
        method_id: &row.method_id,
        seed: row.seed,
        num_sources: row.num_sources,
        num_mixtures: row.num_mixtures,
        r: row.rank.map_or_else(|| "off".to_string(), |r| r.to_string()),
        mean_sdr_db: row.mean_sdr_db,
        std_sdr_db: row.std_sdr_db,
        iters: row.iters,
        wall_ms: row.wall_ms,
        config_hash: format!("{:016x}", row.config_hash),
        status: row.error.as_deref().unwrap_or("ok"),
    }
}

pub fn write_results_csv(rows: &[BenchmarkRow], path: &Path) -> CliResult<()> {
    write_records(path, rows.iter().map(result_record))
}

pub fn write_diagnostics_csv(rounds: &[RoundDiagnostics], path: &Path) -> CliResult<()> {
    let records = rounds.iter().flat_map(|round| {
        round.iterations.records.iter().map(move |rec| DiagnosticsRecord {
            round: round.round,
            iter: rec.iter,
            residual: rec.residual,
            objective: rec.objective,
            s_change: rec.s_change,
            rank_excess: rec.rank_excess.map_or_else(String::new, |r| r.to_string()),
            wall_ms: rec.wall_ms,
        })
    });
    write_records(path, records)
}

pub fn write_sdr_csv(sdr: &[f64], path: &Path) -> CliResult<()> {
    #[derive(Serialize)]
    struct Row {
        source: usize,
        sdr_db: f64,
    }
    write_records(
        path,
        sdr.iter().enumerate().map(|(source, &sdr_db)| Row { source, sdr_db }),
    )
}

/// Aligned text table: one line per method and number of sources.
pub fn summary_table(summary: &[SummaryRow]) -> String {
    let width = summary
        .iter()
        .map(|s| s.method_id.len())
        .max()
        .unwrap_or(0)
        .max("method".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>3}  {:>5}  {:>6}  {:>9}  {:>7}",
        "method", "N", "cells", "failed", "SDR (dB)", "std"
    );
    for s in summary {
        let _ = writeln!(
            out,
            "{:<width$}  {:>3}  {:>5}  {:>6}  {:>9.2}  {:>7.2}",
            s.method_id, s.num_sources, s.cells, s.failures, s.mean_sdr_db, s.std_sdr_db
        );
    }
    out
}
