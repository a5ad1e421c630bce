//! Plain-text filter bank files.
//!
//! ```text
//! sslr-filters 1
//! M N L
//! <L taps of filter (0, 0)>
//! <L taps of filter (0, 1)>
//! ...
//! ```
//!
//! Filters are listed row-major over `(m, n)`, one per line, taps separated
//! by spaces. Values use the shortest representation that parses back to the
//! same `f64`. Lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use sslr_core::FilterBank;

use crate::error::{CliError, CliResult};

const MAGIC: &str = "sslr-filters 1";

pub fn format_filter_bank(bank: &FilterBank) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "{} {} {}", bank.num_out(), bank.num_in(), bank.filter_len());
    for m in 0..bank.num_out() {
        for n in 0..bank.num_in() {
            let line: Vec<String> = bank.filter(m, n).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn parse_filter_bank(text: &str) -> Result<FilterBank, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    if lines.next() != Some(MAGIC) {
        return Err(format!("missing '{MAGIC}' header"));
    }
    let dims: Vec<usize> = lines
        .next()
        .ok_or("missing dimensions line")?
        .split_whitespace()
        .map(|v| v.parse::<usize>().map_err(|e| format!("bad dimension '{v}': {e}")))
        .collect::<Result<_, _>>()?;
    let [m, n, l] = dims[..] else {
        return Err(format!("expected 'M N L', found {} values", dims.len()));
    };
    let mut taps = Vec::with_capacity(m * n * l);
    for (row, line) in lines.enumerate() {
        let before = taps.len();
        for v in line.split_whitespace() {
            taps.push(v.parse::<f64>().map_err(|e| format!("bad tap '{v}': {e}"))?);
        }
        if taps.len() - before != l {
            return Err(format!("filter {row} has {} taps, expected {l}", taps.len() - before));
        }
    }
    if taps.len() != m * n * l {
        return Err(format!("found {} filters, expected {}", taps.len() / l.max(1), m * n));
    }
    FilterBank::new(m, n, l, taps).map_err(|e| e.to_string())
}

pub fn read_filter_bank(path: &Path) -> CliResult<FilterBank> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_filter_bank(&text).map_err(|message| CliError::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_filter_bank(bank: &FilterBank, path: &Path) -> CliResult<()> {
    std::fs::write(path, format_filter_bank(bank)).map_err(|e| CliError::io(path, e))
}
