//! CSV and manifest writers for experiment artifacts.
//!
//! Every float is written with 17 significant digits so files round-trip
//! bit-exactly, and re-running from a manifest reproduces them byte for
//! byte. Optional fields serialize as empty cells.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::summary::Histogram;
use super::{CellResult, ExperimentConfig, SmallballProfile};

/// Formats a float so that parsing the text recovers the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes one row per `(cell, level)` with rejection rates and their
/// binomial standard errors.
pub fn write_rates_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label",
        "n",
        "rule",
        "bandwidth",
        "alpha2",
        "c",
        "gamma",
        "alpha",
        "reps",
        "reps_used",
        "degenerate",
        "flagged",
        "rate",
        "se",
    ])?;
    for cell in cells {
        for rate in &cell.rates {
            w.write_record([
                cell.label.clone(),
                cell.n.to_string(),
                fmt_f64(cell.rule),
                fmt_f64(cell.bandwidth),
                fmt_opt(cell.alpha2),
                fmt_opt(cell.c),
                fmt_f64(cell.gamma),
                fmt_f64(rate.alpha),
                cell.reps_total.to_string(),
                cell.reps_used.to_string(),
                cell.degenerate.to_string(),
                cell.flagged.to_string(),
                fmt_f64(rate.rate),
                fmt_f64(rate.se),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the studentized statistics of one cell, one per replication kept.
pub fn write_tau_csv(path: &Path, taus: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rep", "tau"])?;
    for (i, t) in taus.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*t)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes histogram bins as `(bin_lo, bin_hi, count)` rows.
pub fn write_hist_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (k, count) in hist.counts.iter().enumerate() {
        w.write_record([fmt_f64(hist.edges[k]), fmt_f64(hist.edges[k + 1]), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes small-ball curves with their fitted exponents, one row per
/// `(sample size, bandwidth)`.
pub fn write_smallball_csv(path: &Path, profiles: &[SmallballProfile]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "h", "r_hat", "pairs", "slope", "slope_se"])?;
    for p in profiles {
        for (k, h) in p.curve.h.iter().enumerate() {
            w.write_record([
                p.n.to_string(),
                fmt_f64(*h),
                fmt_f64(p.curve.r_hat[k]),
                p.curve.pair_count[k].to_string(),
                fmt_f64(p.fit.slope),
                fmt_f64(p.fit.stderr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    root_seed: u64,
    config: ExperimentConfig,
}

/// Writes the resolved configuration (seed included) as a TOML manifest.
pub fn write_manifest(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let manifest = Manifest { root_seed: cfg.seed, config: cfg.clone() };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

/// Reads the configuration back from a manifest written by
/// [`write_manifest`], for byte-identical re-runs.
pub fn read_manifest(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let manifest: Manifest = toml::from_str(&text)?;
    Ok(manifest.config)
}

/// Writes a sample matrix with columns `x1..xq`.
pub fn write_matrix_csv(path: &Path, x: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=x.cols()).map(|j| format!("x{j}")))?;
    for row in x.iter_rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a regression sample with columns `x1..xq,y`.
pub fn write_xy_csv(path: &Path, x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::InvalidInput("x and y have different lengths".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=x.cols()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (row, yi) in x.iter_rows().zip(y) {
        let mut rec: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(fmt_f64(*yi));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a regression sample written by [`write_xy_csv`]: columns `x1..xq`
/// in order plus a final `y` column.
pub fn read_xy_csv(path: &Path) -> Result<(Matrix, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let cols = headers.len();
    if cols < 2 || &headers[cols - 1] != "y" {
        return Err(Error::InvalidInput(
            "expected columns x1..xq followed by a final y column".into(),
        ));
    }
    for (j, name) in headers.iter().take(cols - 1).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(Error::InvalidInput(format!(
                "expected column {} to be named x{}, got {name:?}",
                j + 1,
                j + 1
            )));
        }
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for record in r.records() {
        let record = record?;
        let mut row = Vec::with_capacity(cols - 1);
        for field in record.iter().take(cols - 1) {
            row.push(parse_field(field)?);
        }
        y.push(parse_field(&record[cols - 1])?);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("data file has no rows".into()));
    }
    Ok((Matrix::from_rows(&rows)?, y))
}

fn parse_field(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("unparseable number {field:?}")))
}
