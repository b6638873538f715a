//! Run reports and their on-disk form: `report.csv`, `config.echo`,
//! `plot.svg` and, when present, `summary.txt`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::svg::{render_svg, Plot};
use crate::error::{Error, Result};

/// One long-format cell. Empty `seed` marks an aggregate over seeds; empty
/// `theory` marks a cell without a theoretical counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub variant: String,
    pub grid_value: Option<f64>,
    pub seed: Option<u64>,
    pub metric: String,
    pub empirical: Option<f64>,
    pub theory: Option<f64>,
    pub gap: Option<f64>,
}

impl ReportRow {
    pub fn new(
        experiment: ExperimentKind,
        variant: impl Into<String>,
        grid_value: Option<f64>,
        seed: Option<u64>,
        metric: &str,
        empirical: Option<f64>,
        theory: Option<f64>,
    ) -> Self {
        let gap = match (empirical, theory) {
            (Some(e), Some(t)) => Some((e - t).abs()),
            _ => None,
        };
        ReportRow {
            experiment: experiment.as_str().to_string(),
            variant: variant.into(),
            grid_value,
            seed,
            metric: metric.to_string(),
            empirical,
            theory,
            gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub rows: Vec<ReportRow>,
    pub provenance: Provenance,
    pub plot: Plot,
    /// Human-readable table lines, e.g. mean +- std per variant.
    pub summary: Vec<String>,
    /// Caveats raised during the run (skipped grid points, estimated inputs).
    pub notes: Vec<String>,
}

impl RunReport {
    /// First row matching the given keys; `None` keys match aggregate rows.
    pub fn find(&self, variant: &str, grid_value: Option<f64>, seed: Option<u64>, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.variant == variant
                && r.metric == metric
                && r.seed == seed
                && match (r.grid_value, grid_value) {
                    (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                    (None, None) => true,
                    _ => false,
                }
        })
    }

    /// Rows whose theory cell is missing although the metric has theory.
    pub fn unpaired_rows(&self) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.empirical.is_some() && r.theory.is_none() && has_theory(r))
            .collect()
    }
}

/// Seed spreads, solver diagnostics and multiclass cells are empirical only.
fn has_theory(row: &ReportRow) -> bool {
    const EMPIRICAL_ONLY: [&str; 4] = ["residual", "warning", "on_boundary", "search_accuracy"];
    row.experiment != "multiclass"
        && !row.metric.ends_with("_seed_sd")
        && !EMPIRICAL_ONLY.contains(&row.metric.as_str())
}

pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes the report files into `dir`, creating it if needed.
pub fn emit_report(report: &RunReport, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_report_csv(&report.rows, &dir.join("report.csv"))?;

    let mut echo = String::new();
    echo.push_str(&format!("# config_hash = {}\n", report.provenance.config_hash));
    let seeds: Vec<String> = report.provenance.seeds.iter().map(u64::to_string).collect();
    echo.push_str(&format!("# seeds = {}\n", seeds.join(",")));
    echo.push_str(&format!("# version = {}\n", report.provenance.version));
    for note in &report.notes {
        echo.push_str(&format!("# note: {note}\n"));
    }
    echo.push_str(&cfg.to_toml()?);
    write(&dir.join("config.echo"), &echo)?;
    write(&dir.join("plot.svg"), &render_svg(&report.plot))?;
    if !report.summary.is_empty() {
        write(&dir.join("summary.txt"), &(report.summary.join("\n") + "\n"))?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
