//! Persisting experiment reports.
//!
//! `emit_report` writes into one directory:
//!
//! | file               | rows                                   | columns                                  |
//! |--------------------|----------------------------------------|------------------------------------------|
//! | `means.csv`        | one per method (per ζ in sweeps)       | `[zeta,]method,<parameters…>`            |
//! | `std.csv`          | same                                   | average posterior standard deviation     |
//! | `cov.csv`          | same                                   | coverage of the 95% interval, percent    |
//! | `rmse.csv`         | same                                   | RMSE of the posterior means              |
//! | `replications.csv` | one per (dataset, method)              | per-dataset posterior summaries          |
//! | `report.json`      | —                                      | the full report, config and seed included|
//!
//! Rows of a method with fewer than 90% successful replications hold `nan`.
//! Floats are written with 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{AggregateStats, ExperimentReport};
use crate::fmt::g17;

pub const MEANS_FILE: &str = "means.csv";
pub const STD_FILE: &str = "std.csv";
pub const COVERAGE_FILE: &str = "cov.csv";
pub const RMSE_FILE: &str = "rmse.csv";
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const REPORT_FILE: &str = "report.json";

/// Output formats of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Both,
}

fn is_sweep(report: &ExperimentReport) -> bool {
    report.aggregates.iter().any(|a| a.zeta.is_some()) || report.config.zeta_grid.is_some()
}

fn header(report: &ExperimentReport) -> String {
    let mut cols: Vec<&str> = Vec::new();
    if is_sweep(report) {
        cols.push("zeta");
    }
    cols.push("method");
    cols.extend(report.parameter_names.iter().map(String::as_str));
    cols.join(",")
}

/// One aggregate table as CSV text.
pub fn table_csv(report: &ExperimentReport, pick: fn(&AggregateStats) -> &Vec<f64>) -> String {
    let sweep = is_sweep(report);
    let d = report.parameter_names.len();
    let mut out = header(report);
    out.push('\n');
    for a in &report.aggregates {
        let mut fields = Vec::with_capacity(d + 2);
        if sweep {
            fields.push(a.zeta.map_or_else(String::new, g17));
        }
        fields.push(a.label.clone());
        match &a.stats {
            Some(s) => fields.extend(pick(s).iter().map(|v| g17(*v))),
            None => fields.extend(std::iter::repeat_n("nan".to_string(), d)),
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Per-dataset summaries as CSV text.
pub fn replications_csv(report: &ExperimentReport) -> String {
    let names = &report.parameter_names;
    let mut cols = vec![
        "replication".to_string(),
        "zeta".into(),
        "method".into(),
        "data_fingerprint".into(),
        "status".into(),
        "epsilon".into(),
        "total_simulations".into(),
    ];
    for prefix in ["mean", "std", "ci_low", "ci_high"] {
        cols.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    }
    let mut out = cols.join(",");
    out.push('\n');
    for r in &report.replications {
        for o in &r.outcomes {
            let mut f = vec![
                r.replication.to_string(),
                r.zeta.map_or_else(String::new, g17),
                o.label.clone(),
                format!("{:016x}", o.data_fingerprint),
                if o.summary.is_some() { "ok".into() } else { "failed".into() },
                g17(o.epsilon),
                o.total_simulations.to_string(),
            ];
            match &o.summary {
                Some(s) => {
                    for v in [&s.mean, &s.std, &s.ci_low, &s.ci_high] {
                        f.extend(v.iter().map(|x| g17(*x)));
                    }
                }
                None => f.extend(std::iter::repeat_n("nan".to_string(), 4 * names.len())),
            }
            out.push_str(&f.join(","));
            out.push('\n');
        }
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the report into `dir` (created if missing); returns the files
/// written.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        written.push(write(dir, MEANS_FILE, &table_csv(report, |s| &s.overall_mean))?);
        written.push(write(dir, STD_FILE, &table_csv(report, |s| &s.avg_posterior_std))?);
        written.push(write(dir, COVERAGE_FILE, &table_csv(report, |s| &s.coverage_pct))?);
        written.push(write(dir, RMSE_FILE, &table_csv(report, |s| &s.rmse))?);
        written.push(write(dir, REPLICATIONS_FILE, &replications_csv(report))?);
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        written.push(write(dir, REPORT_FILE, &text)?);
    }
    Ok(written)
}

/// Reads `report.json` from a directory written by [`emit_report`].
pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        message: e.to_string(),
    })
}
