//! Flat whitespace-separated files for gnuplot, one per rate report.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use spde_core::analysis::{RateAxis, RateReport};

use crate::error::{HarnessError, Result};

pub const PLOT_HEADER: &str = "# log_abscissa log_error fitted_log_error abscissa error omega_fraction";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub log_abscissa: f64,
    pub log_error: f64,
    /// `NaN` when the report has no fit.
    pub fitted_log_error: f64,
    pub abscissa: f64,
    pub error: f64,
    pub omega_fraction: f64,
}

/// Rows of one report. The fitted line passes through the centroid of the
/// log data with the reported slope.
pub fn plot_rows(report: &RateReport) -> Vec<PlotRow> {
    let logs: Vec<(f64, f64)> = report
        .points
        .iter()
        .map(|p| (p.abscissa.ln(), p.error().ln()))
        .collect();
    let line = report.fit.map(|f| {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
        let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
        (f.order, my - f.order * mx)
    });
    report
        .points
        .iter()
        .zip(&logs)
        .map(|(p, &(lx, ly))| PlotRow {
            log_abscissa: lx,
            log_error: ly,
            fitted_log_error: line.map_or(f64::NAN, |(s, c)| c + s * lx),
            abscissa: p.abscissa,
            error: p.error(),
            omega_fraction: p.omega_fraction,
        })
        .collect()
}

pub fn render(rows: &[PlotRow]) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            r.log_abscissa, r.log_error, r.fitted_log_error, r.abscissa, r.error, r.omega_fraction
        );
    }
    s
}

pub fn parse(text: &str) -> Result<Vec<PlotRow>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| HarnessError::config("plot data", format!("`{l}`: {e}")))?;
            if v.len() != 6 {
                return Err(HarnessError::config("plot data", format!("`{l}`: expected 6 columns")));
            }
            Ok(PlotRow {
                log_abscissa: v[0],
                log_error: v[1],
                fitted_log_error: v[2],
                abscissa: v[3],
                error: v[4],
                omega_fraction: v[5],
            })
        })
        .collect()
}

pub fn file_name(axis: RateAxis, beta: Option<f64>) -> String {
    match beta {
        Some(b) => format!("plot_{}_beta{b}.dat", axis.as_str()),
        None => format!("plot_{}.dat", axis.as_str()),
    }
}

/// Reads `rates_<axis>.csv` from `input_dir` and writes one `plot_*.dat` per
/// report into `out_dir`; an axis without reports gets a header-only file.
pub fn emit_plot_data(input_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::file(out_dir, e))?;
    let mut written = Vec::new();
    for axis in [RateAxis::Time, RateAxis::Space] {
        let src = input_dir.join(format!("rates_{}.csv", axis.as_str()));
        let file = std::fs::File::open(&src).map_err(|e| HarnessError::file(&src, e))?;
        let reports = RateReport::read_csv(BufReader::new(file)).map_err(|e| HarnessError::file(&src, e))?;
        let reports: Vec<RateReport> = reports.into_iter().filter(|r| r.axis == axis).collect();
        if reports.is_empty() {
            let dst = out_dir.join(file_name(axis, None));
            std::fs::write(&dst, render(&[])).map_err(|e| HarnessError::file(&dst, e))?;
            written.push(dst);
        }
        for r in &reports {
            let dst = out_dir.join(file_name(axis, Some(r.beta)));
            std::fs::write(&dst, render(&plot_rows(r))).map_err(|e| HarnessError::file(&dst, e))?;
            written.push(dst);
        }
    }
    Ok(written)
}
