//! Monte-Carlo drivers. Each path is owned end to end by one worker and
//! results are reduced in `path_id` order, so sequential and parallel runs
//! write the same bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use spde_core::analysis::{
    error_norms, fit_order, localized_error_estimate, omega_k_indicator, ErrorRecord, IncrementMoments,
    LocalizationRule, OrderFit, RateAxis, RatePoint, RateReport, RATE_CSV_HEADER,
};
use spde_core::exec::map_paths;
use spde_core::spectral::NeumaierSum;
use spde_core::{
    coarsen_to, integrate, integrate_with, norm_sq, reference_solution, sample_path, Error as CoreError, Execution,
    SchemeConfig, SchemeVariant, TimeGrid,
};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const RATES_TIME: &str = "rates_time.csv";
pub const RATES_SPACE: &str = "rates_space.csv";
pub const STABILITY: &str = "stability.csv";
pub const REGULARITY: &str = "regularity.csv";
pub const AGREEMENT: &str = "agreement.csv";

/// Step failures are counted; anything else aborts the experiment.
fn is_path_failure(e: &CoreError) -> bool {
    matches!(e, CoreError::StepFailure { .. } | CoreError::NonConvergence { .. } | CoreError::InvalidState(_))
}

fn absorb<T>(r: spde_core::Result<T>, path_id: u64) -> spde_core::Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_path_failure(&e) => {
            warn!("path {path_id}: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn path_ids(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

fn check_failures(cfg: &ExperimentConfig, what: &str, failures: usize, total: usize) -> Result<()> {
    if failures as f64 > cfg.run.max_failure_fraction * total as f64 {
        return Err(HarnessError::Numerical(format!(
            "{what}: {failures} of {total} paths failed (limit {})",
            cfg.run.max_failure_fraction
        )));
    }
    if failures > 0 {
        warn!("{what}: {failures} of {total} paths failed and were excluded");
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::file(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::file(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| HarnessError::file(path, e))
}

/// Records of one path: `time[m][b]` for sweep entry `m` and beta `b`,
/// likewise `space[n][b]`. `None` marks a failed run.
struct PathRecords {
    time: Vec<Option<Vec<ErrorRecord>>>,
    space: Vec<Option<Vec<ErrorRecord>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOutcome {
    pub time: Vec<RateReport>,
    pub space: Vec<RateReport>,
    pub n_paths: usize,
    /// Paths with at least one failed run.
    pub n_failed_paths: usize,
}

fn rate_path(cfg: &ExperimentConfig, path_id: u64) -> spde_core::Result<PathRecords> {
    let model = cfg.model().map_err(|e| CoreError::Domain(e.to_string()))?;
    let spec = &model.spectrum;
    let noise = cfg.noise_spec().map_err(|e| CoreError::Domain(e.to_string()))?;
    let scheme = cfg.scheme_config();
    let rule = LocalizationRule::new(cfg.analysis.epsilon)?;
    let u0 = cfg.initial_state();
    let betas = &cfg.analysis.betas;
    let n_ref = cfg.space.n_ref;
    let fine = sample_path(&noise, cfg.time.horizon, cfg.time.m_fine, path_id)?;
    let fine_grid = TimeGrid::new(cfg.time.horizon, cfg.time.m_fine)?;

    let failed = |n_levels: usize| PathRecords {
        time: vec![None; cfg.sweep.m.len()],
        space: vec![None; n_levels],
    };
    let Some(reference) = absorb(reference_solution(&u0, &fine, &model, n_ref, &scheme), path_id)? else {
        return Ok(failed(cfg.sweep.n.len()));
    };

    let records = |traj: &spde_core::Trajectory, n_modes: usize| -> spde_core::Result<Vec<ErrorRecord>> {
        let in_omega = omega_k_indicator(traj, &reference, &rule, spec)?;
        betas
            .iter()
            .map(|&beta| {
                let (err_max_beta, err_energy) = error_norms(traj, &reference, beta, spec)?;
                Ok(ErrorRecord {
                    k: traj.grid.k(),
                    n_modes,
                    beta,
                    path_id,
                    in_omega_k: in_omega,
                    err_max_beta,
                    err_energy,
                })
            })
            .collect()
    };

    let mut time = Vec::with_capacity(cfg.sweep.m.len());
    for &m in &cfg.sweep.m {
        let grid = TimeGrid::new(cfg.time.horizon, m)?;
        let coarse = coarsen_to(&fine, m)?;
        time.push(match absorb(integrate(&u0, &coarse, &model, &grid, n_ref, &scheme), path_id)? {
            Some(traj) => Some(records(&traj, n_ref)?),
            None => None,
        });
    }
    // spatial sweep at the finest step, so the temporal error cancels
    let mut space = Vec::with_capacity(cfg.sweep.n.len());
    for &n in &cfg.sweep.n {
        space.push(match absorb(integrate(&u0, &fine, &model, &fine_grid, n, &scheme), path_id)? {
            Some(traj) => Some(records(&traj, n)?),
            None => None,
        });
    }
    Ok(PathRecords { time, space })
}

fn aggregate(
    axis: RateAxis,
    betas: &[f64],
    abscissae: &[f64],
    per_path: &[&[Option<Vec<ErrorRecord>>]],
) -> Result<Vec<RateReport>> {
    let mut reports = Vec::with_capacity(betas.len());
    for (b, &beta) in betas.iter().enumerate() {
        let mut points = Vec::with_capacity(abscissae.len());
        for (level, &x) in abscissae.iter().enumerate() {
            let recs: Vec<ErrorRecord> = per_path
                .iter()
                .filter_map(|p| p[level].as_ref().map(|r| r[b]))
                .collect();
            let n_failures = per_path.len() - recs.len();
            let (max_err, energy_err, fraction) = if recs.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let est = localized_error_estimate(&recs)?;
                (est.mean_max_err, est.mean_energy_err, est.omega_fraction)
            };
            points.push(RatePoint {
                abscissa: x,
                localized_max_err: max_err,
                localized_energy_err: energy_err,
                omega_fraction: fraction,
                n_paths: recs.len(),
                n_failures,
            });
        }
        reports.push(RateReport::build(axis, beta, points));
    }
    Ok(reports)
}

/// Coupled coarse/fine runs over the `(k, N)` sweep.
pub fn run_rate_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RateOutcome> {
    cfg.validate()?;
    let spec = cfg.spectrum()?;
    info!(
        "rate experiment: {} paths, M_fine = {}, N_ref = {}",
        cfg.run.n_paths, cfg.time.m_fine, cfg.space.n_ref
    );
    let results = map_paths(exec, &path_ids(cfg.run.n_paths), |id| rate_path(cfg, id));
    let per_path = results.into_iter().collect::<spde_core::Result<Vec<_>>>()?;
    let n_failed_paths = per_path
        .iter()
        .filter(|p| p.time.iter().chain(&p.space).any(Option::is_none))
        .count();

    let ks: Vec<f64> = cfg.sweep.m.iter().map(|&m| cfg.time.horizon / m as f64).collect();
    let mus: Vec<f64> = cfg.sweep.n.iter().map(|&n| spec.mu_at(n)).collect();
    let time_levels: Vec<&[Option<Vec<ErrorRecord>>]> = per_path.iter().map(|p| p.time.as_slice()).collect();
    let space_levels: Vec<&[Option<Vec<ErrorRecord>>]> = per_path.iter().map(|p| p.space.as_slice()).collect();
    Ok(RateOutcome {
        time: aggregate(RateAxis::Time, &cfg.analysis.betas, &ks, &time_levels)?,
        space: aggregate(RateAxis::Space, &cfg.analysis.betas, &mus, &space_levels)?,
        n_paths: cfg.run.n_paths,
        n_failed_paths,
    })
}

pub fn write_rate_csv(reports: &[RateReport], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{RATE_CSV_HEADER}").map_err(|e| HarnessError::file(path, e))?;
    for r in reports {
        r.write_csv_rows(&mut w)?;
    }
    finish(w, path)
}

impl RateOutcome {
    /// Writes both rate tables into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let time = dir.join(RATES_TIME);
        let space = dir.join(RATES_SPACE);
        write_rate_csv(&self.time, &time)?;
        write_rate_csv(&self.space, &space)?;
        Ok(vec![time, space])
    }

    pub fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        check_failures(cfg, "rate experiment", self.n_failed_paths, self.n_paths)
    }
}

/// Per-path left-hand-side terms of the discrete stability estimates.
#[derive(Debug, Clone, Copy, Default)]
struct StabilityTerms {
    max_h: f64,
    increments: f64,
    energy: f64,
    max_quarter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub m: usize,
    pub k: f64,
    /// `E max_m |U^m|^2`
    pub max_h: f64,
    /// `E sum_j |U^{j+1} - U^j|^2`
    pub increments: f64,
    /// `2k E sum_j ||U^j||_{1/2}^2`
    pub energy: f64,
    /// Sum of the three terms above.
    pub energy_lhs: f64,
    /// `E max_m ||U^m||_{1/4}^2`
    pub quarter_lhs: f64,
    pub n_paths: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOutcome {
    pub rows: Vec<StabilityRow>,
    pub initial_h_sq: f64,
    pub growth_limit: f64,
}

pub const STABILITY_CSV_HEADER: &str =
    "M,k,max_h,increments,energy,energy_lhs,quarter_lhs,growth_energy,growth_quarter,n_paths,n_failures";

impl StabilityOutcome {
    /// `max(r, 1/r)` between consecutive rows, for both statistics.
    pub fn growth(&self) -> Vec<(f64, f64)> {
        let sym = |a: f64, b: f64| {
            let r = b / a;
            r.max(1.0 / r)
        };
        self.rows
            .windows(2)
            .map(|w| (sym(w[0].energy_lhs, w[1].energy_lhs), sym(w[0].quarter_lhs, w[1].quarter_lhs)))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.max_h, r.increments, r.energy, r.energy_lhs, r.quarter_lhs]
                .iter()
                .all(|x| x.is_finite())
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| HarnessError::file(path, e);
        writeln!(w, "{STABILITY_CSV_HEADER}").map_err(io)?;
        let growth = self.growth();
        for (i, r) in self.rows.iter().enumerate() {
            let (ge, gq) = if i == 0 {
                (String::new(), String::new())
            } else {
                (growth[i - 1].0.to_string(), growth[i - 1].1.to_string())
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{ge},{gq},{},{}",
                r.m, r.k, r.max_h, r.increments, r.energy, r.energy_lhs, r.quarter_lhs, r.n_paths, r.n_failures
            )
            .map_err(io)?;
        }
        finish(w, path)
    }

    pub fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        for r in &self.rows {
            check_failures(cfg, &format!("stability at M = {}", r.m), r.n_failures, r.n_paths + r.n_failures)?;
        }
        if !self.all_finite() {
            return Err(HarnessError::Numerical("stability statistics are not finite".into()));
        }
        for (i, (ge, gq)) in self.growth().into_iter().enumerate() {
            if !(ge <= self.growth_limit && gq <= self.growth_limit) {
                return Err(HarnessError::Numerical(format!(
                    "stability statistics change by {ge:.3} / {gq:.3} from M = {} to M = {} (limit {})",
                    self.rows[i].m,
                    self.rows[i + 1].m,
                    self.growth_limit
                )));
            }
        }
        Ok(())
    }
}

fn stability_path(cfg: &ExperimentConfig, path_id: u64) -> spde_core::Result<Vec<Option<StabilityTerms>>> {
    let model = cfg.model().map_err(|e| CoreError::Domain(e.to_string()))?;
    let spec = &model.spectrum;
    let noise = cfg.noise_spec().map_err(|e| CoreError::Domain(e.to_string()))?;
    let scheme = cfg.scheme_config();
    let u0 = cfg.initial_state();
    let m_max = *cfg.stability.m.iter().max().expect("validated");
    let fine = sample_path(&noise, cfg.time.horizon, m_max, path_id)?;
    let mut out = Vec::with_capacity(cfg.stability.m.len());
    for &m in &cfg.stability.m {
        let grid = TimeGrid::new(cfg.time.horizon, m)?;
        let k = grid.k();
        let path = coarsen_to(&fine, m)?;
        let mut terms = StabilityTerms::default();
        let (mut incr, mut energy) = (NeumaierSum::default(), NeumaierSum::default());
        let mut prev: Option<spde_core::SpectralState> = None;
        let run = integrate_with(&u0, &path, &model, &grid, cfg.space.n_ref, &scheme, |j, u, _| {
            terms.max_h = terms.max_h.max(norm_sq(u, 0.0, spec).unwrap_or(f64::INFINITY));
            terms.max_quarter = terms.max_quarter.max(norm_sq(u, 0.25, spec).unwrap_or(f64::INFINITY));
            if let Some(p) = &prev {
                let d = u - p;
                incr.add(d.inner(&d));
            }
            if j >= 1 {
                energy.add(norm_sq(u, 0.5, spec).unwrap_or(f64::INFINITY));
            }
            prev = Some(u.clone());
        });
        out.push(absorb(run, path_id)?.map(|_| StabilityTerms {
            increments: incr.value(),
            energy: 2.0 * k * energy.value(),
            ..terms
        }));
    }
    Ok(out)
}

/// Monte-Carlo left-hand sides of the discrete energy and `V_{1/4}`
/// stability estimates across `stability.M`.
pub fn run_stability_suite(cfg: &ExperimentConfig, exec: Execution) -> Result<StabilityOutcome> {
    cfg.validate()?;
    let spec = cfg.spectrum()?;
    info!("stability suite: {} paths, M = {:?}", cfg.stability.n_paths, cfg.stability.m);
    let per_path = map_paths(exec, &path_ids(cfg.stability.n_paths), |id| stability_path(cfg, id))
        .into_iter()
        .collect::<spde_core::Result<Vec<_>>>()?;
    let rows = cfg
        .stability
        .m
        .iter()
        .enumerate()
        .map(|(level, &m)| {
            let ok: Vec<StabilityTerms> = per_path.iter().filter_map(|p| p[level]).collect();
            let n = ok.len() as f64;
            let mean = |f: fn(&StabilityTerms) -> f64| ok.iter().map(f).sum::<f64>() / n;
            let (max_h, increments, energy) = (mean(|t| t.max_h), mean(|t| t.increments), mean(|t| t.energy));
            StabilityRow {
                m,
                k: cfg.time.horizon / m as f64,
                max_h,
                increments,
                energy,
                energy_lhs: max_h + increments + energy,
                quarter_lhs: mean(|t| t.max_quarter),
                n_paths: ok.len(),
                n_failures: per_path.len() - ok.len(),
            }
        })
        .collect();
    Ok(StabilityOutcome {
        rows,
        initial_h_sq: norm_sq(&cfg.initial_state(), 0.0, &spec)?,
        growth_limit: cfg.stability.growth_limit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityScan {
    pub beta: f64,
    /// `(dt, E ||u(t + dt) - u(t)||_beta^2)`
    pub moments: Vec<(f64, f64)>,
    pub fit: Option<OrderFit>,
}

/// Increment moments of the reference solution at `regularity.M` steps,
/// for every beta in the configuration.
pub fn run_regularity_scan(cfg: &ExperimentConfig, exec: Execution) -> Result<(Vec<RegularityScan>, usize)> {
    cfg.validate()?;
    let step = cfg.time.horizon / cfg.regularity.m as f64;
    let gaps: Vec<f64> = cfg.regularity.gaps.iter().map(|&g| g as f64 * step).collect();
    let betas = cfg.analysis.betas.clone();
    let per_path = map_paths(exec, &path_ids(cfg.regularity.n_paths), |id| {
        let model = cfg.model().map_err(|e| CoreError::Domain(e.to_string()))?;
        let noise = cfg.noise_spec().map_err(|e| CoreError::Domain(e.to_string()))?;
        let path = sample_path(&noise, cfg.time.horizon, cfg.regularity.m, id)?;
        let traj = reference_solution(&cfg.initial_state(), &path, &model, cfg.space.n_ref, &cfg.scheme_config());
        let Some(traj) = absorb(traj, id)? else {
            return Ok(None);
        };
        betas
            .iter()
            .map(|&b| {
                let mut acc = IncrementMoments::new(b, step, &gaps)?;
                acc.add_states(&traj.states, &model.spectrum);
                Ok(acc)
            })
            .collect::<spde_core::Result<Vec<_>>>()
            .map(Some)
    })
    .into_iter()
    .collect::<spde_core::Result<Vec<_>>>()?;
    let failures = per_path.iter().filter(|p| p.is_none()).count();
    check_failures(cfg, "regularity scan", failures, per_path.len())?;
    let mut scans = Vec::with_capacity(betas.len());
    for (b, &beta) in betas.iter().enumerate() {
        let mut total = IncrementMoments::new(beta, step, &gaps)?;
        for acc in per_path.iter().flatten() {
            total.merge(&acc[b]);
        }
        let moments = total.moments();
        let fit = if moments.len() >= 3 { fit_order(&moments).ok() } else { None };
        scans.push(RegularityScan { beta, moments, fit });
    }
    Ok((scans, failures))
}

pub fn write_regularity(scans: &[RegularityScan], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| HarnessError::file(path, e);
    writeln!(w, "beta,dt,moment,fitted_exponent,r_squared").map_err(io)?;
    for s in scans {
        let (e, r2) = s
            .fit
            .map(|f| (f.order.to_string(), f.r_squared.to_string()))
            .unwrap_or_default();
        for (dt, m) in &s.moments {
            writeln!(w, "{},{dt},{m},{e},{r2}", s.beta).map_err(io)?;
        }
    }
    finish(w, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementRow {
    pub m: usize,
    pub k: f64,
    /// Path mean of `max_j |U_semi^j - U_full^j|`.
    pub mean_sup_diff: f64,
    pub max_sup_diff: f64,
    pub n_paths: usize,
    pub n_failures: usize,
}

/// Semi-implicit against fully implicit runs on identical noise.
pub fn run_scheme_agreement(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<AgreementRow>> {
    cfg.validate()?;
    let m_max = *cfg.agreement.m.iter().max().expect("validated");
    let semi = SchemeConfig {
        variant: SchemeVariant::SemiImplicit,
        ..cfg.scheme_config()
    };
    let full = SchemeConfig {
        variant: SchemeVariant::FullyImplicit,
        ..cfg.scheme_config()
    };
    let per_path = map_paths(exec, &path_ids(cfg.agreement.n_paths), |id| {
        let model = cfg.model().map_err(|e| CoreError::Domain(e.to_string()))?;
        let noise = cfg.noise_spec().map_err(|e| CoreError::Domain(e.to_string()))?;
        let u0 = cfg.initial_state();
        let fine = sample_path(&noise, cfg.time.horizon, m_max, id)?;
        cfg.agreement
            .m
            .iter()
            .map(|&m| {
                let grid = TimeGrid::new(cfg.time.horizon, m)?;
                let path = coarsen_to(&fine, m)?;
                let a = absorb(integrate(&u0, &path, &model, &grid, cfg.space.n_ref, &semi), id)?;
                let b = absorb(integrate(&u0, &path, &model, &grid, cfg.space.n_ref, &full), id)?;
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(
                        a.states
                            .iter()
                            .zip(&b.states)
                            .map(|(x, y)| {
                                let d = x - y;
                                d.inner(&d).sqrt()
                            })
                            .fold(0.0, f64::max),
                    ),
                    _ => None,
                })
            })
            .collect::<spde_core::Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<spde_core::Result<Vec<_>>>()?;
    let rows: Vec<AgreementRow> = cfg
        .agreement
        .m
        .iter()
        .enumerate()
        .map(|(level, &m)| {
            let ok: Vec<f64> = per_path.iter().filter_map(|p| p[level]).collect();
            AgreementRow {
                m,
                k: cfg.time.horizon / m as f64,
                mean_sup_diff: ok.iter().sum::<f64>() / ok.len() as f64,
                max_sup_diff: ok.iter().copied().fold(0.0, f64::max),
                n_paths: ok.len(),
                n_failures: per_path.len() - ok.len(),
            }
        })
        .collect();
    for r in &rows {
        check_failures(cfg, &format!("scheme agreement at M = {}", r.m), r.n_failures, per_path.len())?;
    }
    Ok(rows)
}

pub fn write_agreement(rows: &[AgreementRow], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| HarnessError::file(path, e);
    writeln!(w, "M,k,mean_sup_diff,max_sup_diff,n_paths,n_failures").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.m, r.k, r.mean_sup_diff, r.max_sup_diff, r.n_paths, r.n_failures).map_err(io)?;
    }
    finish(w, path)
}
