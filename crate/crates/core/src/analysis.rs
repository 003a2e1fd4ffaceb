//! Pathwise discretization errors against a reference run, the localized
//! event `Omega_k`, Monte-Carlo aggregation and observed-order fits.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scheme::Trajectory;
use crate::spectral::{weighted_norm_sq, EigenSpectrum, SpectralState};

/// `Omega_k` keeps paths whose `V_{1/4}` norms stay below `epsilon ln(1/k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationRule {
    pub epsilon: f64,
}

impl LocalizationRule {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    /// Checks `epsilon < 2 (1/4 - beta)`.
    pub fn admissible_for(&self, beta: f64) -> bool {
        self.epsilon < 2.0 * (0.25 - beta)
    }

    pub fn threshold(&self, k: f64) -> f64 {
        self.epsilon * (1.0 / k).ln()
    }

    /// Both maxima are squared `V_{1/4}` norms.
    pub fn contains(&self, k: f64, reference_max_sq: f64, trajectory_max_sq: f64) -> bool {
        let t = self.threshold(k);
        reference_max_sq < t && trajectory_max_sq < t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub k: f64,
    pub n_modes: usize,
    pub beta: f64,
    pub path_id: u64,
    pub in_omega_k: bool,
    /// `max_j ||e^j||_beta^2`
    pub err_max_beta: f64,
    /// `k sum_j ||e^j||_{1/2 + beta}^2`
    pub err_energy: f64,
}

impl ErrorRecord {
    /// `max_j ||e^j||_beta + k^{1/2} (sum_j ||e^j||^2_{1/2+beta})^{1/2}`.
    pub fn combined_statistic(&self) -> f64 {
        self.err_max_beta.sqrt() + self.err_energy.sqrt()
    }
}

fn check_refinement(coarse: &Trajectory, fine: &Trajectory) -> Result<usize> {
    let (c, f) = (&coarse.grid, &fine.grid);
    if (c.horizon - f.horizon).abs() > 1e-12 * f.horizon {
        return Err(Error::Grid(format!("horizons differ: {} vs {}", c.horizon, f.horizon)));
    }
    if f.steps % c.steps != 0 {
        return Err(Error::Grid(format!("{} steps do not refine {} steps", f.steps, c.steps)));
    }
    if fine.n_modes() < coarse.n_modes() {
        return Err(Error::Dimension {
            expected: coarse.n_modes(),
            got: fine.n_modes(),
        });
    }
    Ok(f.steps / c.steps)
}

/// `(max_{1<=j<=M} ||e^j||_beta^2, k sum_{j=1}^M ||e^j||_{1/2+beta}^2)` with
/// `e^j = ref(t_j) - U^j`, the trajectory zero-padded to the reference modes.
pub fn error_norms(traj: &Trajectory, reference: &Trajectory, beta: f64, spec: &EigenSpectrum) -> Result<(f64, f64)> {
    let ratio = check_refinement(traj, reference)?;
    if spec.len() < reference.n_modes() {
        return Err(Error::Dimension {
            expected: reference.n_modes(),
            got: spec.len(),
        });
    }
    let n = reference.n_modes();
    let (w_beta, w_energy) = (spec.weights(beta, n), spec.weights(0.5 + beta, n));
    let mut max_beta: f64 = 0.0;
    let mut energy = 0.0;
    for j in 1..=traj.grid.steps {
        let e = reference.states[j * ratio].sub_embedded(&traj.states[j]);
        max_beta = max_beta.max(weighted_norm_sq(&e, &w_beta));
        energy += weighted_norm_sq(&e, &w_energy);
    }
    Ok((max_beta, traj.grid.k() * energy))
}

/// `max_j ||U^j||_alpha^2` over every stored state.
pub fn max_norm_sq(traj: &Trajectory, alpha: f64, spec: &EigenSpectrum) -> f64 {
    let w = spec.weights(alpha, traj.n_modes().min(spec.len()));
    traj.states
        .iter()
        .map(|s| weighted_norm_sq(s, &w))
        .fold(0.0, f64::max)
}

/// Membership of the path in `Omega_k`, the supremum over time replaced by
/// the maximum over the reference grid.
pub fn omega_k_indicator(traj: &Trajectory, reference: &Trajectory, rule: &LocalizationRule, spec: &EigenSpectrum) -> Result<bool> {
    check_refinement(traj, reference)?;
    Ok(rule.contains(
        traj.grid.k(),
        max_norm_sq(reference, 0.25, spec),
        max_norm_sq(traj, 0.25, spec),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizedEstimate {
    pub mean_max_err: f64,
    pub mean_energy_err: f64,
    pub omega_fraction: f64,
}

/// Sample means of `1_{Omega_k} err` (excluded paths contribute zero).
pub fn localized_error_estimate(records: &[ErrorRecord]) -> Result<LocalizedEstimate> {
    if records.is_empty() {
        return Err(Error::Domain("no error records".into()));
    }
    let n = records.len() as f64;
    let (mut max_sum, mut energy_sum, mut inside) = (0.0, 0.0, 0usize);
    for r in records.iter().filter(|r| r.in_omega_k) {
        max_sum += r.err_max_beta;
        energy_sum += r.err_energy;
        inside += 1;
    }
    Ok(LocalizedEstimate {
        mean_max_err: max_sum / n,
        mean_energy_err: energy_sum / n,
        omega_fraction: inside as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub order: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some((h, e)) = points.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(Error::Domain(format!("nonpositive or non-finite point ({h}, {e})")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(OrderFit {
        order: slope,
        r_squared,
    })
}

/// Fraction of records whose combined statistic reaches `threshold(k, N)`.
pub fn exceedance_probability(records: &[ErrorRecord], threshold: impl Fn(f64, usize) -> f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Domain("no error records".into()));
    }
    let hits = records
        .iter()
        .filter(|r| r.combined_statistic() >= threshold(r.k, r.n_modes))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// `Theta (k^theta0 + mu_N^(-theta1))`.
pub fn probability_threshold(theta: f64, theta0: f64, theta1: f64, spec: &EigenSpectrum) -> impl Fn(f64, usize) -> f64 + '_ {
    move |k, n| theta * (k.powf(theta0) + spec.mu_at(n).powf(-theta1))
}

/// Streaming accumulator for `E ||u(t + dt) - u(t)||_beta^2` over paths and
/// every admissible `t` on the grid.
#[derive(Debug, Clone)]
pub struct IncrementMoments {
    beta: f64,
    step: f64,
    gaps: Vec<usize>,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl IncrementMoments {
    /// `gaps` are time lags; each must be a positive multiple of `step`.
    pub fn new(beta: f64, step: f64, gaps: &[f64]) -> Result<Self> {
        let lags = gaps
            .iter()
            .map(|g| {
                let r = g / step;
                let m = r.round();
                if m >= 1.0 && (r - m).abs() <= 1e-9 * r.max(1.0) {
                    Ok(m as usize)
                } else {
                    Err(Error::Grid(format!("gap {g} is not a multiple of the step {step}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beta,
            step,
            sums: vec![0.0; lags.len()],
            counts: vec![0; lags.len()],
            gaps: lags,
        })
    }

    pub fn add_states(&mut self, states: &[SpectralState], spec: &EigenSpectrum) {
        let Some(first) = states.first() else { return };
        let w = spec.weights(self.beta, first.n_modes().min(spec.len()));
        for (g, (sum, count)) in self.gaps.iter().zip(self.sums.iter_mut().zip(self.counts.iter_mut())) {
            for j in 0..states.len().saturating_sub(*g) {
                let d = &states[j + g] - &states[j];
                *sum += weighted_norm_sq(&d, &w);
                *count += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for i in 0..self.sums.len() {
            self.sums[i] += other.sums[i];
            self.counts[i] += other.counts[i];
        }
    }

    /// `(dt, mean squared increment)` per gap.
    pub fn moments(&self) -> Vec<(f64, f64)> {
        self.gaps
            .iter()
            .zip(self.sums.iter().zip(&self.counts))
            .map(|(g, (s, c))| (*g as f64 * self.step, if *c == 0 { f64::NAN } else { s / *c as f64 }))
            .collect()
    }
}

/// `E ||u(t + dt) - u(t)||_beta^2` averaged over an ensemble.
pub fn increment_moment_scan(ensemble: &[Trajectory], beta: f64, gaps: &[f64], spec: &EigenSpectrum) -> Result<Vec<(f64, f64)>> {
    let first = ensemble.first().ok_or_else(|| Error::Domain("empty ensemble".into()))?;
    let mut acc = IncrementMoments::new(beta, first.grid.k(), gaps)?;
    for t in ensemble {
        if t.grid != first.grid {
            return Err(Error::Grid("ensemble members use different grids".into()));
        }
        acc.add_states(&t.states, spec);
    }
    Ok(acc.moments())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    Time,
    Space,
}

impl RateAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateAxis::Time => "time",
            RateAxis::Space => "space",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(RateAxis::Time),
            "space" => Ok(RateAxis::Space),
            _ => Err(Error::Parse(format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    /// `k` on the time axis, `mu_N` on the space axis.
    pub abscissa: f64,
    pub localized_max_err: f64,
    pub localized_energy_err: f64,
    pub omega_fraction: f64,
    pub n_paths: usize,
    pub n_failures: usize,
}

impl RatePoint {
    /// Root of the localized max-statistic, the quantity the order is fitted on.
    pub fn error(&self) -> f64 {
        self.localized_max_err.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Ok,
    InsufficientPoints,
    Degenerate,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Ok => "ok",
            FitStatus::InsufficientPoints => "insufficient_points",
            FitStatus::Degenerate => "degenerate",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(FitStatus::Ok),
            "insufficient_points" => Ok(FitStatus::InsufficientPoints),
            "degenerate" => Ok(FitStatus::Degenerate),
            _ => Err(Error::Parse(format!("unknown fit status `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub axis: RateAxis,
    pub beta: f64,
    pub points: Vec<RatePoint>,
    pub fit: Option<OrderFit>,
    pub status: FitStatus,
}

pub const RATE_CSV_HEADER: &str =
    "axis,beta,abscissa,localized_max_err,localized_energy_err,omega_fraction,n_paths,n_failures,fitted_order,r_squared,fit_status";

impl RateReport {
    /// Sorts points by abscissa and fits `sqrt(localized max error)` against it.
    pub fn build(axis: RateAxis, beta: f64, mut points: Vec<RatePoint>) -> Self {
        points.sort_by(|a, b| a.abscissa.total_cmp(&b.abscissa));
        let (fit, status) = if points.len() < 3 {
            (None, FitStatus::InsufficientPoints)
        } else {
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.abscissa, p.error())).collect();
            match fit_order(&xy) {
                Ok(f) => (Some(f), FitStatus::Ok),
                Err(_) => (None, FitStatus::Degenerate),
            }
        };
        Self {
            axis,
            beta,
            points,
            fit,
            status,
        }
    }

    pub fn write_csv_rows<W: Write>(&self, mut w: W) -> Result<()> {
        let (order, r2) = match self.fit {
            Some(f) => (f.order.to_string(), f.r_squared.to_string()),
            None => (String::new(), String::new()),
        };
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.axis.as_str(),
                self.beta,
                p.abscissa,
                p.localized_max_err,
                p.localized_energy_err,
                p.omega_fraction,
                p.n_paths,
                p.n_failures,
                order,
                r2,
                self.status.as_str()
            )?;
        }
        Ok(())
    }

    /// Parses every report in a rates CSV, grouped by `(axis, beta)`.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<RateReport>> {
        let mut out: Vec<RateReport> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(Error::Parse(format!("line {}: expected 11 fields, got {}", i + 1, f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", i + 1)));
            let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("line {}: bad integer `{s}`", i + 1)));
            let axis = RateAxis::parse(f[0])?;
            let beta = num(f[1])?;
            let point = RatePoint {
                abscissa: num(f[2])?,
                localized_max_err: num(f[3])?,
                localized_energy_err: num(f[4])?,
                omega_fraction: num(f[5])?,
                n_paths: int(f[6])?,
                n_failures: int(f[7])?,
            };
            let fit = if f[8].is_empty() {
                None
            } else {
                Some(OrderFit {
                    order: num(f[8])?,
                    r_squared: num(f[9])?,
                })
            };
            let status = FitStatus::parse(f[10])?;
            match out.iter_mut().find(|r| r.axis == axis && r.beta == beta) {
                Some(rep) => rep.points.push(point),
                None => out.push(RateReport {
                    axis,
                    beta,
                    points: vec![point],
                    fit,
                    status,
                }),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoisePath;
    use crate::noise::{DiffusionMap, Gain};
    use crate::nonlinearity::NonlinearityKind;
    use crate::scheme::{integrate, Model, SchemeConfig, TimeGrid};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(in_omega: bool, max: f64, energy: f64) -> ErrorRecord {
        ErrorRecord {
            k: 0.1,
            n_modes: 4,
            beta: 0.0,
            path_id: 0,
            in_omega_k: in_omega,
            err_max_beta: max,
            err_energy: energy,
        }
    }

    fn decay_run(steps: usize, n: usize) -> (Model, Trajectory) {
        let model = Model {
            spectrum: EigenSpectrum::heat1d(n).unwrap(),
            nonlinearity: NonlinearityKind::Zero,
            diffusion: DiffusionMap::zero(),
        };
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let path = NoisePath::from_rows(vec![vec![0.0; n]; steps], grid.k(), 0).unwrap();
        let u0 = SpectralState::unit(n, 1, Complex64::new(1.0, 0.0));
        let t = integrate(&u0, &path, &model, &grid, n, &SchemeConfig::default()).unwrap();
        (model, t)
    }

    #[test]
    fn self_comparison_is_zero() {
        let (model, t) = decay_run(8, 3);
        assert_eq!(error_norms(&t, &t, 0.1, &model.spectrum).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn scalar_recursion_error() {
        let (model, coarse) = decay_run(4, 1);
        let (_, fine) = decay_run(32, 1);
        // independent closed form: (1 + k)^-j at both resolutions, mu_1 = 1
        let mut max_sq: f64 = 0.0;
        let mut energy = 0.0;
        for j in 1..=4 {
            let a = (1.0 + 0.25f64).powi(-j);
            let b = (1.0 + 1.0 / 32.0f64).powi(-8 * j);
            max_sq = max_sq.max((b - a).powi(2));
            energy += (b - a).powi(2);
        }
        let (m, e) = error_norms(&coarse, &fine, 0.0, &model.spectrum).unwrap();
        assert!((m - max_sq).abs() <= 1e-12 * max_sq);
        assert!((e - 0.25 * energy).abs() <= 1e-12 * energy);
    }

    #[test]
    fn h_norm_error_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = EigenSpectrum::shell(1.0, 6).unwrap();
        let grid_c = TimeGrid::new(1.0, 2).unwrap();
        let grid_f = TimeGrid::new(1.0, 4).unwrap();
        let mut draw = |n: usize| {
            SpectralState::new((0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
        };
        let coarse = Trajectory {
            grid: grid_c,
            states: (0..3).map(|_| draw(4)).collect(),
            diagnostics: vec![],
        };
        let fine = Trajectory {
            grid: grid_f,
            states: (0..5).map(|_| draw(6)).collect(),
            diagnostics: vec![],
        };
        let mut want: f64 = 0.0;
        for j in 1..=2 {
            let mut s = 0.0;
            for n in 0..6 {
                let c = if n < 4 { coarse.states[j][n] } else { Complex64::new(0.0, 0.0) };
                s += (fine.states[2 * j][n] - c).norm_sqr();
            }
            want = want.max(s);
        }
        let (got, _) = error_norms(&coarse, &fine, 0.0, &spec).unwrap();
        assert!((got - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn error_norms_symmetric_on_same_grid() {
        let (model, a) = decay_run(8, 3);
        let mut b = a.clone();
        for s in b.states.iter_mut() {
            s[1] += Complex64::new(0.01, -0.02);
        }
        assert_eq!(
            error_norms(&a, &b, 0.2, &model.spectrum).unwrap(),
            error_norms(&b, &a, 0.2, &model.spectrum).unwrap()
        );
    }

    #[test]
    fn incompatible_grids_rejected() {
        let (model, a) = decay_run(3, 2);
        let (_, b) = decay_run(8, 2);
        assert!(matches!(error_norms(&a, &b, 0.0, &model.spectrum), Err(Error::Grid(_))));
    }

    #[test]
    fn threshold_arithmetic() {
        let rule = LocalizationRule::new(0.1).unwrap();
        let k = (-10.0f64).exp();
        assert!((rule.threshold(k) - 1.0).abs() < 1e-14);
        assert!(rule.contains(k, 0.5, 0.5));
        assert!(!rule.contains(k, 1.5, 0.5));
        assert!(!rule.contains(k, 0.5, 1.5));
        for k in [0.5, 1e-2, 1e-4] {
            assert!(LocalizationRule::new(0.2).unwrap().threshold(k) >= rule.threshold(k));
        }
    }

    #[test]
    fn zero_trajectories_are_inside() {
        let model = Model {
            spectrum: EigenSpectrum::shell(1.0, 4).unwrap(),
            nonlinearity: NonlinearityKind::Zero,
            diffusion: DiffusionMap::new(Gain::Additive, 0.0),
        };
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let path = NoisePath::from_rows(vec![vec![0.3; 4]; 4], 0.25, 0).unwrap();
        let t = integrate(&SpectralState::zeros(4), &path, &model, &grid, 4, &SchemeConfig::default()).unwrap();
        let rule = LocalizationRule::new(0.01).unwrap();
        assert!(omega_k_indicator(&t, &t, &rule, &model.spectrum).unwrap());
    }

    #[test]
    fn localized_estimates() {
        assert!(localized_error_estimate(&[]).is_err());
        let all_out = [record(false, 1.0, 2.0), record(false, 3.0, 4.0)];
        let e = localized_error_estimate(&all_out).unwrap();
        assert_eq!((e.mean_max_err, e.mean_energy_err, e.omega_fraction), (0.0, 0.0, 0.0));
        let e = localized_error_estimate(&[record(true, 0.3, 0.1)]).unwrap();
        assert_eq!((e.mean_max_err, e.omega_fraction), (0.3, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mixed: Vec<ErrorRecord> = (0..37)
            .map(|_| record(rng.random_bool(0.6), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let mut s_max = 0.0;
        let mut s_en = 0.0;
        let mut inside = 0.0;
        for r in &mixed {
            let ind = if r.in_omega_k { 1.0 } else { 0.0 };
            s_max += ind * r.err_max_beta;
            s_en += ind * r.err_energy;
            inside += ind;
        }
        let e = localized_error_estimate(&mixed).unwrap();
        assert!((e.mean_max_err - s_max / 37.0).abs() < 1e-15);
        assert!((e.mean_energy_err - s_en / 37.0).abs() < 1e-15);
        assert!((e.omega_fraction - inside / 37.0).abs() < 1e-15);
        let unlocalized = mixed.iter().map(|r| r.err_max_beta).sum::<f64>() / 37.0;
        assert!(e.mean_max_err <= unlocalized);
    }

    #[test]
    fn fit_exact_lines() {
        let f = fit_order(&[(0.1, 0.01), (0.2, 0.02), (0.4, 0.04)]).unwrap();
        assert!((f.order - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_order(&[(1e-1, 3.0 * 1e-1f64.sqrt()), (1e-2, 3.0 * 1e-2f64.sqrt()), (1e-3, 3.0 * 1e-3f64.sqrt())]).unwrap();
        assert!((f.order - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_order(&[(0.1, 0.1), (0.2, 0.2)]).is_err());
        assert!(fit_order(&[(0.1, 0.1), (0.2, 0.0), (0.3, 0.3)]).is_err());
        assert!(fit_order(&[(-0.1, 0.1), (0.2, 0.2), (0.3, 0.3)]).is_err());
    }

    #[test]
    fn fit_noisy_power_law() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let hs: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
        for _ in 0..100 {
            let pts: Vec<(f64, f64)> = hs.iter().map(|h| (*h, 2.0 * h.powf(0.75) * (1.0 + noise.sample(&mut rng)))).collect();
            let f = fit_order(&pts).unwrap();
            assert!((f.order - 0.75).abs() <= 0.05, "order {}", f.order);
        }
    }

    #[test]
    fn exceedance_cases() {
        let recs = [record(true, 0.04, 0.01), record(true, 0.25, 0.0), record(false, 1.0, 1.0), record(true, 0.0, 0.0)];
        // statistics: 0.3, 0.5, 2.0, 0.0
        assert_eq!(exceedance_probability(&recs, |_, _| 1e300).unwrap(), 0.0);
        assert_eq!(exceedance_probability(&recs, |_, _| 0.0).unwrap(), 1.0);
        assert_eq!(exceedance_probability(&recs, |_, _| 0.4).unwrap(), 0.5);
        assert_eq!(exceedance_probability(&recs, |_, _| 0.3).unwrap(), 0.75);
        assert!(exceedance_probability(&[], |_, _| 0.0).is_err());
        let spec = EigenSpectrum::heat1d(4).unwrap();
        let th = probability_threshold(2.0, 0.5, 0.25, &spec);
        assert!((th(0.25, 4) - 2.0 * (0.5 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn increments_of_constant_path_vanish() {
        let spec = EigenSpectrum::heat1d(3).unwrap();
        let t = Trajectory {
            grid: TimeGrid::new(1.0, 8).unwrap(),
            states: vec![SpectralState::from_real(&[1.0, 2.0, 3.0]); 9],
            diagnostics: vec![],
        };
        let m = increment_moment_scan(&[t], 0.0, &[0.125, 0.25], &spec).unwrap();
        assert_eq!(m, vec![(0.125, 0.0), (0.25, 0.0)]);
        assert!(IncrementMoments::new(0.0, 0.125, &[0.2]).is_err());
    }

    #[test]
    fn brownian_increment_variance() {
        // drift-free single mode: u = W, E|W(t+dt) - W(t)|^2 = q dt
        use crate::noise::{sample_path, NoiseSpec};
        let q = 0.3;
        let spec_noise = NoiseSpec::from_weights(vec![q], 17).unwrap();
        let spec = EigenSpectrum::heat1d(1).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ensemble: Vec<Trajectory> = (0..10_000)
            .map(|id| {
                let p = sample_path(&spec_noise, 1.0, 16, id).unwrap();
                let mut w = 0.0;
                let mut states = vec![SpectralState::zeros(1)];
                for r in p.rows() {
                    w += r[0];
                    states.push(SpectralState::from_real(&[w]));
                }
                Trajectory {
                    grid,
                    states,
                    diagnostics: vec![],
                }
            })
            .collect();
        let m = increment_moment_scan(&ensemble, 0.0, &[1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0], &spec).unwrap();
        for (dt, v) in &m {
            assert!((v / (q * dt) - 1.0).abs() <= 0.05, "dt {dt}: {v}");
        }
        assert!(m.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn report_csv_round_trip() {
        let pts: Vec<RatePoint> = (0..4)
            .map(|i| RatePoint {
                abscissa: 2f64.powi(-7 - i),
                localized_max_err: 1e-3 / (i + 1) as f64,
                localized_energy_err: 1e-4 / 3.0,
                omega_fraction: 0.9 + 0.01 * i as f64,
                n_paths: 200,
                n_failures: 0,
            })
            .collect();
        let rep = RateReport::build(RateAxis::Time, 0.1, pts);
        assert_eq!(rep.status, FitStatus::Ok);
        let mut buf = format!("{RATE_CSV_HEADER}\n").into_bytes();
        rep.write_csv_rows(&mut buf).unwrap();
        let back = RateReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![rep]);
        let one = RateReport::build(RateAxis::Space, 0.0, vec![back[0].points[0]]);
        assert_eq!(one.status, FitStatus::InsufficientPoints);
        assert!(one.fit.is_none());
    }
}
