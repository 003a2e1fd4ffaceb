//! Semi-implicit and fully implicit Euler-Maruyama steps on `H_N`.
//!
//! The semi-implicit step solves the linear system
//!
//! ```text
//! (I + k A_N + k B(U^j, .)) U^{j+1} = U^j + pi_N G(U^j) dW
//! ```
//!
//! and the fully implicit step replaces `B(U^j, .)` by `B(U^{j+1}, .)`,
//! solved by damped Picard iteration whose inner map is the semi-implicit
//! solve with the first slot frozen at the current iterate.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::noise::{apply_g, DiffusionMap, NoisePath};
use crate::nonlinearity::{bilinear_apply, from_real, linearize, to_real, NonlinearityKind};
use crate::spectral::{norm_sq_unchecked, project, EigenSpectrum, SpectralState};

/// Steps whose row-scaled condition estimate exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Relative residual bound of each linear solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Grid("a time grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn k(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        self.horizon * j as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeVariant {
    SemiImplicit,
    FullyImplicit,
}

impl SchemeVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeVariant::SemiImplicit => "semi_implicit",
            SchemeVariant::FullyImplicit => "fully_implicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub variant: SchemeVariant,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub fp_damping: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            variant: SchemeVariant::SemiImplicit,
            fp_tol: 1e-12,
            fp_max_iter: 100,
            fp_damping: 1.0,
        }
    }
}

impl SchemeConfig {
    pub fn fully_implicit() -> Self {
        Self {
            variant: SchemeVariant::FullyImplicit,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) {
            return Err(Error::Domain(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.fp_max_iter == 0 {
            return Err(Error::Domain("fp_max_iter must be at least 1".into()));
        }
        if !(self.fp_damping > 0.0 && self.fp_damping <= 1.0) {
            return Err(Error::Domain(format!("fp_damping must lie in (0, 1], got {}", self.fp_damping)));
        }
        Ok(())
    }
}

/// `(A, B, G)` of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spectrum: EigenSpectrum,
    pub nonlinearity: NonlinearityKind,
    pub diffusion: DiffusionMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    /// Linear solves used (1 for the semi-implicit step).
    pub fp_iters: usize,
    /// Linear-solve residual (semi-implicit) or nonlinear residual (fully implicit).
    pub residual: f64,
    pub condition: f64,
    pub norm0: f64,
    pub norm_quarter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<SpectralState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn n_modes(&self) -> usize {
        self.states[0].n_modes()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n_modes();
        let mut header = vec!["j".to_string(), "t".to_string()];
        header.extend((1..=n).map(|i| format!("re_{i}")));
        header.extend((1..=n).map(|i| format!("im_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (j, s) in self.states.iter().enumerate() {
            let mut row = vec![j.to_string(), self.grid.t(j).to_string()];
            row.extend(s.coeffs().iter().map(|c| c.re.to_string()));
            row.extend(s.coeffs().iter().map(|c| c.im.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,fp_iters,residual,norm0,norm_quarter")?;
        for (j, d) in self.diagnostics.iter().enumerate() {
            writeln!(w, "{j},{},{},{},{}", d.fp_iters, d.residual, d.norm0, d.norm_quarter)?;
        }
        Ok(())
    }
}

fn check_state(u: &SpectralState, model: &Model) -> Result<()> {
    if u.n_modes() > model.spectrum.len() {
        return Err(Error::Dimension {
            expected: model.spectrum.len(),
            got: u.n_modes(),
        });
    }
    u.check_finite()
}

fn state_norms(u: &SpectralState, spec: &EigenSpectrum) -> (f64, f64) {
    (
        norm_sq_unchecked(u, 0.0, spec).sqrt(),
        norm_sq_unchecked(u, 0.25, spec).sqrt(),
    )
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `(I + k A_N + k B(frozen, .)) X = rhs`.
fn linear_solve(
    frozen: &SpectralState,
    rhs: &SpectralState,
    model: &Model,
    k: f64,
    step: usize,
) -> Result<(SpectralState, f64, f64)> {
    let mut system: BandMatrix = linearize(&model.nonlinearity, frozen)?.into_matrix();
    system.scale(k);
    for (n, mu) in model.spectrum.mu()[..frozen.n_modes()].iter().enumerate() {
        let d = 1.0 + k * mu;
        system.add(2 * n, 2 * n, d);
        system.add(2 * n + 1, 2 * n + 1, d);
    }
    let b = to_real(rhs);
    let lu = system.clone().factor().map_err(|_| Error::StepFailure {
        step,
        condition: f64::INFINITY,
        residual: f64::NAN,
    })?;
    let x = lu.solve(&b);
    let ax = system.matvec(&x);
    let r: Vec<f64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
    let residual = l2(&r) / (1.0 + l2(&b));
    let condition = lu.condition_estimate(&system);
    if !(condition <= CONDITION_LIMIT) || !(residual <= SOLVE_TOLERANCE) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepFailure {
            step,
            condition,
            residual,
        });
    }
    Ok((from_real(&x), residual, condition))
}

fn step_rhs(u_j: &SpectralState, dw_row: &[f64], model: &Model) -> SpectralState {
    let g = apply_g(&model.diffusion, u_j, dw_row);
    u_j + &g
}

/// One semi-implicit step from `u_j` with step size `k`. `step` is the
/// index `j` used in failure reports.
pub fn semi_implicit_step(
    u_j: &SpectralState,
    dw_row: &[f64],
    model: &Model,
    k: f64,
    step: usize,
) -> Result<(SpectralState, StepDiagnostics)> {
    check_state(u_j, model)?;
    let rhs = step_rhs(u_j, dw_row, model);
    let (x, residual, condition) = linear_solve(u_j, &rhs, model, k, step)?;
    let (norm0, norm_quarter) = state_norms(&x, &model.spectrum);
    Ok((
        x,
        StepDiagnostics {
            fp_iters: 1,
            residual,
            condition,
            norm0,
            norm_quarter,
        },
    ))
}

/// `X + k A X + k B(X, X) - rhs`.
pub fn implicit_residual(x: &SpectralState, rhs: &SpectralState, model: &Model, k: f64) -> Result<SpectralState> {
    let b = bilinear_apply(&model.nonlinearity, x, x)?;
    Ok(SpectralState::new(
        x.coeffs()
            .iter()
            .zip(b.coeffs())
            .zip(rhs.coeffs())
            .zip(model.spectrum.mu())
            .map(|(((x, b), r), mu)| x + x * (k * mu) + b * k - r)
            .collect(),
    ))
}

/// Per-iteration record of the Picard loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardIterate {
    pub residual: f64,
}

/// One fully implicit step by damped Picard iteration from `X^(0) = u_j`.
pub fn fully_implicit_step(
    u_j: &SpectralState,
    dw_row: &[f64],
    model: &Model,
    k: f64,
    cfg: &SchemeConfig,
    step: usize,
) -> Result<(SpectralState, StepDiagnostics)> {
    fully_implicit_step_traced(u_j, dw_row, model, k, cfg, step, |_| {})
}

/// [`fully_implicit_step`] reporting every iterate's residual to `trace`.
pub fn fully_implicit_step_traced(
    u_j: &SpectralState,
    dw_row: &[f64],
    model: &Model,
    k: f64,
    cfg: &SchemeConfig,
    step: usize,
    mut trace: impl FnMut(PicardIterate),
) -> Result<(SpectralState, StepDiagnostics)> {
    check_state(u_j, model)?;
    cfg.validate()?;
    let rhs = step_rhs(u_j, dw_row, model);
    let scale = 1.0 + rhs.inner(&rhs).sqrt();
    let d = cfg.fp_damping;
    let mut x = u_j.clone();
    let mut residual = f64::INFINITY;
    let mut condition: f64 = 0.0;
    for iter in 1..=cfg.fp_max_iter {
        let (z, _, cond) = linear_solve(&x, &rhs, model, k, step)?;
        condition = condition.max(cond);
        x = if d == 1.0 { z } else { &(&x * (1.0 - d)) + &(&z * d) };
        let r = implicit_residual(&x, &rhs, model, k)?;
        residual = r.inner(&r).sqrt() / scale;
        trace(PicardIterate { residual });
        if residual <= cfg.fp_tol {
            let (norm0, norm_quarter) = state_norms(&x, &model.spectrum);
            return Ok((
                x,
                StepDiagnostics {
                    fp_iters: iter,
                    residual,
                    condition,
                    norm0,
                    norm_quarter,
                },
            ));
        }
    }
    Err(Error::NonConvergence {
        step,
        iterations: cfg.fp_max_iter,
        residual,
    })
}

/// Runs the scheme over `grid`, calling `visit(j, U^j, diagnostics)` for
/// `j = 0..=M` without storing the trajectory.
pub fn integrate_with(
    u0: &SpectralState,
    path: &NoisePath,
    model: &Model,
    grid: &TimeGrid,
    n_modes: usize,
    cfg: &SchemeConfig,
    mut visit: impl FnMut(usize, &SpectralState, &StepDiagnostics),
) -> Result<()> {
    if grid.steps == 0 {
        return Err(Error::Grid("a time grid needs at least one step".into()));
    }
    if path.n_rows() != grid.steps {
        return Err(Error::Grid(format!(
            "noise path has {} rows, grid has {} steps",
            path.n_rows(),
            grid.steps
        )));
    }
    let k = grid.k();
    if (path.step() - k).abs() > 1e-12 * k {
        return Err(Error::Grid(format!("noise step {} differs from grid step {k}", path.step())));
    }
    if n_modes == 0 || n_modes > model.spectrum.len() {
        return Err(Error::Dimension {
            expected: model.spectrum.len(),
            got: n_modes,
        });
    }
    cfg.validate()?;
    model.nonlinearity.validate(n_modes)?;
    u0.check_finite()?;
    let mut u = project(u0, n_modes);
    let (norm0, norm_quarter) = state_norms(&u, &model.spectrum);
    visit(
        0,
        &u,
        &StepDiagnostics {
            norm0,
            norm_quarter,
            ..Default::default()
        },
    );
    for (j, row) in path.rows().enumerate() {
        let (next, diag) = match cfg.variant {
            SchemeVariant::SemiImplicit => semi_implicit_step(&u, row, model, k, j)?,
            SchemeVariant::FullyImplicit => fully_implicit_step(&u, row, model, k, cfg, j)?,
        };
        visit(j + 1, &next, &diag);
        u = next;
    }
    Ok(())
}

pub fn integrate(
    u0: &SpectralState,
    path: &NoisePath,
    model: &Model,
    grid: &TimeGrid,
    n_modes: usize,
    cfg: &SchemeConfig,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut diagnostics = Vec::with_capacity(grid.steps + 1);
    integrate_with(u0, path, model, grid, n_modes, cfg, |_, s, d| {
        states.push(s.clone());
        diagnostics.push(*d);
    })?;
    Ok(Trajectory {
        grid: *grid,
        states,
        diagnostics,
    })
}

/// The finest-grid, largest-`N` run used as the exact-solution surrogate.
pub fn reference_solution(
    u0: &SpectralState,
    path: &NoisePath,
    model: &Model,
    n_ref: usize,
    cfg: &SchemeConfig,
) -> Result<Trajectory> {
    let grid = TimeGrid::new(path.step() * path.n_rows() as f64, path.n_rows())?;
    integrate(u0, path, model, &grid, n_ref, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, Gain, NoiseSpec};
    use crate::spectral::ModelFamily;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn shell_model(kind: NonlinearityKind, n: usize, diffusion: DiffusionMap) -> Model {
        Model {
            spectrum: EigenSpectrum::shell(1.0, n).unwrap(),
            nonlinearity: kind,
            diffusion,
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> SpectralState {
        SpectralState::new(
            (1..=n)
                .map(|m| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp * 2f64.powi(-(m as i32)))
                .collect(),
        )
    }

    #[test]
    fn diagonal_step_closed_form() {
        let model = shell_model(NonlinearityKind::Zero, 4, DiffusionMap::zero());
        let u = SpectralState::unit(4, 1, c(1.0, 0.0));
        let (x, d) = semi_implicit_step(&u, &[0.0; 4], &model, 0.5, 0).unwrap();
        assert!((x[0] - c(1.0 / 3.0, 0.0)).norm() < 1e-16);
        assert!(x.coeffs()[1..].iter().all(|z| *z == c(0.0, 0.0)));
        assert_eq!(d.fp_iters, 1);
    }

    #[test]
    fn additive_diagonal_step() {
        let model = shell_model(NonlinearityKind::Zero, 3, DiffusionMap::new(Gain::Additive, 1.0));
        let u = SpectralState::new(vec![c(0.5, 0.1), c(-0.2, 0.0), c(0.0, 0.3)]);
        let dw = [0.01, -0.02, 0.03, 0.5];
        let k = 0.1;
        let (x, _) = semi_implicit_step(&u, &dw, &model, k, 0).unwrap();
        for n in 0..3 {
            let want = (u[n] + dw[n]) / (1.0 + k * model.spectrum.mu()[n]);
            assert!((x[n] - want).norm() <= 1e-15 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn semi_implicit_satisfies_variational_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 16;
        let model = shell_model(NonlinearityKind::Sabra { k0: 1.0 }, n, DiffusionMap::new(Gain::Inverse, 0.5));
        let u = random_state(&mut rng, n, 2.0);
        let dw: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
        let k = 0.01;
        let (x, _) = semi_implicit_step(&u, &dw, &model, k, 0).unwrap();
        let b = bilinear_apply(&model.nonlinearity, &u, &x).unwrap();
        let g = apply_g(&model.diffusion, &u, &dw);
        // test against w = e_m and w = i e_m for every mode
        for m in 0..n {
            let lhs = x[m] - u[m] + (x[m] * model.spectrum.mu()[m] + b[m]) * k;
            assert!((lhs - g[m]).norm() <= 1e-10, "mode {}", m + 1);
        }
    }

    #[test]
    fn zero_kind_schemes_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = shell_model(NonlinearityKind::Zero, 8, DiffusionMap::new(Gain::Inverse, 0.5));
        let u = random_state(&mut rng, 8, 1.0);
        let dw: Vec<f64> = (0..8).map(|_| rng.random_range(-0.1..0.1)).collect();
        let (a, _) = semi_implicit_step(&u, &dw, &model, 0.01, 0).unwrap();
        let (b, _) = fully_implicit_step(&u, &dw, &model, 0.01, &SchemeConfig::fully_implicit(), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fully_implicit_converges_quickly_for_small_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 16;
        let model = shell_model(NonlinearityKind::Sabra { k0: 1.0 }, n, DiffusionMap::new(Gain::Inverse, 0.5));
        let cfg = SchemeConfig::fully_implicit();
        for _ in 0..20 {
            let u = random_state(&mut rng, n, 1.0);
            let dw: Vec<f64> = (0..n).map(|_| rng.random_range(-0.01..0.01)).collect();
            let k = 1e-3;
            let (x, d) = fully_implicit_step(&u, &dw, &model, k, &cfg, 0).unwrap();
            assert!(d.fp_iters <= 10, "{} iterations", d.fp_iters);
            let rhs = step_rhs(&u, &dw, &model);
            let r = implicit_residual(&x, &rhs, &model, k).unwrap();
            assert!(r.inner(&r).sqrt() <= 1e-12 * (1.0 + rhs.inner(&rhs).sqrt()));
        }
    }

    #[test]
    fn picard_residuals_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 16;
        let model = shell_model(NonlinearityKind::Goy { k0: 1.0 }, n, DiffusionMap::new(Gain::Inverse, 0.5));
        let cfg = SchemeConfig::fully_implicit();
        for _ in 0..100 {
            let u = random_state(&mut rng, n, 1.0);
            let dw: Vec<f64> = (0..n).map(|_| rng.random_range(-0.03..0.03)).collect();
            let mut res = Vec::new();
            fully_implicit_step_traced(&u, &dw, &model, 1e-3, &cfg, 0, |it| res.push(it.residual)).unwrap();
            assert!(res.windows(2).all(|w| w[1] < w[0] || w[1] <= 1e-15), "{res:?}");
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = shell_model(NonlinearityKind::Sabra { k0: 1.0 }, 8, DiffusionMap::zero());
        let u = random_state(&mut rng, 8, 1.0);
        let cfg = SchemeConfig {
            fp_max_iter: 1,
            fp_tol: 1e-300,
            ..SchemeConfig::fully_implicit()
        };
        let r = fully_implicit_step(&u, &[0.0; 8], &model, 1e-2, &cfg, 7);
        assert!(matches!(r, Err(Error::NonConvergence { step: 7, iterations: 1, .. })));
    }

    #[test]
    fn deterministic_decay() {
        let model = shell_model(NonlinearityKind::Zero, 4, DiffusionMap::zero());
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let path = NoisePath::from_rows(vec![vec![0.0; 4]; 16], grid.k(), 0).unwrap();
        let u0 = SpectralState::unit(4, 1, c(1.0, 0.0));
        let traj = integrate(&u0, &path, &model, &grid, 4, &SchemeConfig::default()).unwrap();
        assert_eq!(traj.states.len(), 17);
        let mut want = 1.0;
        for s in &traj.states {
            assert!((s[0].re - want).abs() <= 1e-12 * want);
            want /= 1.0 + grid.k() * 4.0;
        }
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn integration_is_deterministic() {
        let model = shell_model(NonlinearityKind::Sabra { k0: 1.0 }, 16, DiffusionMap::new(Gain::Inverse, 0.5));
        let spec = NoiseSpec::new(ModelFamily::Shell, 1.0, 1.0, 16, 42).unwrap();
        let path = sample_path(&spec, 1.0, 64, 0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let u0 = SpectralState::from_real(&[0.5, 0.25, 0.125]);
        let a = integrate(&u0, &path, &model, &grid, 16, &SchemeConfig::default()).unwrap();
        let b = integrate(&u0, &path, &model, &grid, 16, &SchemeConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states[0], project(&u0, 16));
    }

    #[test]
    fn mismatched_path_rejected() {
        let model = shell_model(NonlinearityKind::Zero, 4, DiffusionMap::zero());
        let path = NoisePath::from_rows(vec![vec![0.0; 4]; 8], 0.125, 0).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let r = integrate(&SpectralState::zeros(4), &path, &model, &grid, 4, &SchemeConfig::default());
        assert!(matches!(r, Err(Error::Grid(_))));
    }

    #[test]
    fn energy_inequality_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 24;
        let spec = EigenSpectrum::shell(1.0, n).unwrap();
        for kind in [NonlinearityKind::Zero, NonlinearityKind::Sabra { k0: 1.0 }, NonlinearityKind::Goy { k0: 1.0 }] {
            let model = Model {
                spectrum: spec.clone(),
                nonlinearity: kind,
                diffusion: DiffusionMap::zero(),
            };
            let mut u = SpectralState::zeros(n);
            for m in 3..=n - 3 {
                u[m - 1] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 2f64.powi(-(m as i32));
            }
            let k = 1e-2;
            let (x, _) = semi_implicit_step(&u, &vec![0.0; n], &model, k, 0).unwrap();
            let lhs = x.inner(&x) + (&x - &u).inner(&(&x - &u)) + 2.0 * k * norm_sq_unchecked(&x, 0.5, &spec);
            let leak = 2.0 * k * bilinear_apply(&kind, &u, &x).unwrap().inner(&x).abs();
            assert!(lhs <= u.inner(&u) + leak + 1e-10, "{kind:?}");
        }
    }
}
