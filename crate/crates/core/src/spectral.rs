//! States in the eigenbasis of the linear operator `A` and the fractional
//! power norms built on its eigenvalues.
//!
//! Every state is a finite vector of complex coefficients `u_n`, `n = 1..N`,
//! and every norm is
//!
//! ```text
//! ||u||_alpha^2 = sum_n mu_n^(2 alpha) |u_n|^2
//! ```
//!
//! where `mu_n` is the eigenvalue of `A` (for shell models `mu_n = (k0 2^n)^2`,
//! for the Dirichlet heat operator on `(0, pi)` `mu_n = n^2`).

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Model family a spectrum belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Shell,
    Heat1d,
}

impl ModelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::Shell => "shell",
            ModelFamily::Heat1d => "heat1d",
        }
    }
}

/// Eigenvalues of `A` along a materialized prefix, indexed from mode 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    mu: Vec<f64>,
    family: ModelFamily,
    k0: f64,
}

impl EigenSpectrum {
    /// Shell spectrum `mu_n = (k0 2^n)^2` for `n = 1..=n_modes`.
    pub fn shell(k0: f64, n_modes: usize) -> Result<Self> {
        if !(k0 > 0.0 && k0.is_finite()) {
            return Err(Error::Domain(format!("k0 must be positive, got {k0}")));
        }
        if n_modes == 0 {
            return Err(Error::Domain("spectrum needs at least one mode".into()));
        }
        let mu = (1..=n_modes)
            .map(|n| {
                let lambda = k0 * 2f64.powi(n as i32);
                lambda * lambda
            })
            .collect();
        Ok(Self {
            mu,
            family: ModelFamily::Shell,
            k0,
        })
    }

    /// Dirichlet Laplacian on `(0, pi)`: `mu_n = n^2`.
    pub fn heat1d(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Domain("spectrum needs at least one mode".into()));
        }
        let mu = (1..=n_modes).map(|n| (n * n) as f64).collect();
        Ok(Self {
            mu,
            family: ModelFamily::Heat1d,
            k0: 1.0,
        })
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    /// Shell wavenumber base (1 for heat).
    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Eigenvalues, `mu()[n - 1] = mu_n`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Eigenvalue of mode `n` (1-based).
    pub fn mu_at(&self, n: usize) -> f64 {
        self.mu[n - 1]
    }

    /// The same family restricted or extended to `n_modes`.
    pub fn with_modes(&self, n_modes: usize) -> Result<Self> {
        match self.family {
            ModelFamily::Shell => Self::shell(self.k0, n_modes),
            ModelFamily::Heat1d => Self::heat1d(n_modes),
        }
    }

    /// Norm weights `mu_n^(2 alpha)` for the first `n` modes.
    pub fn weights(&self, alpha: f64, n: usize) -> Vec<f64> {
        self.mu[..n].iter().map(|m| m.powf(2.0 * alpha)).collect()
    }
}

/// Coefficient vector of a function in the eigenbasis, `coeffs[n - 1] = u_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    coeffs: Vec<Complex64>,
}

impl SpectralState {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); n_modes])
    }

    /// `value * e_mode` in `H_N`, `mode` 1-based.
    pub fn unit(n_modes: usize, mode: usize, value: Complex64) -> Self {
        let mut s = Self::zeros(n_modes);
        s.coeffs[mode - 1] = value;
        s
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of mode `n` (1-based); zero outside `1..=N`.
    #[inline]
    pub fn get(&self, n: isize) -> Complex64 {
        if n >= 1 && (n as usize) <= self.coeffs.len() {
            self.coeffs[n as usize - 1]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidState(format!(
                "non-finite coefficient at mode {}",
                i + 1
            ))),
        }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * a).collect())
    }

    /// Real part of `sum_n u_n conj(v_n)` over the common modes.
    pub fn inner(&self, other: &Self) -> f64 {
        let mut acc = NeumaierSum::default();
        for (a, b) in self.coeffs.iter().zip(&other.coeffs) {
            acc.add(a.re * b.re + a.im * b.im);
        }
        acc.value()
    }

    /// `self - other` after zero-padding both to the larger mode count.
    pub fn sub_embedded(&self, other: &Self) -> Self {
        let n = self.n_modes().max(other.n_modes());
        Self::new(
            (1..=n as isize)
                .map(|i| self.get(i) - other.get(i))
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for SpectralState {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.coeffs[i]
    }
}

impl IndexMut<usize> for SpectralState {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.coeffs[i]
    }
}

impl Add for &SpectralState {
    type Output = SpectralState;
    fn add(self, rhs: &SpectralState) -> SpectralState {
        assert_eq!(self.n_modes(), rhs.n_modes(), "mode count mismatch");
        SpectralState::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &SpectralState {
    type Output = SpectralState;
    fn sub(self, rhs: &SpectralState) -> SpectralState {
        assert_eq!(self.n_modes(), rhs.n_modes(), "mode count mismatch");
        SpectralState::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &SpectralState {
    type Output = SpectralState;
    fn mul(self, rhs: f64) -> SpectralState {
        SpectralState::new(self.coeffs.iter().map(|c| c * rhs).collect())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `||u||_alpha^2`; summed in increasing mode order with compensation.
pub fn norm_sq(u: &SpectralState, alpha: f64, spec: &EigenSpectrum) -> Result<f64> {
    if u.n_modes() > spec.len() {
        return Err(Error::Dimension {
            expected: spec.len(),
            got: u.n_modes(),
        });
    }
    u.check_finite()?;
    Ok(norm_sq_unchecked(u, alpha, spec))
}

/// `||u||_alpha`.
pub fn norm(u: &SpectralState, alpha: f64, spec: &EigenSpectrum) -> Result<f64> {
    norm_sq(u, alpha, spec).map(f64::sqrt)
}

/// Hot-path variant of [`norm_sq`]: no finiteness or length checks.
pub(crate) fn norm_sq_unchecked(u: &SpectralState, alpha: f64, spec: &EigenSpectrum) -> f64 {
    let mut acc = NeumaierSum::default();
    let p = 2.0 * alpha;
    for (c, mu) in u.coeffs.iter().zip(&spec.mu) {
        let w = if p == 0.0 { 1.0 } else { mu.powf(p) };
        acc.add(w * c.norm_sqr());
    }
    acc.value()
}

/// `sum_n w_n |u_n|^2` with precomputed weights from [`EigenSpectrum::weights`].
pub(crate) fn weighted_norm_sq(u: &SpectralState, weights: &[f64]) -> f64 {
    let mut acc = NeumaierSum::default();
    for (c, w) in u.coeffs.iter().zip(weights) {
        acc.add(w * c.norm_sqr());
    }
    acc.value()
}

/// Galerkin projection `pi_N`: truncate or zero-pad to `n` modes.
pub fn project(u: &SpectralState, n: usize) -> SpectralState {
    let mut coeffs: Vec<Complex64> = u.coeffs.iter().take(n).copied().collect();
    coeffs.resize(n, Complex64::new(0.0, 0.0));
    SpectralState::new(coeffs)
}

/// `A^power u`, componentwise `mu_n^power u_n`.
pub fn apply_a(u: &SpectralState, spec: &EigenSpectrum, power: f64) -> Result<SpectralState> {
    if u.n_modes() > spec.len() {
        return Err(Error::Dimension {
            expected: spec.len(),
            got: u.n_modes(),
        });
    }
    u.check_finite()?;
    Ok(SpectralState::new(
        u.coeffs
            .iter()
            .zip(&spec.mu)
            .map(|(c, mu)| c * mu.powf(power))
            .collect(),
    ))
}
