//! Bilinear terms `B(u, v)` for the GOY and Sabra shell models and the 1D
//! nonlinear heat equation, and their linearization in the second slot.
//!
//! Shell coefficients with index `< 1` or `> N` are zero. The shell maps
//! conjugate some of their arguments, so `v -> B(u, v)` is only real-linear;
//! the linearized operator is therefore stored as a real `2N x 2N` matrix
//! acting on interleaved `(Re v_1, Im v_1, Re v_2, Im v_2, ...)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::spectral::{norm_sq_unchecked, EigenSpectrum, SpectralState};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearityKind {
    Goy { k0: f64 },
    Sabra { k0: f64 },
    /// `B(u, v) = |u| v` evaluated on `quad_points` interior collocation nodes.
    Heat1d { quad_points: usize },
    Zero,
}

impl NonlinearityKind {
    pub fn name(&self) -> &'static str {
        match self {
            NonlinearityKind::Goy { .. } => "goy",
            NonlinearityKind::Sabra { .. } => "sabra",
            NonlinearityKind::Heat1d { .. } => "heat1d",
            NonlinearityKind::Zero => "zero",
        }
    }

    pub fn is_shell(&self) -> bool {
        matches!(self, NonlinearityKind::Goy { .. } | NonlinearityKind::Sabra { .. })
    }

    /// Checks the kind's parameters against a Galerkin dimension.
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        match *self {
            NonlinearityKind::Goy { k0 } | NonlinearityKind::Sabra { k0 } => {
                if !(k0 > 0.0 && k0.is_finite()) {
                    return Err(Error::Domain(format!("k0 must be positive, got {k0}")));
                }
            }
            NonlinearityKind::Heat1d { quad_points } => {
                if quad_points < 4 * n_modes {
                    return Err(Error::Domain(format!(
                        "quad_points = {quad_points} < 4 N = {}",
                        4 * n_modes
                    )));
                }
            }
            NonlinearityKind::Zero => {}
        }
        Ok(())
    }
}

#[inline]
fn shell_lambda(k0: f64, n: isize) -> f64 {
    k0 * 2f64.powi(n as i32)
}

fn goy(k0: f64, u: &SpectralState, v: &SpectralState) -> SpectralState {
    let n_modes = u.n_modes();
    let mut out = SpectralState::zeros(n_modes);
    for n in 1..=n_modes as isize {
        let t = 0.25 * (v.get(n - 1) * u.get(n + 1)).conj()
            - 0.5 * ((u.get(n + 1) * v.get(n + 2)).conj() + (v.get(n + 1) * u.get(n + 2)).conj())
            + 0.125 * (u.get(n - 1) * v.get(n - 2)).conj();
        out[n as usize - 1] = I * shell_lambda(k0, n) * t;
    }
    out
}

fn sabra(k0: f64, u: &SpectralState, v: &SpectralState) -> SpectralState {
    let n_modes = u.n_modes();
    let mut out = SpectralState::zeros(n_modes);
    let third = I / 3.0;
    for n in 1..=n_modes as isize {
        let a = shell_lambda(k0, n + 1) * (v.get(n + 1).conj() * u.get(n + 2) + 2.0 * u.get(n + 1).conj() * v.get(n + 2));
        let b = shell_lambda(k0, n) * (u.get(n - 1).conj() * v.get(n + 1) - v.get(n - 1).conj() * u.get(n + 1));
        let c = shell_lambda(k0, n - 1) * (2.0 * u.get(n - 1) * v.get(n - 2) + u.get(n - 2) * v.get(n - 1));
        out[n as usize - 1] = third * (a + b + c);
    }
    out
}

/// Interior collocation nodes `x_i = i pi / (Q + 1)` and the sampled basis
/// `psi_n(x) = sqrt(2/pi) sin(n x)`. The trapezoidal weight `pi / (Q + 1)`
/// makes the sampled basis exactly orthonormal for `n <= Q`.
struct SineGrid {
    q: usize,
    n_modes: usize,
    weight: f64,
    /// `psi[i * n_modes + (n - 1)]`
    psi: Vec<f64>,
}

impl SineGrid {
    fn new(q: usize, n_modes: usize) -> Self {
        let h = PI / (q + 1) as f64;
        let amp = (2.0 / PI).sqrt();
        let mut psi = Vec::with_capacity(q * n_modes);
        for i in 1..=q {
            let x = i as f64 * h;
            psi.extend((1..=n_modes).map(|n| amp * (n as f64 * x).sin()));
        }
        Self {
            q,
            n_modes,
            weight: h,
            psi,
        }
    }

    fn synthesize(&self, u: &SpectralState) -> Vec<Complex64> {
        (0..self.q)
            .map(|i| {
                let row = &self.psi[i * self.n_modes..(i + 1) * self.n_modes];
                row.iter().zip(u.coeffs()).map(|(p, c)| c * *p).sum()
            })
            .collect()
    }

    fn analyze(&self, f: &[Complex64]) -> SpectralState {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_modes];
        for (i, fi) in f.iter().enumerate() {
            let row = &self.psi[i * self.n_modes..(i + 1) * self.n_modes];
            for (o, p) in out.iter_mut().zip(row) {
                *o += fi * *p;
            }
        }
        SpectralState::new(out.into_iter().map(|c| c * self.weight).collect())
    }
}

fn heat(quad_points: usize, u: &SpectralState, v: &SpectralState) -> SpectralState {
    let grid = SineGrid::new(quad_points, u.n_modes());
    let ux = grid.synthesize(u);
    let vx = grid.synthesize(v);
    let f: Vec<Complex64> = ux.iter().zip(&vx).map(|(a, b)| b * a.norm()).collect();
    grid.analyze(&f)
}

/// `pi_N B(u, v)`.
pub fn bilinear_apply(kind: &NonlinearityKind, u: &SpectralState, v: &SpectralState) -> Result<SpectralState> {
    if u.n_modes() != v.n_modes() {
        return Err(Error::Dimension {
            expected: u.n_modes(),
            got: v.n_modes(),
        });
    }
    Ok(match *kind {
        NonlinearityKind::Goy { k0 } => goy(k0, u, v),
        NonlinearityKind::Sabra { k0 } => sabra(k0, u, v),
        NonlinearityKind::Heat1d { quad_points } => {
            kind.validate(u.n_modes())?;
            heat(quad_points, u, v)
        }
        NonlinearityKind::Zero => SpectralState::zeros(u.n_modes()),
    })
}

/// The real-linear map `v -> pi_N B(u, v)` for a frozen `u`.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    matrix: BandMatrix,
    frozen: SpectralState,
}

impl LinearizedOperator {
    pub fn n_modes(&self) -> usize {
        self.frozen.n_modes()
    }

    pub fn frozen_state(&self) -> &SpectralState {
        &self.frozen
    }

    /// Real `2N x 2N` matrix on interleaved real/imaginary parts.
    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> BandMatrix {
        self.matrix
    }

    pub fn apply(&self, v: &SpectralState) -> SpectralState {
        assert_eq!(v.n_modes(), self.n_modes());
        from_real(&self.matrix.matvec(&to_real(v)))
    }

    /// Image of the unit vector `e_m` (1-based).
    pub fn column(&self, m: usize) -> SpectralState {
        self.apply(&SpectralState::unit(self.n_modes(), m, Complex64::new(1.0, 0.0)))
    }

    /// The real 2x2 block coupling output mode `n` to input mode `m` (1-based).
    pub fn block(&self, n: usize, m: usize) -> [[f64; 2]; 2] {
        let (r, c) = (2 * (n - 1), 2 * (m - 1));
        [
            [self.matrix.get(r, c), self.matrix.get(r, c + 1)],
            [self.matrix.get(r + 1, c), self.matrix.get(r + 1, c + 1)],
        ]
    }
}

pub(crate) fn to_real(v: &SpectralState) -> Vec<f64> {
    v.coeffs().iter().flat_map(|c| [c.re, c.im]).collect()
}

pub(crate) fn from_real(x: &[f64]) -> SpectralState {
    SpectralState::new(x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

/// Adds the block of `v_m -> p v_m` at output mode `n`.
fn add_linear(m: &mut BandMatrix, n: isize, col: isize, p: Complex64, n_modes: usize) {
    if col < 1 || col as usize > n_modes || p == Complex64::new(0.0, 0.0) {
        return;
    }
    let (r, c) = (2 * (n as usize - 1), 2 * (col as usize - 1));
    m.add(r, c, p.re);
    m.add(r, c + 1, -p.im);
    m.add(r + 1, c, p.im);
    m.add(r + 1, c + 1, p.re);
}

/// Adds the block of `v_m -> q conj(v_m)` at output mode `n`.
fn add_conj(m: &mut BandMatrix, n: isize, col: isize, q: Complex64, n_modes: usize) {
    if col < 1 || col as usize > n_modes || q == Complex64::new(0.0, 0.0) {
        return;
    }
    let (r, c) = (2 * (n as usize - 1), 2 * (col as usize - 1));
    m.add(r, c, q.re);
    m.add(r, c + 1, q.im);
    m.add(r + 1, c, q.im);
    m.add(r + 1, c + 1, -q.re);
}

/// Assembles the linearization of `B(u, .)`. Shell kinds use a direct
/// banded assembly (mode bandwidth 2); heat builds the Galerkin matrix of
/// multiplication by `|u(x)|`.
pub fn linearize(kind: &NonlinearityKind, u: &SpectralState) -> Result<LinearizedOperator> {
    u.check_finite()?;
    let n_modes = u.n_modes();
    let dim = 2 * n_modes;
    let matrix = match *kind {
        NonlinearityKind::Zero => BandMatrix::zeros(dim, 0, 0),
        NonlinearityKind::Sabra { k0 } => {
            let mut m = BandMatrix::zeros(dim, 5, 5);
            let third = I / 3.0;
            for n in 1..=n_modes as isize {
                let l_up = shell_lambda(k0, n + 1);
                let l = shell_lambda(k0, n);
                let l_dn = shell_lambda(k0, n - 1);
                add_linear(&mut m, n, n + 2, third * l_up * 2.0 * u.get(n + 1).conj(), n_modes);
                add_conj(&mut m, n, n + 1, third * l_up * u.get(n + 2), n_modes);
                add_linear(&mut m, n, n + 1, third * l * u.get(n - 1).conj(), n_modes);
                add_conj(&mut m, n, n - 1, -third * l * u.get(n + 1), n_modes);
                add_linear(&mut m, n, n - 2, third * l_dn * 2.0 * u.get(n - 1), n_modes);
                add_linear(&mut m, n, n - 1, third * l_dn * u.get(n - 2), n_modes);
            }
            m
        }
        NonlinearityKind::Goy { k0 } => {
            let mut m = BandMatrix::zeros(dim, 5, 5);
            for n in 1..=n_modes as isize {
                let il = I * shell_lambda(k0, n);
                add_conj(&mut m, n, n - 1, il * 0.25 * u.get(n + 1).conj(), n_modes);
                add_conj(&mut m, n, n + 2, il * -0.5 * u.get(n + 1).conj(), n_modes);
                add_conj(&mut m, n, n + 1, il * -0.5 * u.get(n + 2).conj(), n_modes);
                add_conj(&mut m, n, n - 2, il * 0.125 * u.get(n - 1).conj(), n_modes);
            }
            m
        }
        NonlinearityKind::Heat1d { quad_points } => {
            kind.validate(n_modes)?;
            let grid = SineGrid::new(quad_points, n_modes);
            let abs_u: Vec<f64> = grid.synthesize(u).iter().map(|c| c.norm()).collect();
            let mut gram = vec![0.0; n_modes * n_modes];
            for (i, a) in abs_u.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let row = &grid.psi[i * n_modes..(i + 1) * n_modes];
                for r in 0..n_modes {
                    let s = grid.weight * a * row[r];
                    for c in r..n_modes {
                        gram[r * n_modes + c] += s * row[c];
                    }
                }
            }
            let mut m = BandMatrix::dense(dim);
            for r in 0..n_modes {
                for c in r..n_modes {
                    let g = gram[r * n_modes + c];
                    for (rr, cc) in [(r, c), (c, r)] {
                        m.set(2 * rr, 2 * cc, g);
                        m.set(2 * rr + 1, 2 * cc + 1, g);
                    }
                }
            }
            m
        }
    };
    Ok(LinearizedOperator {
        matrix,
        frozen: u.clone(),
    })
}

/// Reference assembly: column `j` of the real matrix is the image of the
/// `j`-th real basis direction (`e_m` or `i e_m`) under `bilinear_apply`.
pub fn linearize_by_columns(kind: &NonlinearityKind, u: &SpectralState) -> Result<LinearizedOperator> {
    let n_modes = u.n_modes();
    let dim = 2 * n_modes;
    let mut m = BandMatrix::dense(dim);
    for j in 0..dim {
        let value = if j % 2 == 0 { Complex64::new(1.0, 0.0) } else { I };
        let e = SpectralState::unit(n_modes, j / 2 + 1, value);
        let col = to_real(&bilinear_apply(kind, u, &e)?);
        for (i, x) in col.into_iter().enumerate() {
            m.set(i, j, x);
        }
    }
    Ok(LinearizedOperator {
        matrix: m,
        frozen: u.clone(),
    })
}

/// `Re <B(u, v), v>`; identically zero for the infinite shell systems.
pub fn energy_pairing(kind: &NonlinearityKind, u: &SpectralState, v: &SpectralState) -> Result<f64> {
    match kind {
        NonlinearityKind::Heat1d { .. } => Err(Error::UnsupportedKind {
            kind: "heat1d",
            what: "energy pairing has no cancellation law",
        }),
        _ => Ok(bilinear_apply(kind, u, v)?.inner(v)),
    }
}

/// Largest observed `||B(u, v)||_{out} / (||u||_{u_alpha} ||v||_{v_alpha})`
/// over `samples` random pairs.
///
/// Each pair is supported on a random window of at most five consecutive
/// modes. Shell interactions only couple neighbours within distance two and
/// the shell weights are geometric, so the ratio of a window pair does not
/// depend on where the window sits; the supremum is then insensitive to `N`.
pub fn bilinear_ratio_sup(
    kind: &NonlinearityKind,
    spec: &EigenSpectrum,
    n_modes: usize,
    out_alpha: f64,
    u_alpha: f64,
    v_alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_modes > spec.len() {
        return Err(Error::Dimension {
            expected: spec.len(),
            got: n_modes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let center = rng.random_range(1..=n_modes) as isize;
        let draw = |rng: &mut ChaCha8Rng| {
            let mut s = SpectralState::zeros(n_modes);
            for n in (center - 2).max(1)..=(center + 2).min(n_modes as isize) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                s[n as usize - 1] = Complex64::new(re, im);
            }
            s
        };
        let u = draw(&mut rng);
        let v = draw(&mut rng);
        let nu = norm_sq_unchecked(&u, u_alpha, spec).sqrt();
        let nv = norm_sq_unchecked(&v, v_alpha, spec).sqrt();
        if nu == 0.0 || nv == 0.0 {
            continue;
        }
        let b = bilinear_apply(kind, &u, &v)?;
        let ratio = norm_sq_unchecked(&b, out_alpha, spec).sqrt() / (nu * nv);
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    Ok(best)
}

/// Monte-Carlo estimate of the constant in
/// `||B(u, v)||_{-alpha} <= c ||u||_{1/2 - (alpha + beta)} ||v||_beta`.
pub fn estimate_bilinear_constant(
    kind: &NonlinearityKind,
    spec: &EigenSpectrum,
    n_modes: usize,
    alpha: f64,
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let s = alpha + beta;
    if alpha < 0.0 || beta < 0.0 || !(s > 0.0 && s <= 0.5) {
        return Err(Error::Domain(format!(
            "need alpha, beta >= 0 and alpha + beta in (0, 1/2], got alpha = {alpha}, beta = {beta}"
        )));
    }
    bilinear_ratio_sup(kind, spec, n_modes, -alpha, 0.5 - s, beta, samples, seed)
}
