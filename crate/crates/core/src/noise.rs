//! Q-Wiener increments with diagonal covariance and the scalar-gain
//! diffusion `G(u) h = g(|u|) h`.
//!
//! A path is drawn once on the finest time grid; coarser grids see exact
//! sums of the same increments, so every resolution is driven by the same
//! Brownian motion.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{norm_sq_unchecked, EigenSpectrum, ModelFamily, SpectralState};

/// Covariance `q_n = base_n^(-2 alpha0)` with `base_n = k0 2^n` (shell) or `n` (heat).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub alpha0: f64,
    pub master_seed: u64,
    pub family: ModelFamily,
    pub k0: f64,
    q: Vec<f64>,
    trace_q: f64,
}

impl NoiseSpec {
    pub fn new(family: ModelFamily, k0: f64, alpha0: f64, n_noise_modes: usize, master_seed: u64) -> Result<Self> {
        if !(alpha0 > 0.5) {
            return Err(Error::Domain(format!("alpha0 must exceed 1/2, got {alpha0}")));
        }
        if n_noise_modes == 0 {
            return Err(Error::Domain("n_noise_modes must be positive".into()));
        }
        if family == ModelFamily::Shell && !(k0 > 0.0) {
            return Err(Error::Domain(format!("k0 must be positive, got {k0}")));
        }
        let q: Vec<f64> = (1..=n_noise_modes)
            .map(|n| {
                let base = match family {
                    ModelFamily::Shell => k0 * 2f64.powi(n as i32),
                    ModelFamily::Heat1d => n as f64,
                };
                base.powf(-2.0 * alpha0)
            })
            .collect();
        let trace_q = q.iter().sum();
        Ok(Self {
            alpha0,
            master_seed,
            family,
            k0,
            q,
            trace_q,
        })
    }

    /// Explicit covariance weights, for tests and replays.
    pub fn from_weights(q: Vec<f64>, master_seed: u64) -> Result<Self> {
        if q.is_empty() || q.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Domain("covariance weights must be finite and nonnegative".into()));
        }
        let trace_q = q.iter().sum();
        Ok(Self {
            alpha0: f64::NAN,
            master_seed,
            family: ModelFamily::Shell,
            k0: f64::NAN,
            q,
            trace_q,
        })
    }

    pub fn n_noise_modes(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn trace_q(&self) -> f64 {
        self.trace_q
    }
}

/// Increments `dW[j][n]` on a uniform grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    increments: Vec<f64>,
    rows: usize,
    modes: usize,
    step: f64,
    path_id: u64,
}

impl NoisePath {
    pub fn from_rows(rows: Vec<Vec<f64>>, step: f64, path_id: u64) -> Result<Self> {
        let modes = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || modes == 0 || rows.iter().any(|r| r.len() != modes) {
            return Err(Error::Grid("ragged or empty increment matrix".into()));
        }
        Ok(Self {
            rows: rows.len(),
            modes,
            increments: rows.into_iter().flatten().collect(),
            step,
            path_id,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_modes(&self) -> usize {
        self.modes
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.increments[j * self.modes..(j + 1) * self.modes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.increments.chunks_exact(self.modes)
    }

    /// Writes a CSV matrix (rows = steps, columns = modes) behind a `#` header
    /// carrying the seed, step size and covariance weights.
    pub fn write_csv<W: Write>(&self, spec: &NoiseSpec, mut w: W) -> Result<()> {
        writeln!(w, "# master_seed={}", spec.master_seed)?;
        writeln!(w, "# path_id={}", self.path_id)?;
        writeln!(w, "# step={}", self.step)?;
        let q: Vec<String> = spec.q().iter().map(|x| x.to_string()).collect();
        writeln!(w, "# q={}", q.join(","))?;
        for row in self.rows() {
            let cols: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }

    /// Inverse of [`NoisePath::write_csv`]; returns the path and the `q` list.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, Vec<f64>)> {
        let mut step = None;
        let mut path_id = 0;
        let mut q = Vec::new();
        let mut rows = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (key, value) = h.trim().split_once('=').ok_or_else(|| Error::Parse(format!("bad header `{line}`")))?;
                let bad = |_| Error::Parse(format!("bad header value `{line}`"));
                match key {
                    "step" => step = Some(value.parse::<f64>().map_err(bad)?),
                    "path_id" => path_id = value.parse::<u64>().map_err(|_| Error::Parse(format!("bad path_id `{value}`")))?,
                    "q" => {
                        q = value
                            .split(',')
                            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad q entry `{s}`"))))
                            .collect::<Result<_>>()?
                    }
                    _ => {}
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad increment `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let step = step.ok_or_else(|| Error::Parse("missing step header".into()))?;
        Ok((Self::from_rows(rows, step, path_id)?, q))
    }
}

fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

/// Draws `m_fine` rows of increments over `[0, horizon]`. Row `j`, mode `n`
/// is `N(0, k q_n)` with `k = horizon / m_fine`; the result depends only on
/// `(master_seed, path_id)`.
pub fn sample_path(spec: &NoiseSpec, horizon: f64, m_fine: usize, path_id: u64) -> Result<NoisePath> {
    if m_fine == 0 {
        return Err(Error::Grid("need at least one step".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
    }
    let step = horizon / m_fine as f64;
    let scale: Vec<f64> = spec.q.iter().map(|q| (step * q).sqrt()).collect();
    let mut rng = path_rng(spec.master_seed, path_id);
    let mut increments = Vec::with_capacity(m_fine * scale.len());
    for _ in 0..m_fine {
        for s in &scale {
            let z: f64 = rng.sample(StandardNormal);
            increments.push(s * z);
        }
    }
    Ok(NoisePath {
        increments,
        rows: m_fine,
        modes: scale.len(),
        step,
        path_id,
    })
}

/// Sums blocks of `factor` consecutive rows.
pub fn coarsen(path: &NoisePath, factor: usize) -> Result<NoisePath> {
    if factor == 0 || path.rows % factor != 0 {
        return Err(Error::Grid(format!(
            "coarsening factor {factor} does not divide {} rows",
            path.rows
        )));
    }
    let rows = path.rows / factor;
    let mut increments = vec![0.0; rows * path.modes];
    for (j, out) in increments.chunks_exact_mut(path.modes).enumerate() {
        for r in j * factor..(j + 1) * factor {
            for (o, x) in out.iter_mut().zip(path.row(r)) {
                *o += x;
            }
        }
    }
    Ok(NoisePath {
        increments,
        rows,
        modes: path.modes,
        step: path.step * factor as f64,
        path_id: path.path_id,
    })
}

/// Coarsens `path` to exactly `m` rows.
pub fn coarsen_to(path: &NoisePath, m: usize) -> Result<NoisePath> {
    if m == 0 || path.rows % m != 0 {
        return Err(Error::Grid(format!("{m} steps do not divide {} rows", path.rows)));
    }
    coarsen(path, path.rows / m)
}

/// Scalar gain `g` of the diffusion `G(u) h = g(|u|) h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gain {
    /// `sigma / (1 + x)`, Lipschitz constant `sigma`.
    Inverse,
    /// `sigma cos x`, Lipschitz constant `sigma`.
    Cosine,
    /// `sigma`, Lipschitz constant 0.
    Additive,
}

impl Gain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gain::Inverse => "inverse",
            Gain::Cosine => "cosine",
            Gain::Additive => "additive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionMap {
    pub gain: Gain,
    pub sigma: f64,
}

impl DiffusionMap {
    pub fn new(gain: Gain, sigma: f64) -> Self {
        Self { gain, sigma }
    }

    pub fn zero() -> Self {
        Self::new(Gain::Additive, 0.0)
    }

    pub fn g(&self, x: f64) -> f64 {
        match self.gain {
            Gain::Inverse => self.sigma / (1.0 + x),
            Gain::Cosine => self.sigma * x.cos(),
            Gain::Additive => self.sigma,
        }
    }

    /// Lipschitz constant of `g` on `[0, inf)`.
    pub fn lipschitz(&self) -> f64 {
        match self.gain {
            Gain::Inverse | Gain::Cosine => self.sigma.abs(),
            Gain::Additive => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma == 0.0
    }
}

/// `pi_N G(u) dW`: mode `n` gets `g(|u|) dW_n` for `n <= min(N, modes of dW)`.
pub fn apply_g(map: &DiffusionMap, u: &SpectralState, dw_row: &[f64]) -> SpectralState {
    let mut out = SpectralState::zeros(u.n_modes());
    if map.is_zero() {
        return out;
    }
    let h_norm = u.inner(u).sqrt();
    let gain = map.g(h_norm);
    for (o, dw) in out.coeffs_mut().iter_mut().zip(dw_row) {
        *o = Complex64::new(gain * dw, 0.0);
    }
    out
}

/// `||dW||_H^2` of one increment row (helper for moment checks).
pub fn increment_norm_sq(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum()
}

/// `||u||_0` via the spectrum, for callers that already hold one.
pub fn h_norm(u: &SpectralState, spec: &EigenSpectrum) -> f64 {
    norm_sq_unchecked(u, 0.0, spec).sqrt()
}
