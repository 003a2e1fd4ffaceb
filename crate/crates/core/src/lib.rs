//! Spectral-Galerkin discretization and semi-implicit / fully implicit
//! Euler-Maruyama time stepping for
//!
//! ```text
//! du + [A u + B(u, u)] dt = G(u) dW
//! ```
//!
//! with GOY and Sabra shell nonlinearities or the 1D nonlinear heat term
//! `|u| u`, driven by a trace-class Q-Wiener process. The [`analysis`]
//! module turns coupled coarse/fine runs into localized error statistics and
//! observed convergence orders.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod noise;
pub mod nonlinearity;
pub mod scheme;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Execution;
pub use noise::{apply_g, coarsen, coarsen_to, sample_path, DiffusionMap, Gain, NoisePath, NoiseSpec};
pub use nonlinearity::{bilinear_apply, energy_pairing, estimate_bilinear_constant, linearize, LinearizedOperator, NonlinearityKind};
pub use scheme::{
    fully_implicit_step, integrate, integrate_with, reference_solution, semi_implicit_step, Model, SchemeConfig, SchemeVariant,
    StepDiagnostics, TimeGrid, Trajectory,
};
pub use spectral::{apply_a, norm, norm_sq, project, EigenSpectrum, ModelFamily, SpectralState};

pub use num_complex::Complex64;
