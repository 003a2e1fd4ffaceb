//! Experiment configuration.
//!
//! The file is TOML restricted to dotted keys, one setting per line:
//!
//! ```text
//! model.kind = "sabra"          # sabra | goy | heat1d | zero
//! model.k0 = 1.0                # shell wavenumber scale
//! model.quad_factor = 4         # heat1d: quadrature points per mode (>= 4)
//! initial.amplitude = 0.1       # u0 = amplitude * sum_{n <= modes} ratio^n e_n
//! initial.ratio = 0.5
//! initial.modes = 8
//! noise.alpha0 = 1.0            # q_n = base_n^(-2 alpha0), alpha0 > 1/2
//! noise.modes = 0               # 0 means space.N_ref
//! diffusion.gain = "inverse"    # inverse | cosine | additive
//! diffusion.sigma = 0.3
//! time.T = 1.0
//! time.M_fine = 16384
//! space.N_ref = 64
//! sweep.M = [128, 256, 512, 1024]
//! sweep.N = [8, 16, 32]
//! analysis.betas = [0.0, 0.1, 0.2]
//! analysis.epsilon = 0.01
//! scheme.variant = "semi_implicit"   # semi_implicit | fully_implicit
//! scheme.fp_tol = 1e-12
//! scheme.fp_max_iter = 100
//! scheme.fp_damping = 1.0
//! run.n_paths = 200
//! run.master_seed = 0
//! run.output_dir = "out"
//! run.max_failure_fraction = 0.01
//! stability.M = [256, 512, 1024]
//! stability.n_paths = 64
//! stability.growth_limit = 1.5
//! regularity.M = 4096
//! regularity.gaps = [1, 2, 4]   # in fine steps
//! regularity.n_paths = 500
//! agreement.M = [100, 200, 400]
//! agreement.n_paths = 20
//! ```
//!
//! Every key is optional; omitted keys take the values shown.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spde_core::{
    DiffusionMap, EigenSpectrum, Gain, Model, ModelFamily, NoiseSpec, NonlinearityKind, SchemeConfig, SchemeVariant,
    SpectralState,
};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    pub k0: f64,
    pub quad_factor: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: "sabra".into(),
            k0: 1.0,
            quad_factor: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub amplitude: f64,
    pub ratio: f64,
    pub modes: usize,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            ratio: 0.5,
            modes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub alpha0: f64,
    pub modes: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { alpha0: 1.0, modes: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub gain: String,
    pub sigma: f64,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            gain: "inverse".into(),
            sigma: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M_fine")]
    pub m_fine: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            m_fine: 1 << 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(rename = "N_ref")]
    pub n_ref: usize,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self { n_ref: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "M")]
    pub m: Vec<usize>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            m: vec![128, 256, 512, 1024],
            n: vec![8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub betas: Vec<f64>,
    pub epsilon: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.1, 0.2],
            epsilon: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub variant: String,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub fp_damping: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let d = SchemeConfig::default();
        Self {
            variant: d.variant.as_str().into(),
            fp_tol: d.fp_tol,
            fp_max_iter: d.fp_max_iter,
            fp_damping: d.fp_damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n_paths: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub max_failure_fraction: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_paths: 200,
            master_seed: 0,
            output_dir: "out".into(),
            max_failure_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(rename = "M")]
    pub m: Vec<usize>,
    pub n_paths: usize,
    pub growth_limit: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            m: vec![256, 512, 1024],
            n_paths: 64,
            growth_limit: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularitySection {
    #[serde(rename = "M")]
    pub m: usize,
    pub gaps: Vec<usize>,
    pub n_paths: usize,
}

impl Default for RegularitySection {
    fn default() -> Self {
        Self {
            m: 1 << 12,
            gaps: vec![1, 2, 4],
            n_paths: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementSection {
    #[serde(rename = "M")]
    pub m: Vec<usize>,
    pub n_paths: usize,
}

impl Default for AgreementSection {
    fn default() -> Self {
        Self {
            m: vec![100, 200, 400],
            n_paths: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub initial: InitialSection,
    pub noise: NoiseSection,
    pub diffusion: DiffusionSection,
    pub time: TimeSection,
    pub space: SpaceSection,
    pub sweep: SweepSection,
    pub analysis: AnalysisSection,
    pub scheme: SchemeSection,
    pub run: RunSection,
    pub stability: StabilitySection,
    pub regularity: RegularitySection,
    pub agreement: AgreementSection,
}

fn require(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::config(field, message()))
    }
}

fn positive(x: f64, field: &str) -> Result<()> {
    require(x > 0.0 && x.is_finite(), field, || format!("must be positive and finite, got {x}"))
}

fn divides_all(values: &[usize], m: usize, field: &str, what: &str) -> Result<()> {
    require(!values.is_empty(), field, || "must not be empty".into())?;
    for &v in values {
        require(v > 0 && m % v == 0, field, || format!("{v} does not divide {what} = {m}"))?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<file>".into());
            HarnessError::config(&field, msg.trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical text of the resolved configuration; loading it back
    /// reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity()?;
        self.gain()?;
        self.variant()?;
        positive(self.model.k0, "model.k0")?;
        require(self.model.quad_factor >= 4, "model.quad_factor", || {
            format!("must be at least 4, got {}", self.model.quad_factor)
        })?;
        require(self.initial.amplitude.is_finite(), "initial.amplitude", || "must be finite".into())?;
        require(self.initial.ratio.is_finite(), "initial.ratio", || "must be finite".into())?;
        require(self.initial.modes >= 1, "initial.modes", || "must be at least 1".into())?;
        require(self.noise.alpha0 > 0.5 && self.noise.alpha0.is_finite(), "noise.alpha0", || {
            format!("must exceed 1/2, got {}", self.noise.alpha0)
        })?;
        require(self.diffusion.sigma.is_finite(), "diffusion.sigma", || "must be finite".into())?;
        positive(self.time.horizon, "time.T")?;
        require(self.time.m_fine >= 1, "time.M_fine", || "must be at least 1".into())?;
        require(self.space.n_ref >= 1, "space.N_ref", || "must be at least 1".into())?;
        divides_all(&self.sweep.m, self.time.m_fine, "sweep.M", "time.M_fine")?;
        require(!self.sweep.n.is_empty(), "sweep.N", || "must not be empty".into())?;
        for &n in &self.sweep.n {
            require(n >= 1 && n <= self.space.n_ref, "sweep.N", || {
                format!("{n} is outside 1..=space.N_ref ({})", self.space.n_ref)
            })?;
        }
        require(!self.analysis.betas.is_empty(), "analysis.betas", || "must not be empty".into())?;
        positive(self.analysis.epsilon, "analysis.epsilon")?;
        for &b in &self.analysis.betas {
            require((0.0..0.25).contains(&b), "analysis.betas", || format!("{b} is outside [0, 1/4)"))?;
        }
        self.scheme_config().validate().map_err(|e| HarnessError::config("scheme", e.to_string()))?;
        require(self.run.n_paths >= 1, "run.n_paths", || "must be at least 1".into())?;
        require(
            (0.0..=1.0).contains(&self.run.max_failure_fraction),
            "run.max_failure_fraction",
            || "must lie in [0, 1]".into(),
        )?;
        require(!self.stability.m.is_empty(), "stability.M", || "must not be empty".into())?;
        let m_max = *self.stability.m.iter().max().unwrap();
        divides_all(&self.stability.m, m_max, "stability.M", "its largest entry")?;
        require(self.stability.n_paths >= 1, "stability.n_paths", || "must be at least 1".into())?;
        positive(self.stability.growth_limit, "stability.growth_limit")?;
        require(self.regularity.m >= 1, "regularity.M", || "must be at least 1".into())?;
        require(!self.regularity.gaps.is_empty(), "regularity.gaps", || "must not be empty".into())?;
        for &g in &self.regularity.gaps {
            require(g >= 1 && g < self.regularity.m, "regularity.gaps", || {
                format!("{g} is outside 1..regularity.M")
            })?;
        }
        require(self.regularity.n_paths >= 1, "regularity.n_paths", || "must be at least 1".into())?;
        require(!self.agreement.m.is_empty(), "agreement.M", || "must not be empty".into())?;
        let a_max = *self.agreement.m.iter().max().unwrap();
        divides_all(&self.agreement.m, a_max, "agreement.M", "its largest entry")?;
        require(self.agreement.n_paths >= 1, "agreement.n_paths", || "must be at least 1".into())?;
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<NonlinearityKind> {
        let k0 = self.model.k0;
        match self.model.kind.as_str() {
            "sabra" => Ok(NonlinearityKind::Sabra { k0 }),
            "goy" => Ok(NonlinearityKind::Goy { k0 }),
            "heat1d" => Ok(NonlinearityKind::Heat1d {
                quad_points: self.model.quad_factor * self.space.n_ref,
            }),
            "zero" => Ok(NonlinearityKind::Zero),
            other => Err(HarnessError::config(
                "model.kind",
                format!("unknown kind `{other}` (expected sabra, goy, heat1d or zero)"),
            )),
        }
    }

    pub fn family(&self) -> ModelFamily {
        if self.model.kind == "heat1d" {
            ModelFamily::Heat1d
        } else {
            ModelFamily::Shell
        }
    }

    pub fn gain(&self) -> Result<Gain> {
        match self.diffusion.gain.as_str() {
            "inverse" => Ok(Gain::Inverse),
            "cosine" => Ok(Gain::Cosine),
            "additive" => Ok(Gain::Additive),
            other => Err(HarnessError::config(
                "diffusion.gain",
                format!("unknown gain `{other}` (expected inverse, cosine or additive)"),
            )),
        }
    }

    pub fn variant(&self) -> Result<SchemeVariant> {
        match self.scheme.variant.as_str() {
            "semi_implicit" => Ok(SchemeVariant::SemiImplicit),
            "fully_implicit" => Ok(SchemeVariant::FullyImplicit),
            other => Err(HarnessError::config(
                "scheme.variant",
                format!("unknown variant `{other}` (expected semi_implicit or fully_implicit)"),
            )),
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            variant: self.variant().unwrap_or(SchemeVariant::SemiImplicit),
            fp_tol: self.scheme.fp_tol,
            fp_max_iter: self.scheme.fp_max_iter,
            fp_damping: self.scheme.fp_damping,
        }
    }

    pub fn spectrum(&self) -> Result<EigenSpectrum> {
        let n = self.space.n_ref;
        Ok(match self.family() {
            ModelFamily::Shell => EigenSpectrum::shell(self.model.k0, n)?,
            ModelFamily::Heat1d => EigenSpectrum::heat1d(n)?,
        })
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model {
            spectrum: self.spectrum()?,
            nonlinearity: self.nonlinearity()?,
            diffusion: DiffusionMap::new(self.gain()?, self.diffusion.sigma),
        })
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let modes = if self.noise.modes == 0 { self.space.n_ref } else { self.noise.modes };
        Ok(NoiseSpec::new(
            self.family(),
            self.model.k0,
            self.noise.alpha0,
            modes,
            self.run.master_seed,
        )?)
    }

    /// `amplitude * sum_{n <= modes} ratio^n e_n` on `space.N_ref` modes.
    pub fn initial_state(&self) -> SpectralState {
        let n_ref = self.space.n_ref;
        let values: Vec<f64> = (1..=n_ref)
            .map(|n| {
                if n <= self.initial.modes {
                    self.initial.amplitude * self.initial.ratio.powi(n as i32)
                } else {
                    0.0
                }
            })
            .collect();
        SpectralState::from_real(&values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.time.m_fine, 16384);
        assert_eq!(cfg.sweep.m, vec![128, 256, 512, 1024]);
    }

    #[test]
    fn dotted_keys_override() {
        let cfg = ExperimentConfig::from_toml(
            "model.kind = \"goy\"\nsweep.M = [64, 128]\ntime.M_fine = 256\nrun.n_paths = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.nonlinearity().unwrap(), NonlinearityKind::Goy { k0: 1.0 });
        assert_eq!(cfg.sweep.m, vec![64, 128]);
        assert_eq!(cfg.run.n_paths, 3);
    }

    #[test]
    fn round_trip_through_canonical_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.analysis.betas = vec![0.0, 0.125];
        cfg.run.master_seed = 99;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    fn field_of(text: &str) -> String {
        match ExperimentConfig::from_toml(text) {
            Err(HarnessError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn violations_name_the_field() {
        assert_eq!(field_of("sweep.M = [100]"), "sweep.M");
        assert_eq!(field_of("sweep.N = [128]"), "sweep.N");
        assert_eq!(field_of("run.n_paths = 0"), "run.n_paths");
        assert_eq!(field_of("noise.alpha0 = 0.5"), "noise.alpha0");
        assert_eq!(field_of("model.kind = \"navier\""), "model.kind");
        assert_eq!(field_of("analysis.betas = [0.3]"), "analysis.betas");
        assert_eq!(field_of("analysis.epsilon = -1.0"), "analysis.epsilon");
        assert_eq!(field_of("diffusion.gain = \"exp\""), "diffusion.gain");
        assert_eq!(field_of("time.T = 0.0"), "time.T");
        assert_eq!(field_of("model.quad_factor = 2"), "model.quad_factor");
        assert_eq!(field_of("regularity.gaps = [0]"), "regularity.gaps");
        assert!(field_of("model.colour = 1").contains("colour"));
    }

    #[test]
    fn errors_exit_with_two() {
        let e = ExperimentConfig::from_toml("run.n_paths = 0").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn initial_state_profile() {
        let cfg = ExperimentConfig::default();
        let u0 = cfg.initial_state();
        assert_eq!(u0.n_modes(), 64);
        assert!((u0[0].re - 0.05).abs() < 1e-15);
        assert!((u0[7].re - 0.1 / 256.0).abs() < 1e-15);
        assert_eq!(u0[8].re, 0.0);
    }
}
