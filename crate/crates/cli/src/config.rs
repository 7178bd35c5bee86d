//! Run configuration: TOML schema, validation, and the committed experiment
//! presets (each preset records every parameter explicitly).

use serde::Deserialize;

use metrifem::error::{Error, Result};
use metrifem::integrators::SchemeId;

/// Top-level run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub model: ModelKind,
    #[serde(default)]
    pub seed: Option<u64>,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub integrator: IntegratorConfig,
    pub params: ParamsConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Kdv,
    NsTorus,
    NsSphere,
    Advdiff,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kdv => "kdv",
            ModelKind::NsTorus => "ns-torus",
            ModelKind::NsSphere => "ns-sphere",
            ModelKind::Advdiff => "advdiff",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub kind: MeshKind,
    /// Cells for intervals, cells per direction for the torus.
    #[serde(default)]
    pub n: Option<usize>,
    /// Interval length or torus side length.
    #[serde(default)]
    pub length: Option<f64>,
    /// Icosphere subdivision level.
    #[serde(default)]
    pub subdivisions: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshKind {
    Interval,
    Torus,
    Sphere,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: String,
}

impl IntegratorConfig {
    pub fn scheme_id(&self) -> Result<SchemeId> {
        self.scheme.parse()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    pub nu: f64,
    #[serde(default)]
    pub velocity: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    #[serde(default)]
    pub n_vortices: Option<usize>,
    #[serde(default)]
    pub intensity: Option<f64>,
    /// Regularisation width as a multiple of the mean mesh spacing.
    #[serde(default)]
    pub width_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Soliton,
    Walsh,
    SphereHarmonic,
    PointVortices,
    Sine,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub fp_tolerance: f64,
    pub fp_max_iterations: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Interval/torus cell counts, or sphere subdivision levels.
    pub resolutions: Vec<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn require<T: Copy>(value: Option<T>, field: &str) -> Result<T> {
        value.ok_or_else(|| Error::InvalidArgument(format!("missing config field {field}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_alphanumeric() || c == '-') {
            return Err(Error::InvalidArgument(format!(
                "run name must be non-empty alphanumeric/dashes, got {:?}",
                self.name
            )));
        }
        self.integrator.scheme_id()?;
        if self.time.n_steps == 0 || !(self.time.t_end > self.time.t0) {
            return Err(Error::InvalidArgument("invalid time grid".into()));
        }
        if !(self.solver.fp_tolerance > 0.0) || self.solver.fp_max_iterations == 0 {
            return Err(Error::InvalidArgument("invalid solver settings".into()));
        }
        if self.params.nu < 0.0 {
            return Err(Error::InvalidArgument("nu must be nonnegative".into()));
        }
        let mesh_ok = match (self.model, self.mesh.kind) {
            (ModelKind::Kdv | ModelKind::Advdiff, MeshKind::Interval) => true,
            (ModelKind::NsTorus, MeshKind::Torus) => true,
            (ModelKind::NsSphere, MeshKind::Sphere) => true,
            _ => false,
        };
        if !mesh_ok {
            return Err(Error::InvalidArgument(format!(
                "model {} incompatible with mesh kind {:?}",
                self.model.name(),
                self.mesh.kind
            )));
        }
        match self.mesh.kind {
            MeshKind::Interval | MeshKind::Torus => {
                let n = Self::require(self.mesh.n, "mesh.n")?;
                let length = Self::require(self.mesh.length, "mesh.length")?;
                if n < 3 || !(length > 0.0) {
                    return Err(Error::InvalidArgument("invalid mesh resolution".into()));
                }
            }
            MeshKind::Sphere => {
                Self::require(self.mesh.subdivisions, "mesh.subdivisions")?;
            }
        }
        let ic_ok = match (self.model, self.initial.kind) {
            (ModelKind::Kdv, InitialKind::Soliton) => true,
            (ModelKind::NsTorus, InitialKind::Walsh) => true,
            (ModelKind::NsSphere, InitialKind::SphereHarmonic | InitialKind::PointVortices) => true,
            (ModelKind::Advdiff, InitialKind::Sine) => true,
            _ => false,
        };
        if !ic_ok {
            return Err(Error::InvalidArgument(format!(
                "initial condition {:?} not supported for model {}",
                self.initial.kind,
                self.model.name()
            )));
        }
        if self.initial.kind == InitialKind::PointVortices {
            let nv = Self::require(self.initial.n_vortices, "initial.n_vortices")?;
            if nv == 0 || nv % 2 != 0 {
                return Err(Error::InvalidArgument("n_vortices must be even".into()));
            }
            Self::require(self.initial.intensity, "initial.intensity")?;
        }
        if self.model == ModelKind::Kdv {
            Self::require(self.params.alpha, "params.alpha")?;
            Self::require(self.params.eta, "params.eta")?;
        }
        if self.model == ModelKind::Advdiff {
            Self::require(self.params.velocity, "params.velocity")?;
        }
        if let Some(conv) = &self.convergence {
            if conv.resolutions.is_empty() {
                return Err(Error::InvalidArgument("empty convergence list".into()));
            }
            if conv.resolutions.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "convergence resolutions must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Names and contents of the committed experiment presets.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "kdv-soliton-conservative",
        include_str!("../presets/kdv-soliton-conservative.toml"),
    ),
    (
        "kdv-soliton-dissipative",
        include_str!("../presets/kdv-soliton-dissipative.toml"),
    ),
    (
        "ns-torus-walsh",
        include_str!("../presets/ns-torus-walsh.toml"),
    ),
    (
        "ns-torus-walsh-inviscid",
        include_str!("../presets/ns-torus-walsh-inviscid.toml"),
    ),
    (
        "ns-sphere-harmonic",
        include_str!("../presets/ns-sphere-harmonic.toml"),
    ),
    (
        "ns-sphere-vortices",
        include_str!("../presets/ns-sphere-vortices.toml"),
    ),
    (
        "advdiff-smoke",
        include_str!("../presets/advdiff-smoke.toml"),
    ),
];

pub fn preset(name: &str) -> Result<RunConfig> {
    for (preset_name, text) in PRESETS {
        if *preset_name == name {
            return RunConfig::parse(text);
        }
    }
    let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
    Err(Error::InvalidArgument(format!(
        "unknown preset {name:?}; available: {}",
        known.join(", ")
    )))
}
