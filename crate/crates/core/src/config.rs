//! Run configuration: one JSON document describing a complete experiment.
//!
//! Every section has defaults; unknown keys are rejected. `RunConfig::echo`
//! renders the fully resolved document, and echoing an echo is a fixed point.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::minimize::MinimizeOptions;
use crate::perturbation::{EllipticTensor, MsProfile, PerturbationKind};
use crate::surface::{ParametricSurface, SurfaceGrid, SurfaceKind, DEFAULT_EPS_CAP, DEFAULT_THETA_CAP};
use crate::target::{TargetKind, TargetManifold, DEFAULT_MAX_ITERATIONS, DEFAULT_PROJECTION_TOL};

pub const DEFAULT_EPS_LIST: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const DEFAULT_N_S: usize = 8;
pub const DEFAULT_IDENTITY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere {
        radius: f64,
        #[serde(default = "default_theta_cap")]
        theta_cap: f64,
    },
    Torus { major: f64, minor: f64 },
    Cylinder { radius: f64, height: f64 },
    FlatPatch {
        lx: f64,
        ly: f64,
        #[serde(default)]
        periodic_u: bool,
        #[serde(default)]
        periodic_v: bool,
    },
}

fn default_theta_cap() -> f64 {
    DEFAULT_THETA_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub shape: ShapeSpec,
    pub n_u: usize,
    pub n_v: usize,
    #[serde(default = "default_eps_cap")]
    pub eps_cap: f64,
}

fn default_eps_cap() -> f64 {
    DEFAULT_EPS_CAP
}

impl SurfaceSpec {
    pub fn sphere_band(n: usize) -> Self {
        SurfaceSpec {
            shape: ShapeSpec::Sphere { radius: 1.0, theta_cap: DEFAULT_THETA_CAP },
            n_u: n,
            n_v: n,
            eps_cap: DEFAULT_EPS_CAP,
        }
    }

    pub fn kind(&self) -> SurfaceKind<f64> {
        match self.shape {
            ShapeSpec::Sphere { radius, theta_cap } => SurfaceKind::SphereLatLong { radius, theta_cap },
            ShapeSpec::Torus { major, minor } => SurfaceKind::Torus { major, minor },
            ShapeSpec::Cylinder { radius, height } => SurfaceKind::Cylinder { radius, height },
            ShapeSpec::FlatPatch { lx, ly, periodic_u, periodic_v } => {
                SurfaceKind::FlatPatch { lx, ly, periodic_u, periodic_v }
            }
        }
    }

    pub fn build(&self) -> Result<SurfaceGrid<f64>> {
        SurfaceGrid::build_with_cap(ParametricSurface::new(self.kind(), self.n_u, self.n_v), self.eps_cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetShape {
    Sphere { radius: f64 },
    Ellipsoid { semi_axes: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub shape: TargetShape,
    #[serde(default = "default_projection_tol")]
    pub tol: f64,
    #[serde(default = "default_projection_iterations")]
    pub max_iterations: usize,
}

fn default_projection_tol() -> f64 {
    DEFAULT_PROJECTION_TOL
}

fn default_projection_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

impl TargetSpec {
    pub fn unit_sphere() -> Self {
        TargetSpec {
            shape: TargetShape::Sphere { radius: 1.0 },
            tol: DEFAULT_PROJECTION_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn build(&self) -> Result<TargetManifold<f64>> {
        let kind = match self.shape {
            TargetShape::Sphere { radius } => TargetKind::Sphere { radius },
            TargetShape::Ellipsoid { semi_axes } => TargetKind::Ellipsoid { semi_axes },
        };
        let mut m = TargetManifold::new(kind)?;
        if !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidTarget("projection tolerance and iteration cap must be positive".into()));
        }
        m.tol = self.tol;
        m.max_iterations = self.max_iterations;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MsSpec {
    Constant { value: f64 },
    /// `c0 + c·x`
    Affine { c0: f64, c: [f64; 3] },
    /// `c0 + c1 x_3²`
    Banded { c0: f64, c1: f64 },
}

impl MsSpec {
    pub fn profile(&self) -> MsProfile<f64> {
        match *self {
            MsSpec::Constant { value } => MsProfile::Constant(value),
            MsSpec::Affine { c0, c } => MsProfile::Affine { c0, c: Vec3(c) },
            MsSpec::Banded { c0, c1 } => MsProfile::Banded { c0, c1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    Zero,
    BulkDmi { kappa: f64 },
    InterfacialDmi { kappa: f64 },
    AnisotropicDmi { j: [[f64; 3]; 3] },
    Temperature { ms: MsSpec, j: [[f64; 3]; 3] },
}

impl PerturbationSpec {
    pub fn kind(&self) -> PerturbationKind<f64> {
        match *self {
            PerturbationSpec::Zero => PerturbationKind::Zero,
            PerturbationSpec::BulkDmi { kappa } => PerturbationKind::BulkDmi { kappa },
            PerturbationSpec::InterfacialDmi { kappa } => PerturbationKind::InterfacialDmi { kappa },
            PerturbationSpec::AnisotropicDmi { j } => PerturbationKind::AnisotropicDmi { j: Mat3(j) },
            PerturbationSpec::Temperature { ms, j } => PerturbationKind::Temperature { ms: ms.profile(), j: Mat3(j) },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PerturbationSpec::Zero => "zero",
            PerturbationSpec::BulkDmi { .. } => "bulk_dmi",
            PerturbationSpec::InterfacialDmi { .. } => "interfacial_dmi",
            PerturbationSpec::AnisotropicDmi { .. } => "anisotropic_dmi",
            PerturbationSpec::Temperature { .. } => "temperature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TensorSpec {
    Identity,
    ScalarField { a: MsSpec },
}

impl TensorSpec {
    pub fn tensor(&self) -> EllipticTensor<f64> {
        match self {
            TensorSpec::Identity => EllipticTensor::Identity,
            TensorSpec::ScalarField { a } => EllipticTensor::ScalarField(a.profile()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Every thin minimization starts from the recovery field of the limit minimizer.
    #[default]
    LimitFirst,
    /// Every thin minimization starts from its own random field.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Strictly decreasing thickness list; `None` means the default list clipped to the budget.
    pub eps: Option<Vec<f64>>,
    pub n_s: usize,
    pub warm_start: WarmStart,
    /// Extra random starts for the limit minimization; the lowest energy wins.
    pub restarts: usize,
    pub identity_samples: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            eps: None,
            n_s: DEFAULT_N_S,
            warm_start: WarmStart::LimitFirst,
            restarts: 0,
            identity_samples: DEFAULT_IDENTITY_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: SurfaceSpec,
    pub target: TargetSpec,
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub tensor: Option<TensorSpec>,
    #[serde(default)]
    pub minimizer: MinimizeOptions,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config { path: if path == "." { source.into() } else { format!("{source}: {path}") }, message: e.inner().to_string() }
        })?;
        cfg.validate()?;
        cfg.resolve_defaults()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Fully resolved pretty JSON, newline-terminated.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    fn invalid(path: &str, message: impl Into<String>) -> Error {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// Structural checks that need no geometry.
    pub fn validate(&self) -> Result<()> {
        self.minimizer.validate().map_err(|e| Self::invalid("minimizer", e.to_string()))?;
        if self.sweep.n_s < 4 {
            return Err(Self::invalid("sweep.n_s", "need at least 4 layers"));
        }
        if self.sweep.identity_samples < 1000 {
            return Err(Self::invalid("sweep.identity_samples", "need at least 1000 samples"));
        }
        if let Some(eps) = &self.sweep.eps {
            if eps.is_empty() {
                return Err(Self::invalid("sweep.eps", "empty thickness list"));
            }
            for (i, e) in eps.iter().enumerate() {
                if !(*e > 0.0 && e.is_finite()) {
                    return Err(Self::invalid(&format!("sweep.eps[{i}]"), "thickness must be positive"));
                }
                if i > 0 && !(*e < eps[i - 1]) {
                    return Err(Self::invalid(&format!("sweep.eps[{i}]"), "thickness list must be strictly decreasing"));
                }
            }
        }
        let surface = self.surface.build().map_err(|e| Self::invalid("surface", e.to_string()))?;
        self.target.build().map_err(|e| Self::invalid("target", e.to_string()))?;
        self.perturbation.kind().bind(&surface).map_err(|e| Self::invalid("perturbation", e.to_string()))?;
        if let Some(t) = &self.tensor {
            t.tensor().bind(&surface).map_err(|e| Self::invalid("tensor", e.to_string()))?;
        }
        if let Some(eps) = &self.sweep.eps {
            for (i, &e) in eps.iter().enumerate() {
                surface.budget.check(e).map_err(|err| Self::invalid(&format!("sweep.eps[{i}]"), err.to_string()))?;
            }
        }
        Ok(())
    }

    /// Materializes the default thickness list (clipped to the budget).
    fn resolve_defaults(&mut self) -> Result<()> {
        if self.sweep.eps.is_none() {
            let budget = self.surface.build()?.budget;
            let eps: Vec<f64> = DEFAULT_EPS_LIST.iter().copied().filter(|&e| budget.check(e).is_ok()).collect();
            if eps.is_empty() {
                return Err(Self::invalid("sweep.eps", "no default thickness fits the budget"));
            }
            self.sweep.eps = Some(eps);
        }
        Ok(())
    }

    pub fn eps_list(&self) -> &[f64] {
        self.sweep.eps.as_deref().unwrap_or(&DEFAULT_EPS_LIST)
    }
}
