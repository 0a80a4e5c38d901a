//! Chiral Dirichlet energies on curved thin films.
//!
//! Numerical types are generic over the scalar (`f32` or `f64`); the aliases
//! below fix `f64`, which the harness, configuration and CLI use throughout.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod field;
pub mod harness;
pub mod linalg;
pub mod minimize;
pub mod perturbation;
pub mod real;
pub mod report;
pub mod stencil;
pub mod surface;
pub mod target;

pub use config::RunConfig;
pub use energy::{
    eval_limit_energy, eval_limit_energy_general, eval_thin_energy, h1_distance, optimal_corrector, recovery_field,
    EnergyForm,
};
pub use error::{Error, Result};
pub use field::{random_field, Layout, SmoothRandomMap};
pub use harness::{run_sweep, SweepReport};
pub use minimize::{minimize, MinimizeOptions, Objective, Preconditioner, StepRule, Termination};
pub use real::Real;

pub type Vec3 = linalg::Vec3<f64>;
pub type Mat3 = linalg::Mat3<f64>;
pub type Surface = surface::ParametricSurface<f64>;
pub type SurfaceKind = surface::SurfaceKind<f64>;
pub type SurfaceGrid = surface::SurfaceGrid<f64>;
pub type SurfaceFrame = surface::SurfaceFrame<f64>;
pub type ThicknessBudget = surface::ThicknessBudget<f64>;
pub type TargetManifold = target::TargetManifold<f64>;
pub type TargetKind = target::TargetKind<f64>;
pub type PerturbationKind = perturbation::PerturbationKind<f64>;
pub type BoundPerturbation = perturbation::BoundPerturbation<f64>;
pub type EllipticTensor = perturbation::EllipticTensor<f64>;
pub type BoundTensor = perturbation::BoundTensor<f64>;
pub type MsProfile = perturbation::MsProfile<f64>;
pub type DirectorField = field::DirectorField<f64>;
pub type Energy<'a> = energy::Energy<'a, f64>;
pub type EnergyBreakdown = energy::EnergyBreakdown<f64>;
pub type MinimizeReport = minimize::MinimizeReport<f64>;
