//! ε-sweeps comparing thin-film minima with the limit minimum, plus the
//! algebraic identity checks and the planar interfacial cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{MsSpec, PerturbationSpec, RunConfig, SurfaceSpec, SweepSettings, TargetSpec, TensorSpec, WarmStart};
use crate::energy::{eval_limit_energy, h1_distance, optimal_corrector, recovery_field, Energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::field::{random_field, DirectorField, Layout, SmoothRandomMap};
use crate::linalg::Vec3;
use crate::minimize::{minimize, MinimizeOptions, MinimizeReport, Termination};
use crate::perturbation::{random_point_on, BoundPerturbation, BoundTensor, PerturbationKind};
use crate::surface::{ParametricSurface, SurfaceGrid, SurfaceKind};
use crate::target::{TargetKind, TargetManifold};

/// Relative slack (times `max(1, min E_N)`) for monotonicity and bound checks.
pub const SWEEP_SLACK: f64 = 1e-9;
/// Identity residuals must stay below this multiple of `max |K|²`.
pub const IDENTITY_TOL: f64 = 1e-14;
/// The smallest-ε gap must not exceed this fraction of the largest-ε gap.
pub const GAP_RATIO_MAX: f64 = 0.2;

/// Geometry, target and bound operators for one configuration.
pub struct Problem {
    pub grid: SurfaceGrid<f64>,
    pub target: TargetManifold<f64>,
    pub perturbation: BoundPerturbation<f64>,
    pub tensor: Option<BoundTensor<f64>>,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let grid = cfg.surface.build()?;
        let target = cfg.target.build()?;
        let perturbation = cfg.perturbation.kind().bind(&grid)?;
        let tensor = cfg.tensor.map(|t| t.tensor().bind(&grid)).transpose()?;
        Ok(Problem { grid, target, perturbation, tensor })
    }

    /// `E_N`, or its generalized form when a tensor is configured.
    pub fn limit_energy(&self) -> Energy<'_, f64> {
        match &self.tensor {
            Some(t) => Energy::limit_general(&self.grid, &self.target, &self.perturbation, t),
            None => Energy::limit(&self.grid, &self.target, &self.perturbation),
        }
    }

    pub fn thin_energy(&self, eps: f64) -> Energy<'_, f64> {
        Energy::thin(&self.grid, &self.target, &self.perturbation, eps, self.tensor.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub energy: EnergyBreakdown<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub termination: Termination,
}

impl From<&MinimizeReport<f64>> for SolveSummary {
    fn from(r: &MinimizeReport<f64>) -> Self {
        SolveSummary { energy: r.energy, iterations: r.iterations, gradient_norm: r.gradient_norm, termination: r.termination }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsEntry {
    pub eps: f64,
    pub n_s: usize,
    /// Failure message; the remaining fields are `None` when set.
    pub error: Option<String>,
    pub minimum: Option<SolveSummary>,
    /// `|min E^ε − min E_N|`
    pub gap: Option<f64>,
    /// `E^ε(u*_ε)` of the recovery field built from the limit minimizer.
    pub recovery_energy: Option<f64>,
    /// `E^ε(u*_ε) − E_N(u₀)`
    pub recovery_gap: Option<f64>,
    /// `H¹` distance of the thin minimizer to the limit minimizer.
    pub h1_distance: Option<f64>,
    /// `½∫|∂_s u|²√g / E^ε` at the thin minimizer.
    pub s_derivative_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub samples: usize,
    /// `max (K n_N · n_M)²` over the samples.
    pub max_residual: f64,
    /// `max |K|²_F` over the samples.
    pub scale: f64,
    pub relative_residual: f64,
    pub vanishing_expected: bool,
    /// Below tolerance when vanishing is expected, strictly positive otherwise.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChecks {
    pub all_entries_ok: bool,
    pub gaps_non_increasing: bool,
    /// Smallest-ε gap over largest-ε gap (0 when both vanish).
    pub gap_ratio: f64,
    pub gap_ratio_ok: bool,
    /// `min E^ε ≤ E^ε(u*_ε)` for every ε.
    pub recovery_upper_bound: bool,
    /// `|E^ε(u*_ε) − E_N(u₀)|` non-increasing as ε decreases.
    pub recovery_gap_non_increasing: bool,
    /// `E^ε(u*_ε)` non-increasing as ε decreases.
    pub recovery_energy_non_increasing: bool,
    /// `E^ε(u*_ε) − E_N(u₀) ≥ −slack` for every ε.
    pub recovery_lower_bound: bool,
    pub h1_non_increasing: bool,
    pub s_share_decreasing: bool,
    pub identity_ok: bool,
    /// Conjunction of the gap, recovery-gap, s-share and identity checks.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: String,
    pub perturbation: String,
    pub limit: SolveSummary,
    pub entries: Vec<EpsEntry>,
    pub identities: IdentityCheck,
    pub checks: SweepChecks,
}

/// A report plus the minimizers it describes.
pub struct SweepOutcome {
    pub report: SweepReport,
    pub limit_field: DirectorField<f64>,
    /// One per ε; `None` for failed entries.
    pub thin_fields: Vec<Option<DirectorField<f64>>>,
}

/// Modes and wave-number bound of the smooth random limit starts.
pub const LIMIT_INIT_MODES: usize = 6;
pub const LIMIT_INIT_FREQUENCY: f64 = 3.0;

/// Lowest-energy limit minimizer over `1 + restarts` smooth random starts.
pub fn minimize_limit(problem: &Problem, opts: &MinimizeOptions, seed: u64, restarts: usize) -> Result<(DirectorField<f64>, MinimizeReport<f64>)> {
    let energy = problem.limit_energy();
    let mut best: Option<(DirectorField<f64>, MinimizeReport<f64>)> = None;
    for r in 0..=restarts as u64 {
        let map = SmoothRandomMap::new(seed.wrapping_add(r), LIMIT_INIT_MODES, LIMIT_INIT_FREQUENCY);
        let init = map.surface_field(&problem.grid, &problem.target)?;
        let (field, report) = minimize(&energy, &init, opts)?;
        if best.as_ref().is_none_or(|(_, b)| report.energy.total < b.energy.total) {
            best = Some((field, report));
        }
    }
    Ok(best.expect("at least one start"))
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg)?;
    let settings = &cfg.sweep;
    let (u0, limit_report) = minimize_limit(&problem, &cfg.minimizer, cfg.seed, settings.restarts)?;
    let limit_min = limit_report.energy.total;
    let d0 = optimal_corrector(&u0, &problem.grid, &problem.target, &problem.perturbation, problem.tensor.as_ref())?;

    let runs: Vec<(EpsEntry, Option<DirectorField<f64>>)> = cfg
        .eps_list()
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| match thin_run(&problem, cfg, &u0, &d0, limit_min, eps, i) {
            Ok((entry, field)) => (entry, Some(field)),
            Err(e) => (failed_entry(eps, settings.n_s, &e), None),
        })
        .collect();
    let (entries, thin_fields): (Vec<_>, Vec<_>) = runs.into_iter().unzip();

    let identities = check_vanishing_identities(
        &problem.grid,
        &problem.target,
        &problem.perturbation,
        settings.identity_samples,
        cfg.seed,
    )?;
    let checks = evaluate_checks(&entries, limit_min, &identities);
    let report = SweepReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        perturbation: cfg.perturbation.name().to_string(),
        limit: SolveSummary::from(&limit_report),
        entries,
        identities,
        checks,
    };
    Ok(SweepOutcome { report, limit_field: u0, thin_fields })
}

fn failed_entry(eps: f64, n_s: usize, e: &Error) -> EpsEntry {
    EpsEntry {
        eps,
        n_s,
        error: Some(e.to_string()),
        minimum: None,
        gap: None,
        recovery_energy: None,
        recovery_gap: None,
        h1_distance: None,
        s_derivative_share: None,
    }
}

fn thin_run(
    problem: &Problem,
    cfg: &RunConfig,
    u0: &DirectorField<f64>,
    d0: &[Vec3<f64>],
    limit_min: f64,
    eps: f64,
    index: usize,
) -> Result<(EpsEntry, DirectorField<f64>)> {
    let n_s = cfg.sweep.n_s;
    let energy = problem.thin_energy(eps);
    let recovery = recovery_field(u0, d0, eps, n_s, &problem.target)?;
    let recovery_energy = energy.evaluate(&recovery)?.total;
    let init = match cfg.sweep.warm_start {
        WarmStart::LimitFirst => recovery,
        WarmStart::Independent => random_field(
            &problem.grid,
            &problem.target,
            Layout::Thin { n_s },
            cfg.seed.wrapping_add(1 + cfg.sweep.restarts as u64 + index as u64),
        )?,
    };
    let (field, report) = minimize(&energy, &init, &cfg.minimizer)?;
    let total = report.energy.total;
    let s_energy = energy.s_derivative_energy(&field)?;
    let entry = EpsEntry {
        eps,
        n_s,
        error: None,
        minimum: Some(SolveSummary::from(&report)),
        gap: Some((total - limit_min).abs()),
        recovery_energy: Some(recovery_energy),
        recovery_gap: Some(recovery_energy - limit_min),
        h1_distance: Some(h1_distance(&field, u0, &problem.grid)?),
        s_derivative_share: Some(if total > 0.0 { s_energy / total } else { 0.0 }),
    };
    Ok((entry, field))
}

fn non_increasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + slack)
}

pub fn evaluate_checks(entries: &[EpsEntry], limit_min: f64, identities: &IdentityCheck) -> SweepChecks {
    let slack = SWEEP_SLACK * limit_min.abs().max(1.0);
    let all_entries_ok = entries.iter().all(|e| e.error.is_none());
    let collect = |f: &dyn Fn(&EpsEntry) -> Option<f64>| entries.iter().filter_map(f).collect::<Vec<f64>>();
    let gaps = collect(&|e| e.gap);
    let rec_gaps = collect(&|e| e.recovery_gap);
    let rec = collect(&|e| e.recovery_energy);
    let h1 = collect(&|e| e.h1_distance);
    let shares = collect(&|e| e.s_derivative_share);

    let gaps_non_increasing = all_entries_ok && non_increasing(&gaps, slack);
    let (first, last) = (gaps.first().copied().unwrap_or(0.0), gaps.last().copied().unwrap_or(0.0));
    let gap_ratio = if first > slack { last / first } else { 0.0 };
    let gap_ratio_ok = all_entries_ok && (first <= slack || gap_ratio <= GAP_RATIO_MAX);
    let recovery_upper_bound = all_entries_ok
        && entries.iter().all(|e| match (e.minimum.as_ref(), e.recovery_energy) {
            (Some(m), Some(r)) => m.energy.total <= r + slack,
            _ => false,
        });
    let abs_rec: Vec<f64> = rec_gaps.iter().map(|g| g.abs()).collect();
    let recovery_gap_non_increasing = all_entries_ok && non_increasing(&abs_rec, slack);
    let recovery_energy_non_increasing = all_entries_ok && non_increasing(&rec, slack);
    let recovery_lower_bound = all_entries_ok && rec_gaps.iter().all(|&g| g >= -slack);
    let h1_non_increasing = all_entries_ok && non_increasing(&h1, slack);
    let s_share_decreasing = all_entries_ok
        && (shares.windows(2).all(|w| w[1] < w[0]) || shares.iter().all(|&s| s <= slack));
    let identity_ok = identities.passed;
    let passed = gaps_non_increasing && gap_ratio_ok && recovery_upper_bound && recovery_gap_non_increasing && s_share_decreasing && identity_ok;
    SweepChecks {
        all_entries_ok,
        gaps_non_increasing,
        gap_ratio,
        gap_ratio_ok,
        recovery_upper_bound,
        recovery_gap_non_increasing,
        recovery_energy_non_increasing,
        recovery_lower_bound,
        h1_non_increasing,
        s_share_decreasing,
        identity_ok,
        passed,
    }
}

/// Whether `K n_N · n_M` is known to vanish identically for this pairing.
pub fn vanishing_expected(kind: &PerturbationKind<f64>, target: &TargetManifold<f64>) -> bool {
    let sphere = matches!(target.kind, TargetKind::Sphere { .. });
    match kind {
        PerturbationKind::Zero | PerturbationKind::InterfacialDmi { .. } => true,
        PerturbationKind::BulkDmi { .. } | PerturbationKind::AnisotropicDmi { .. } | PerturbationKind::Temperature { .. } => sphere,
        PerturbationKind::Custom(_) => false,
    }
}

/// Maximum anisotropy density `(K(ξ,σ) n_N · n_M(σ))²` over random nodes and
/// random `σ ∈ M`, relative to `max |K(ξ,σ)|²_F`.
pub fn check_vanishing_identities(
    grid: &SurfaceGrid<f64>,
    target: &TargetManifold<f64>,
    perturbation: &BoundPerturbation<f64>,
    samples: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    if samples < 1000 {
        return Err(Error::InvalidOptions("identity checks need at least 1000 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1de7_1e55);
    let (mut max_residual, mut scale) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let k = rng.random_range(0..grid.n_nodes());
        let sigma = random_point_on(target, &mut rng)?;
        let kn = perturbation.apply(k, sigma, 2);
        let nm = target.normal(sigma)?;
        max_residual = max_residual.max(kn.dot(nm).powi(2));
        scale = scale.max(perturbation.eval_k(k, sigma)?.frobenius_sq());
    }
    let relative_residual = if scale > 0.0 { max_residual / scale } else { 0.0 };
    let vanishing = vanishing_expected(&perturbation.kind, target);
    let passed = if vanishing { relative_residual <= IDENTITY_TOL } else { max_residual > 0.0 };
    Ok(IdentityCheck { samples, max_residual, scale, relative_residual, vanishing_expected: vanishing, passed })
}

/// Smooth periodic unit field on the unit square: `π(c + Σ a sin(2π(p u + q v) + φ))`.
pub fn periodic_planar_field(grid: &SurfaceGrid<f64>, seed: u64) -> DirectorField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vec3 = |rng: &mut ChaCha8Rng| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let offset = vec3(&mut rng);
    let modes: Vec<(f64, f64, Vec3<f64>, f64)> = (0..4)
        .map(|_| {
            let p = rng.random_range(-2i32..=2) as f64;
            let q = rng.random_range(-2i32..=2) as f64;
            let a = vec3(&mut rng).scale(0.4);
            (p, q, a, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let tau = std::f64::consts::TAU;
    let values = grid
        .frames
        .iter()
        .map(|f| {
            let v = modes.iter().fold(offset, |acc, &(p, q, a, ph)| acc + a * (tau * (p * f.u + q * f.v) + ph).sin());
            // an exactly vanishing ambient value is a measure-zero event; nudge it
            v.normalized().unwrap_or(Vec3::unit(2))
        })
        .collect();
    DirectorField::surface(values)
}

/// The interfacial tangential energy assembled twice: as `Σ_i |∂_i m + K τ_i|²`
/// through the energy module, and from the classical planar density
/// `|∇m|² + 2κ (m₃ div m − m·∇m₃) + κ² (1 + m₃²)`. Returns the largest
/// relative discrepancy over `samples` random smooth fields.
pub fn planar_interfacial_crosscheck(resolution: usize, kappa: f64, samples: usize, seed: u64) -> Result<f64> {
    let grid = ParametricSurface::new(
        SurfaceKind::FlatPatch { lx: 1.0, ly: 1.0, periodic_u: true, periodic_v: true },
        resolution,
        resolution,
    )
    .build()?;
    let target = TargetManifold::sphere(1.0)?;
    let perturbation = PerturbationKind::InterfacialDmi { kappa }.bind(&grid)?;
    let mut worst = 0.0f64;
    for i in 0..samples {
        let m = periodic_planar_field(&grid, seed.wrapping_add(i as u64));
        let a = eval_limit_energy(&m, &grid, &target, &perturbation)?.total;
        let b = classical_interfacial_energy(&grid, &m, kappa)?;
        worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// `∫ |∇m|² + 2κ (m₃ div m − m·∇m₃) + κ² (1 + m₃²)` on a flat chart.
pub fn classical_interfacial_energy(grid: &SurfaceGrid<f64>, m: &DirectorField<f64>, kappa: f64) -> Result<f64> {
    let dx = grid.tangential_derivative(&m.values, 0)?;
    let dy = grid.tangential_derivative(&m.values, 1)?;
    let mut total = 0.0;
    for (k, f) in grid.frames.iter().enumerate() {
        let v = m.values[k];
        let grad_sq = dx[k].norm_sq() + dy[k].norm_sq();
        let div = dx[k].x() + dy[k].y();
        let m_grad_m3 = v.x() * dx[k].z() + v.y() * dy[k].z();
        let density = grad_sq + 2.0 * kappa * (v.z() * div - m_grad_m3) + kappa * kappa * (1.0 + v.z() * v.z());
        total += f.area_weight * density;
    }
    Ok(total)
}

pub const PRESET_NAMES: [&str; 4] = ["bulk", "interfacial", "anisotropic", "temperature"];

/// Fixed DMI tensor of the anisotropic and temperature presets.
pub const PRESET_J: [[f64; 3]; 3] = [[1.0, 0.3, 0.0], [0.0, 0.8, 0.2], [0.1, 0.0, 1.2]];

/// `M_s(x) = 1 + 0.1 x₃` of the temperature preset.
pub const PRESET_MS: MsSpec = MsSpec::Affine { c0: 1.0, c: [0.0, 0.0, 0.1] };

/// Ready-made sweep configurations on the `64 × 64` sphere band with a unit-sphere
/// target. `zero` is the `K = 0` fixture.
pub fn preset(name: &str) -> Option<RunConfig> {
    let (perturbation, tensor) = match name {
        "bulk" => (PerturbationSpec::BulkDmi { kappa: 1.0 }, None),
        "interfacial" => (PerturbationSpec::InterfacialDmi { kappa: 1.0 }, None),
        "anisotropic" => (PerturbationSpec::AnisotropicDmi { j: PRESET_J }, None),
        "temperature" => (
            PerturbationSpec::Temperature { ms: PRESET_MS, j: PRESET_J },
            Some(TensorSpec::ScalarField { a: PRESET_MS }),
        ),
        "zero" => (PerturbationSpec::Zero, None),
        _ => return None,
    };
    Some(RunConfig {
        surface: SurfaceSpec::sphere_band(64),
        target: TargetSpec::unit_sphere(),
        perturbation,
        tensor,
        minimizer: MinimizeOptions::default(),
        sweep: SweepSettings { eps: Some(crate::config::DEFAULT_EPS_LIST.to_vec()), ..SweepSettings::default() },
        output_dir: format!("out/{name}").into(),
        seed: 1,
    })
}
