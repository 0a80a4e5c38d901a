//! Chiral perturbation fields `K(ξ, σ)` and elliptic tensors `A(ξ)`.
//!
//! Every shipped preset is linear in `σ`, so for a fixed direction `w` the map
//! `σ ↦ K(ξ, σ) w` is a matrix `B_ξ(w)`. Bound perturbations cache those
//! matrices for `w ∈ {τ_1, τ_2, n_N}` at every node.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::real::Real;
use crate::surface::{SurfaceFrame, SurfaceGrid};
use crate::target::TargetManifold;

/// Step used to differentiate custom perturbations without a derivative callback.
pub const CUSTOM_FD_STEP: f64 = 1e-7;

/// Saturation-magnetization profile `M_s(x)` evaluated on the base surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MsProfile<T> {
    Constant(T),
    /// `c0 + c·x`
    Affine { c0: T, c: Vec3<T> },
    /// `c0 + c1 x_3²`
    Banded { c0: T, c1: T },
}

impl<T: Real> MsProfile<T> {
    pub fn eval(&self, x: Vec3<T>) -> T {
        match *self {
            MsProfile::Constant(c) => c,
            MsProfile::Affine { c0, c } => c0 + c.dot(x),
            MsProfile::Banded { c0, c1 } => c0 + c1 * x.z() * x.z(),
        }
    }
}

/// User hook for `K(ξ, σ)`.
pub trait CustomPerturbation<T: Real>: Send + Sync {
    fn eval(&self, frame: &SurfaceFrame<T>, sigma: Vec3<T>) -> Mat3<T>;
    /// `∂/∂σ [K(ξ, σ) w]`; `None` falls back to central differences with [`CUSTOM_FD_STEP`].
    fn sigma_jacobian(&self, _frame: &SurfaceFrame<T>, _sigma: Vec3<T>, _w: Vec3<T>) -> Option<Mat3<T>> {
        None
    }
}

#[derive(Clone)]
pub enum PerturbationKind<T: Real> {
    Zero,
    /// `K(σ)w = κ (w × σ)`
    BulkDmi { kappa: T },
    /// `K(ξ, σ)w = κ [(n_N·σ) w − (w·σ) n_N]`
    InterfacialDmi { kappa: T },
    /// `K(σ)w = (J w) × σ`
    AnisotropicDmi { j: Mat3<T> },
    /// `K(ξ, σ)w = (∇M_s·w) σ + (J w) × σ`
    Temperature { ms: MsProfile<T>, j: Mat3<T> },
    Custom(Arc<dyn CustomPerturbation<T>>),
}

impl<T: Real> fmt::Debug for PerturbationKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::Zero => f.write_str("Zero"),
            PerturbationKind::BulkDmi { kappa } => write!(f, "BulkDmi {{ kappa: {kappa} }}"),
            PerturbationKind::InterfacialDmi { kappa } => write!(f, "InterfacialDmi {{ kappa: {kappa} }}"),
            PerturbationKind::AnisotropicDmi { j } => write!(f, "AnisotropicDmi {{ j: {j:?} }}"),
            PerturbationKind::Temperature { ms, j } => write!(f, "Temperature {{ ms: {ms:?}, j: {j:?} }}"),
            PerturbationKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl<T: Real> PerturbationKind<T> {
    /// `K(ξ, σ)` as a matrix (column `i` is `K e_i`). `grad_ms` is the tangential
    /// gradient of `M_s` at the node and is ignored by the other kinds.
    pub fn matrix(&self, frame: &SurfaceFrame<T>, grad_ms: Vec3<T>, sigma: Vec3<T>) -> Mat3<T> {
        match self {
            PerturbationKind::Zero => Mat3::zero(),
            PerturbationKind::BulkDmi { kappa } => sigma.cross_matrix().scale(-*kappa),
            PerturbationKind::InterfacialDmi { kappa } => {
                let n = frame.normal;
                (Mat3::diag(n.dot(sigma)) - n.outer(sigma)).scale(*kappa)
            }
            PerturbationKind::AnisotropicDmi { j } => sigma.cross_matrix().scale(-T::one()).mul_mat(j),
            PerturbationKind::Temperature { j, .. } => {
                sigma.outer(grad_ms) - sigma.cross_matrix().mul_mat(j)
            }
            PerturbationKind::Custom(c) => c.eval(frame, sigma),
        }
    }

    /// `B(w)` with `K(ξ, σ) w = B(w) σ`; `None` for custom kinds.
    fn linear_form(&self, frame: &SurfaceFrame<T>, grad_ms: Vec3<T>, w: Vec3<T>) -> Option<Mat3<T>> {
        Some(match self {
            PerturbationKind::Zero => Mat3::zero(),
            PerturbationKind::BulkDmi { kappa } => w.cross_matrix().scale(*kappa),
            PerturbationKind::InterfacialDmi { kappa } => {
                let n = frame.normal;
                (w.outer(n) - n.outer(w)).scale(*kappa)
            }
            PerturbationKind::AnisotropicDmi { j } => j.mul_vec(w).cross_matrix(),
            PerturbationKind::Temperature { j, .. } => {
                Mat3::diag(grad_ms.dot(w)) + j.mul_vec(w).cross_matrix()
            }
            PerturbationKind::Custom(_) => return None,
        })
    }

    /// Binds the perturbation to a frame grid, caching the `ξ`-dependent parts.
    pub fn bind(&self, grid: &SurfaceGrid<T>) -> Result<BoundPerturbation<T>> {
        let grad_ms = match self {
            PerturbationKind::Temperature { ms, .. } => {
                let vals: Vec<T> = grid.frames.iter().map(|f| ms.eval(f.xi)).collect();
                if let Some(bad) = vals.iter().find(|v| !v.is_finite()) {
                    return Err(Error::InvalidPerturbation(format!("M_s evaluates to {bad}")));
                }
                let d1 = grid.tangential_derivative_scalar(&vals, 0)?;
                let d2 = grid.tangential_derivative_scalar(&vals, 1)?;
                grid.frames.iter().enumerate().map(|(k, f)| f.tau1 * d1[k] + f.tau2 * d2[k]).collect()
            }
            _ => vec![Vec3::zero(); grid.n_nodes()],
        };
        let forms = if matches!(self, PerturbationKind::Custom(_)) {
            None
        } else {
            Some(
                grid.frames
                    .iter()
                    .zip(&grad_ms)
                    .map(|(f, &g)| {
                        [f.tau1, f.tau2, f.normal]
                            .map(|w| self.linear_form(f, g, w).expect("preset has a linear form"))
                    })
                    .collect(),
            )
        };
        Ok(BoundPerturbation { kind: self.clone(), frames: grid.frames.clone(), grad_ms, forms })
    }
}

/// Perturbation evaluator attached to a specific frame grid.
#[derive(Clone)]
pub struct BoundPerturbation<T: Real> {
    pub kind: PerturbationKind<T>,
    frames: Vec<SurfaceFrame<T>>,
    grad_ms: Vec<Vec3<T>>,
    /// Per node: `B(τ_1), B(τ_2), B(n_N)`.
    forms: Option<Vec<[Mat3<T>; 3]>>,
}

impl<T: Real> fmt::Debug for BoundPerturbation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundPerturbation").field("kind", &self.kind).field("nodes", &self.frames.len()).finish()
    }
}

impl<T: Real> BoundPerturbation<T> {
    pub fn n_nodes(&self) -> usize {
        self.frames.len()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PerturbationKind::Zero)
    }

    /// Tangential gradient of `M_s` at node `k` (zero unless Temperature).
    pub fn grad_ms(&self, k: usize) -> Vec3<T> {
        self.grad_ms[k]
    }

    /// `K(ξ_k, σ)` as a 3×3 matrix.
    pub fn eval_k(&self, k: usize, sigma: Vec3<T>) -> Result<Mat3<T>> {
        let m = self.kind.matrix(&self.frames[k], self.grad_ms[k], sigma);
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::NonFinite(format!("K at node {k}")))
        }
    }

    /// `(K τ_1, K τ_2)` at node `k`.
    pub fn eval_k_tangential(&self, k: usize, sigma: Vec3<T>) -> Result<[Vec3<T>; 2]> {
        Ok([self.apply(k, sigma, 0), self.apply(k, sigma, 1)])
            .and_then(|r: [Vec3<T>; 2]| {
                if r.iter().all(|v| v.is_finite()) {
                    Ok(r)
                } else {
                    Err(Error::NonFinite(format!("K tangential at node {k}")))
                }
            })
    }

    #[inline]
    fn direction(&self, k: usize, dir: usize) -> Vec3<T> {
        let f = &self.frames[k];
        match dir {
            0 => f.tau1,
            1 => f.tau2,
            _ => f.normal,
        }
    }

    /// `K(ξ_k, σ) w` for `w = τ_1, τ_2, n_N` (`dir = 0, 1, 2`).
    #[inline]
    pub fn apply(&self, k: usize, sigma: Vec3<T>, dir: usize) -> Vec3<T> {
        match &self.forms {
            Some(forms) => forms[k][dir].mul_vec(sigma),
            None => self.kind.matrix(&self.frames[k], self.grad_ms[k], sigma).mul_vec(self.direction(k, dir)),
        }
    }

    /// `∂/∂σ [K(ξ_k, σ) w]` for `w` as in [`Self::apply`].
    #[inline]
    pub fn sigma_jacobian(&self, k: usize, sigma: Vec3<T>, dir: usize) -> Mat3<T> {
        if let Some(forms) = &self.forms {
            return forms[k][dir];
        }
        let w = self.direction(k, dir);
        let frame = &self.frames[k];
        if let PerturbationKind::Custom(c) = &self.kind {
            if let Some(j) = c.sigma_jacobian(frame, sigma, w) {
                return j;
            }
        }
        let h = T::lit(CUSTOM_FD_STEP);
        let cols = [0, 1, 2].map(|j| {
            let e = Vec3::unit(j) * h;
            let plus = self.kind.matrix(frame, self.grad_ms[k], sigma + e).mul_vec(w);
            let minus = self.kind.matrix(frame, self.grad_ms[k], sigma - e).mul_vec(w);
            (plus - minus) * (T::lit(0.5) / h)
        });
        Mat3::from_columns(cols)
    }

    /// Empirical bound `c_K` ≥ every sampled `|K|_F` and Lipschitz quotient, times 1.1.
    pub fn estimate_ck(&self, target: &TargetManifold<T>, samples: usize, seed: u64) -> Result<T> {
        if samples < 1000 {
            return Err(Error::InvalidOptions(format!("c_K estimate needs >= 1000 samples, got {samples}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = T::zero();
        for _ in 0..samples {
            let k = rng.random_range(0..self.n_nodes());
            let s1 = random_point_on(target, &mut rng)?;
            let s2 = random_point_on(target, &mut rng)?;
            let k1 = self.eval_k(k, s1)?;
            let k2 = self.eval_k(k, s2)?;
            best = best.max(k1.frobenius()).max(k2.frobenius());
            let gap = (s1 - s2).norm();
            if gap > T::lit(1e-9) {
                best = best.max((k1 - k2).frobenius() / gap);
            }
        }
        Ok(best * T::lit(1.1))
    }
}

/// Random point of `M` from a standard Gaussian draw (draws within `1e-3` of the
/// origin are rejected). Non-spherical targets are first scaled radially onto
/// `M`, then polished by `π_M`.
pub(crate) fn random_point_on<T: Real, R: Rng>(target: &TargetManifold<T>, rng: &mut R) -> Result<Vec3<T>> {
    use crate::target::TargetKind;
    loop {
        let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let y: Vec3<T> = Vec3::from_f64(g);
        if y.norm() < T::lit(1e-3) {
            continue;
        }
        let y = match &target.kind {
            TargetKind::Ellipsoid { semi_axes } => {
                let q: T = (0..3).map(|i| { let r: T = y[i] / semi_axes[i]; r * r }).sum();
                y * (T::one() / q.sqrt())
            }
            _ => y,
        };
        return target.project(y);
    }
}

/// Elliptic tensor `A(ξ) = a(ξ) I`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EllipticTensor<T> {
    #[default]
    Identity,
    ScalarField(MsProfile<T>),
}

/// Tensor values at the nodes of a grid with ellipticity bounds.
#[derive(Debug, Clone)]
pub struct BoundTensor<T> {
    pub identity: bool,
    pub values: Vec<T>,
    pub lambda: T,
    pub big_lambda: T,
}

impl<T: Real> EllipticTensor<T> {
    pub fn bind(&self, grid: &SurfaceGrid<T>) -> Result<BoundTensor<T>> {
        match self {
            EllipticTensor::Identity => Ok(BoundTensor {
                identity: true,
                values: vec![T::one(); grid.n_nodes()],
                lambda: T::one(),
                big_lambda: T::one(),
            }),
            EllipticTensor::ScalarField(p) => {
                let values: Vec<T> = grid.frames.iter().map(|f| p.eval(f.xi)).collect();
                let lambda = values.iter().copied().fold(T::infinity(), T::min);
                let big_lambda = values.iter().copied().fold(T::neg_infinity(), T::max);
                if !(lambda > T::zero()) || !big_lambda.is_finite() {
                    return Err(Error::NotElliptic(format!("min a = {lambda}, max a = {big_lambda}")));
                }
                Ok(BoundTensor { identity: false, values, lambda, big_lambda })
            }
        }
    }
}

impl<T: Real> BoundTensor<T> {
    pub fn identity(n: usize) -> Self {
        BoundTensor { identity: true, values: vec![T::one(); n], lambda: T::one(), big_lambda: T::one() }
    }

    /// `a(ξ_k)`.
    #[inline]
    pub fn eval_a(&self, k: usize) -> T {
        self.values[k]
    }
}
