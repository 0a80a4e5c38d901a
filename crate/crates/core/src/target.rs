//! Target manifolds `M ⊂ R³`: nearest-point projection, outward normal, signed distance.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::real::Real;

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;

/// User-supplied target. The library checks idempotence and stationarity of
/// the projection in tests but cannot certify global nearest-point uniqueness.
pub trait CustomTarget<T: Real>: Send + Sync {
    fn project(&self, y: Vec3<T>) -> Result<Vec3<T>>;
    fn normal(&self, sigma: Vec3<T>) -> Vec3<T>;
    fn signed_distance(&self, y: Vec3<T>) -> Result<T>;
    /// Half-width of the tubular neighborhood on which `project` is valid.
    fn admissible_radius(&self) -> T;
    /// Smooth unit-normal extension off `M`, used by the discrete energies.
    fn normal_extension(&self, y: Vec3<T>) -> Vec3<T> {
        self.normal(self.project(y).unwrap_or(y))
    }
}

#[derive(Clone)]
pub enum TargetKind<T: Real> {
    Sphere { radius: T },
    Ellipsoid { semi_axes: [T; 3] },
    Custom(Arc<dyn CustomTarget<T>>),
}

impl<T: Real> fmt::Debug for TargetKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::Sphere { radius } => f.debug_struct("Sphere").field("radius", radius).finish(),
            TargetKind::Ellipsoid { semi_axes } => {
                f.debug_struct("Ellipsoid").field("semi_axes", semi_axes).finish()
            }
            TargetKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TargetManifold<T: Real> {
    pub kind: TargetKind<T>,
    pub tol: T,
    pub max_iterations: usize,
}

impl<T: Real> TargetManifold<T> {
    pub fn sphere(radius: T) -> Result<Self> {
        Self::new(TargetKind::Sphere { radius })
    }

    pub fn ellipsoid(a1: T, a2: T, a3: T) -> Result<Self> {
        Self::new(TargetKind::Ellipsoid { semi_axes: [a1, a2, a3] })
    }

    pub fn custom(target: Arc<dyn CustomTarget<T>>) -> Self {
        TargetManifold {
            kind: TargetKind::Custom(target),
            tol: T::tol(DEFAULT_PROJECTION_TOL),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn new(kind: TargetKind<T>) -> Result<Self> {
        let ok = |x: T| x > T::zero() && x.is_finite();
        match &kind {
            TargetKind::Sphere { radius } if !ok(*radius) => {
                return Err(Error::InvalidTarget(format!("sphere radius must be positive, got {radius}")))
            }
            TargetKind::Ellipsoid { semi_axes } if !semi_axes.iter().all(|&a| ok(a)) => {
                return Err(Error::InvalidTarget(format!(
                    "semi-axes must be positive, got {semi_axes:?}"
                )))
            }
            _ => {}
        }
        Ok(TargetManifold { kind, tol: T::tol(DEFAULT_PROJECTION_TOL), max_iterations: DEFAULT_MAX_ITERATIONS })
    }

    /// Half-width of the neighborhood where the projection is unique.
    ///
    /// Ellipsoid: `min(a_min / 2, a_min² / a_max)`, the second term being the
    /// smallest principal radius of curvature.
    pub fn admissible_radius(&self) -> T {
        match &self.kind {
            TargetKind::Sphere { radius } => *radius,
            TargetKind::Ellipsoid { semi_axes } => {
                let (lo, hi) = min_max(semi_axes);
                (lo * T::lit(0.5)).min(lo * lo / hi)
            }
            TargetKind::Custom(c) => c.admissible_radius(),
        }
    }

    /// Nearest-point projection `π_M(y)`.
    pub fn project(&self, y: Vec3<T>) -> Result<Vec3<T>> {
        if !y.is_finite() {
            return Err(Error::NonFinite("projection input".into()));
        }
        match &self.kind {
            TargetKind::Sphere { radius } => {
                let n = y.norm();
                if n <= T::zero() {
                    return Err(Error::OutsideNeighborhood { distance: radius.to_f64_lossy(), radius: radius.to_f64_lossy() });
                }
                Ok(y * (*radius / n))
            }
            TargetKind::Ellipsoid { semi_axes } => {
                let (sigma, _) = self.ellipsoid_project(semi_axes, y)?;
                // outside the (convex) ellipsoid the nearest point is always unique
                let d = (y - sigma).norm();
                let radius = self.admissible_radius();
                if d >= radius && self.level_residual(y) < T::zero() {
                    return Err(Error::OutsideNeighborhood { distance: d.to_f64_lossy(), radius: radius.to_f64_lossy() });
                }
                Ok(sigma)
            }
            TargetKind::Custom(c) => c.project(y),
        }
    }

    /// Solves `Σ a_i² y_i² / (a_i² + t)² = 1` for the multiplier `t > −a_min²`
    /// by safeguarded Newton (bisection when a step leaves the bracket).
    fn ellipsoid_project(&self, a: &[T; 3], y: Vec3<T>) -> Result<(Vec3<T>, T)> {
        let a2 = [a[0] * a[0], a[1] * a[1], a[2] * a[2]];
        let f = |t: T| -> (T, T) {
            let mut val = -T::one();
            let mut der = T::zero();
            for i in 0..3 {
                let q = a2[i] + t;
                let r = a[i] * y[i] / q;
                val += r * r;
                der -= T::lit(2.0) * r * r / q;
            }
            (val, der)
        };
        let (amin, amax) = min_max(a);
        let mut lo = -amin * amin;
        let mut hi = (amax * y.norm()).max(T::zero());
        // F is decreasing on (lo, ∞); F(lo+) must be positive for a root in range.
        let probe = lo + (hi - lo).abs().max(T::one()) * T::epsilon() * T::lit(16.0);
        if f(probe).0 <= T::zero() {
            let radius = self.admissible_radius();
            return Err(Error::OutsideNeighborhood { distance: f64::NAN, radius: radius.to_f64_lossy() });
        }
        if f(hi).0 > T::zero() {
            hi = hi + T::one();
            while f(hi).0 > T::zero() {
                hi = hi * T::lit(2.0);
            }
        }
        let mut t = if f(T::zero()).0 > T::zero() { T::zero() } else { lo * T::lit(0.5) };
        if t <= lo {
            t = (lo + hi) * T::lit(0.5);
        }
        let scale = T::one().max(amax * amax);
        let mut converged = false;
        for _ in 0..self.max_iterations {
            let (val, der) = f(t);
            if val > T::zero() {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            if val.abs() <= self.tol {
                converged = true;
                break;
            }
            let mut next = t - val / der;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = (lo + hi) * T::lit(0.5);
            }
            let step = (next - t).abs();
            t = next;
            if step <= self.tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            // bisection fallback
            for _ in 0..200 {
                t = (lo + hi) * T::lit(0.5);
                let (val, _) = f(t);
                if val > T::zero() {
                    lo = t;
                } else {
                    hi = t;
                }
                if (hi - lo) <= self.tol * scale {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            return Err(Error::ProjectionDiverged(self.max_iterations));
        }
        let sigma = Vec3([a2[0] * y[0] / (a2[0] + t), a2[1] * y[1] / (a2[1] + t), a2[2] * y[2] / (a2[2] + t)]);
        Ok((sigma, t))
    }

    /// Implicit residual; zero exactly on `M` (sphere/ellipsoid).
    pub fn level_residual(&self, y: Vec3<T>) -> T {
        match &self.kind {
            TargetKind::Sphere { radius } => y.norm() - *radius,
            TargetKind::Ellipsoid { semi_axes } => {
                let s: T = (0..3).map(|i| (y[i] / semi_axes[i]).powi(2)).sum();
                s - T::one()
            }
            TargetKind::Custom(c) => match c.project(y) {
                Ok(p) => (p - y).norm(),
                Err(_) => T::infinity(),
            },
        }
    }

    /// Distance-like check that `y` lies on `M` within `tol`.
    pub fn distance_to(&self, y: Vec3<T>) -> T {
        match &self.kind {
            TargetKind::Sphere { radius } => (y.norm() - *radius).abs(),
            _ => self.project(y).map(|p| (p - y).norm()).unwrap_or_else(|_| T::infinity()),
        }
    }

    /// Outward unit normal `n_M(σ)`; `σ` must lie on `M` to `1e-9`.
    pub fn normal(&self, sigma: Vec3<T>) -> Result<Vec3<T>> {
        let res = self.level_residual(sigma).abs();
        if !(res <= T::tol(1e-9)) {
            return Err(Error::NotOnManifold(res.to_f64_lossy()));
        }
        match &self.kind {
            TargetKind::Custom(c) => Ok(c.normal(sigma)),
            _ => Ok(self.normal_extension(sigma)),
        }
    }

    /// Unit-normal field extended off `M` as the normalized gradient of the
    /// implicit function (`y/|y|` for the sphere). Equal to `n_M` on `M`.
    pub fn normal_extension(&self, y: Vec3<T>) -> Vec3<T> {
        match &self.kind {
            TargetKind::Sphere { .. } => y.normalized().unwrap_or_else(Vec3::zero),
            TargetKind::Ellipsoid { semi_axes } => {
                let g = Vec3([
                    y[0] / (semi_axes[0] * semi_axes[0]),
                    y[1] / (semi_axes[1] * semi_axes[1]),
                    y[2] / (semi_axes[2] * semi_axes[2]),
                ]);
                g.normalized().unwrap_or_else(Vec3::zero)
            }
            TargetKind::Custom(c) => c.normal_extension(y),
        }
    }

    /// Jacobian of [`Self::normal_extension`] (`∂ñ_i/∂y_j`).
    pub fn normal_extension_jacobian(&self, y: Vec3<T>) -> Mat3<T> {
        // ñ = g/|g| with g = D y, D diagonal  ⇒  Dñ = (I − ñ⊗ñ) D / |g|
        let d = match &self.kind {
            TargetKind::Sphere { .. } => [T::one(); 3],
            TargetKind::Ellipsoid { semi_axes } => {
                let mut d = [T::zero(); 3];
                for i in 0..3 {
                    d[i] = T::one() / (semi_axes[i] * semi_axes[i]);
                }
                d
            }
            TargetKind::Custom(_) => return self.normal_jacobian_fd(y),
        };
        let g = Vec3([d[0] * y[0], d[1] * y[1], d[2] * y[2]]);
        let gn = g.norm();
        if gn <= T::zero() {
            return Mat3::zero();
        }
        let n = g * (T::one() / gn);
        let p = Mat3::identity() - n.outer(n);
        let mut m = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = p.0[i][j] * d[j] / gn;
            }
        }
        m
    }

    fn normal_jacobian_fd(&self, y: Vec3<T>) -> Mat3<T> {
        let h = T::lit(1e-7);
        let mut cols = [Vec3::zero(); 3];
        for (j, col) in cols.iter_mut().enumerate() {
            let e = Vec3::unit(j) * h;
            *col = (self.normal_extension(y + e) - self.normal_extension(y - e)) * (T::lit(0.5) / h);
        }
        Mat3::from_columns(cols)
    }

    /// Signed distance: positive outside, negative inside.
    pub fn signed_distance(&self, y: Vec3<T>) -> Result<T> {
        match &self.kind {
            TargetKind::Sphere { radius } => {
                if y.norm() <= T::zero() {
                    return Err(Error::OutsideNeighborhood { distance: radius.to_f64_lossy(), radius: radius.to_f64_lossy() });
                }
                Ok(y.norm() - *radius)
            }
            TargetKind::Ellipsoid { .. } => {
                let sigma = self.project(y)?;
                let d = (y - sigma).norm();
                Ok(if self.level_residual(y) < T::zero() { -d } else { d })
            }
            TargetKind::Custom(c) => c.signed_distance(y),
        }
    }

    /// Removes the normal component: `g − (g·n_M) n_M`.
    pub fn tangent_project(&self, sigma: Vec3<T>, g: Vec3<T>) -> Vec3<T> {
        let n = self.normal_extension(sigma);
        g - n * g.dot(n)
    }
}

fn min_max<T: Real>(a: &[T; 3]) -> (T, T) {
    let lo = a[0].min(a[1]).min(a[2]);
    let hi = a[0].max(a[1]).max(a[2]);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    /// Nearest point by a parametric grid search, refined by repeated zooming.
    fn radial(a: [f64; 3], dir: Vec3<f64>) -> Vec3<f64> {
        let q: f64 = (0..3).map(|i| (dir[i] / a[i]).powi(2)).sum();
        dir * (1.0 / q.sqrt())
    }

    fn brute_force_nearest(a: [f64; 3], y: Vec3<f64>) -> Vec3<f64> {
        let point = |th: f64, ph: f64| v(a[0] * th.sin() * ph.cos(), a[1] * th.sin() * ph.sin(), a[2] * th.cos());
        let pi = std::f64::consts::PI;
        let (mut best_t, mut best_p, mut best_d) = (0.0, 0.0, f64::INFINITY);
        let n = 400;
        for i in 0..=n {
            let th = pi * i as f64 / n as f64;
            for j in 0..2 * n {
                let ph = pi * j as f64 / n as f64;
                let d = (point(th, ph) - y).norm_sq();
                if d < best_d {
                    (best_t, best_p, best_d) = (th, ph, d);
                }
            }
        }
        let mut width = pi / n as f64;
        for _ in 0..40 {
            let (ct, cp) = (best_t, best_p);
            for i in -10..=10 {
                for j in -10..=10 {
                    let th = ct + width * i as f64 / 10.0;
                    let ph = cp + width * j as f64 / 10.0;
                    let d = (point(th, ph) - y).norm_sq();
                    if d < best_d {
                        (best_t, best_p, best_d) = (th, ph, d);
                    }
                }
            }
            width *= 0.5;
        }
        point(best_t, best_p)
    }

    #[test]
    fn sphere_examples() {
        let s1 = TargetManifold::sphere(1.0).unwrap();
        assert_eq!(s1.project(v(0.0, 0.0, 2.0)).unwrap(), v(0.0, 0.0, 1.0));
        let s2 = TargetManifold::sphere(2.0).unwrap();
        assert_eq!(s2.project(v(3.0, 0.0, 0.0)).unwrap(), v(2.0, 0.0, 0.0));
        assert_eq!(s1.normal(v(0.0, 0.0, 1.0)).unwrap(), v(0.0, 0.0, 1.0));
        assert!((s1.signed_distance(v(0.0, 0.0, 1.3)).unwrap() - 0.3).abs() < 1e-15);
        assert!((s1.signed_distance(v(0.0, 0.0, 0.6)).unwrap() + 0.4).abs() < 1e-15);
        assert!(s1.project(Vec3::zero()).is_err());
    }

    #[test]
    fn ellipsoid_axis_examples() {
        let e = TargetManifold::ellipsoid(2.0, 1.0, 1.0).unwrap();
        assert!((e.project(v(3.0, 0.0, 0.0)).unwrap() - v(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((e.normal(v(2.0, 0.0, 0.0)).unwrap() - v(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(e.normal(v(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn ellipsoid_projection_matches_brute_force() {
        let a = [2.0, 1.0, 1.0];
        let e = TargetManifold::ellipsoid(a[0], a[1], a[2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..6 {
            let dir = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let on = radial(a, dir);
            let y = on + e.normal(on).unwrap() * rng.random_range(-0.3..0.3);
            let p = e.project(y).unwrap();
            let oracle = brute_force_nearest(a, y);
            assert!((p - oracle).norm() < 1e-6, "{p:?} vs {oracle:?}");
            let sd = e.signed_distance(y).unwrap();
            assert!((sd.abs() - (y - oracle).norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn ellipsoid_normal_matches_distance_gradient() {
        let e = TargetManifold::ellipsoid(2.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..20 {
            let dir = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let sigma = radial([2.0, 1.0, 1.0], dir);
            let mut g = Vec3::zero();
            for j in 0..3 {
                let d = Vec3::unit(j) * h;
                g[j] = (e.signed_distance(sigma + d).unwrap() - e.signed_distance(sigma - d).unwrap()) / (2.0 * h);
            }
            let g = g.normalized().unwrap();
            assert!((g - e.normal(sigma).unwrap()).norm() < 1e-6);
        }
    }

    #[test]
    fn projection_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets = [TargetManifold::sphere(1.5).unwrap(), TargetManifold::ellipsoid(2.0, 1.0, 1.5).unwrap()];
        for m in &targets {
            let radius = m.admissible_radius();
            for _ in 0..1000 {
                let dir = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let Some(dir) = dir.normalized() else { continue };
                let base = m.project(dir * 2.0).unwrap();
                let n = m.normal(base).unwrap();
                let t = rng.random_range(-0.95..0.95) * radius;
                let y = base + n * t;
                let p = m.project(y).unwrap();
                let np = m.normal(p).unwrap();
                assert!((y - p).cross(np).norm() <= 1e-9);
                assert!((m.project(p).unwrap() - p).norm() <= 1e-12);
                assert!((m.signed_distance(y).unwrap() - t).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn sphere_closed_form_agrees_with_newton_path() {
        let s = TargetManifold::sphere(1.3).unwrap();
        let e = TargetManifold::ellipsoid(1.3, 1.3, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let y = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let y = y.normalized().unwrap() * rng.random_range(0.8..1.8);
            assert!((s.project(y).unwrap() - e.project(y).unwrap()).norm() < 1e-12);
            assert!((s.signed_distance(y).unwrap() - e.signed_distance(y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_projection_examples() {
        let e = TargetManifold::ellipsoid(2.0, 1.0, 1.5).unwrap();
        let sigma = e.project(v(1.0, 1.0, 1.0)).unwrap();
        let n = e.normal(sigma).unwrap();
        assert!(e.tangent_project(sigma, n).norm() < 1e-15);
        let g = v(0.3, -2.0, 0.7);
        let t = e.tangent_project(sigma, g);
        assert!(t.dot(n).abs() < 1e-12);
        assert!((e.tangent_project(sigma, t) - t).norm() < 1e-15);
        assert!((t.norm_sq() - (g.norm_sq() - g.dot(n).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn normal_extension_jacobian_matches_fd() {
        let e = TargetManifold::ellipsoid(2.0, 1.0, 1.5).unwrap();
        let y = v(0.7, -0.4, 1.1);
        let jac = e.normal_extension_jacobian(y);
        let h = 1e-6;
        for j in 0..3 {
            let d = Vec3::unit(j) * h;
            let col = (e.normal_extension(y + d) - e.normal_extension(y - d)) * (0.5 / h);
            assert!((col - jac.column(j)).norm() < 1e-8);
        }
    }

    #[test]
    fn invalid_targets_rejected() {
        assert!(TargetManifold::sphere(0.0).is_err());
        assert!(TargetManifold::ellipsoid(1.0, -1.0, 1.0).is_err());
    }
}
