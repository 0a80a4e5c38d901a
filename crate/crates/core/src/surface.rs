//! Parametric base surfaces with principal frames, the tubular map and metric factors.
//!
//! Every chart in the catalogue has orthogonal coordinate lines aligned with the
//! principal directions, so the chart partials normalized give the principal frame
//! directly. The normal is outward and curvatures follow `∂_{τ_i} n = κ_i τ_i`
//! (the unit sphere has `κ_1 = κ_2 = 1`).

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::real::Real;
use crate::stencil::DiffStencil;

/// Thickness bound used when the surface is flat.
pub const DEFAULT_EPS_CAP: f64 = 1.0;

/// Default polar cap excluded from the latitude-longitude sphere chart.
pub const DEFAULT_THETA_CAP: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind<T> {
    /// `u` = colatitude in `[θ_cap, π − θ_cap]`, `v` = longitude (periodic).
    SphereLatLong { radius: T, theta_cap: T },
    /// `u` = toroidal angle, `v` = poloidal angle; both periodic.
    Torus { major: T, minor: T },
    /// `u` = angle (periodic), `v` = height in `[0, height]`.
    Cylinder { radius: T, height: T },
    /// `u ∈ [0, lx]`, `v ∈ [0, ly]` in the plane `z = 0`.
    FlatPatch { lx: T, ly: T, periodic_u: bool, periodic_v: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricSurface<T> {
    pub kind: SurfaceKind<T>,
    pub n_u: usize,
    pub n_v: usize,
}

/// Analytic chart data at a single parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint<T> {
    pub point: Vec3<T>,
    pub tau1: Vec3<T>,
    pub tau2: Vec3<T>,
    pub normal: Vec3<T>,
    pub kappa1: T,
    pub kappa2: T,
    /// `(|∂_u x|, |∂_v x|)`.
    pub stretch: [T; 2],
}

/// Base-surface data at one grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFrame<T> {
    pub u: T,
    pub v: T,
    pub xi: Vec3<T>,
    pub tau1: Vec3<T>,
    pub tau2: Vec3<T>,
    pub normal: Vec3<T>,
    pub kappa1: T,
    pub kappa2: T,
    pub area_weight: T,
    pub chart_metric: [T; 2],
}

impl<T: Real> SurfaceFrame<T> {
    pub fn mean_curvature(&self) -> T {
        (self.kappa1 + self.kappa2) * T::lit(0.5)
    }

    pub fn gaussian_curvature(&self) -> T {
        self.kappa1 * self.kappa2
    }

    #[inline]
    pub fn tau(&self, i: usize) -> Vec3<T> {
        if i == 0 {
            self.tau1
        } else {
            self.tau2
        }
    }

    #[inline]
    pub fn kappa(&self, i: usize) -> T {
        if i == 0 {
            self.kappa1
        } else {
            self.kappa2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessBudget<T> {
    pub kappa_max: T,
    pub eps_max: T,
    pub c_n: T,
}

impl<T: Real> ThicknessBudget<T> {
    /// `eps_max = 1/(2 κ_max)` (or `default_cap` when flat). With `ε κ_max ≤ 1/2`
    /// each `1 + εsκ_i` lies in `[1/2, 3/2]`, so the volume factor is in
    /// `[1/4, 9/4]` and the tangent coefficients in `[2/3, 2]`; `c_N = 4` bounds both.
    pub fn from_kappa_max(kappa_max: T, default_cap: T) -> Self {
        let eps_max = if kappa_max > T::zero() {
            T::one() / (T::lit(2.0) * kappa_max)
        } else {
            default_cap
        };
        ThicknessBudget { kappa_max, eps_max, c_n: T::lit(4.0) }
    }

    pub fn check(&self, eps: T) -> Result<()> {
        if eps > T::zero() && eps <= self.eps_max * (T::one() + T::epsilon() * T::lit(4.0)) {
            Ok(())
        } else {
            Err(Error::ThicknessOutOfBudget { eps: eps.to_f64_lossy(), eps_max: self.eps_max.to_f64_lossy() })
        }
    }
}

/// `√g_ε = (1 + εsκ_1)(1 + εsκ_2)`.
#[inline]
pub fn metric_volume_factor<T: Real>(kappa1: T, kappa2: T, eps: T, s: T) -> T {
    (T::one() + eps * s * kappa1) * (T::one() + eps * s * kappa2)
}

/// `h_{i,ε} = 1/(1 + εsκ_i)`.
#[inline]
pub fn metric_tangent_coeff<T: Real>(kappa: T, eps: T, s: T) -> T {
    T::one() / (T::one() + eps * s * kappa)
}

/// One coordinate axis of the chart grid.
#[derive(Debug, Clone)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub spacing: T,
    pub periodic: bool,
    pub stencil: DiffStencil<T>,
}

impl<T: Real> Axis<T> {
    fn new(lo: T, hi: T, n: usize, periodic: bool) -> Self {
        let spacing = (hi - lo) / T::from_usize_lossy(n);
        Axis { lo, hi, spacing, periodic, stencil: DiffStencil::new(n, spacing, periodic) }
    }

    /// Periodic axes put nodes at `lo + i h`; bounded axes at cell centers.
    pub fn coord(&self, i: usize) -> T {
        let offset = if self.periodic { T::zero() } else { T::lit(0.5) };
        self.lo + (T::from_usize_lossy(i) + offset) * self.spacing
    }

    pub fn len(&self) -> usize {
        self.stencil.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencil.is_empty()
    }
}

impl<T: Real> ParametricSurface<T> {
    pub fn new(kind: SurfaceKind<T>, n_u: usize, n_v: usize) -> Self {
        ParametricSurface { kind, n_u, n_v }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u < 4 || self.n_v < 4 {
            return Err(Error::InvalidSurface(format!(
                "resolution {}x{} too small (need at least 4x4)",
                self.n_u, self.n_v
            )));
        }
        let pos = |x: T, what: &str| -> Result<()> {
            if x > T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSurface(format!("{what} must be positive, got {x}")))
            }
        };
        match self.kind {
            SurfaceKind::SphereLatLong { radius, theta_cap } => {
                pos(radius, "sphere radius")?;
                pos(theta_cap, "polar cap")?;
                if theta_cap >= T::FRAC_PI_2() {
                    return Err(Error::InvalidSurface("polar cap must be below pi/2".into()));
                }
            }
            SurfaceKind::Torus { major, minor } => {
                pos(major, "torus major radius")?;
                pos(minor, "torus minor radius")?;
                if minor >= major {
                    return Err(Error::InvalidSurface(format!(
                        "degenerate torus: minor radius {minor} >= major radius {major}"
                    )));
                }
            }
            SurfaceKind::Cylinder { radius, height } => {
                pos(radius, "cylinder radius")?;
                pos(height, "cylinder height")?;
            }
            SurfaceKind::FlatPatch { lx, ly, .. } => {
                pos(lx, "patch length lx")?;
                pos(ly, "patch length ly")?;
            }
        }
        Ok(())
    }

    pub fn periodic(&self) -> [bool; 2] {
        match self.kind {
            SurfaceKind::SphereLatLong { .. } => [false, true],
            SurfaceKind::Torus { .. } => [true, true],
            SurfaceKind::Cylinder { .. } => [true, false],
            SurfaceKind::FlatPatch { periodic_u, periodic_v, .. } => [periodic_u, periodic_v],
        }
    }

    pub fn chart_bounds(&self) -> [(T, T); 2] {
        let two_pi = T::TAU();
        match self.kind {
            SurfaceKind::SphereLatLong { theta_cap, .. } => {
                [(theta_cap, T::PI() - theta_cap), (T::zero(), two_pi)]
            }
            SurfaceKind::Torus { .. } => [(T::zero(), two_pi), (T::zero(), two_pi)],
            SurfaceKind::Cylinder { height, .. } => [(T::zero(), two_pi), (T::zero(), height)],
            SurfaceKind::FlatPatch { lx, ly, .. } => [(T::zero(), lx), (T::zero(), ly)],
        }
    }

    /// Closed-form chart evaluation at `(u, v)`.
    pub fn eval(&self, u: T, v: T) -> ChartPoint<T> {
        let z = T::zero();
        let one = T::one();
        match self.kind {
            SurfaceKind::SphereLatLong { radius: r, .. } => {
                let (st, ct) = u.sin_cos();
                let (sp, cp) = v.sin_cos();
                let normal = Vec3::new(st * cp, st * sp, ct);
                ChartPoint {
                    point: normal * r,
                    tau1: Vec3::new(ct * cp, ct * sp, -st),
                    tau2: Vec3::new(-sp, cp, z),
                    normal,
                    kappa1: one / r,
                    kappa2: one / r,
                    stretch: [r, r * st],
                }
            }
            SurfaceKind::Torus { major: a, minor: b } => {
                let (su, cu) = u.sin_cos();
                let (sv, cv) = v.sin_cos();
                let rho = a + b * cv;
                ChartPoint {
                    point: Vec3::new(rho * cu, rho * su, b * sv),
                    tau1: Vec3::new(-su, cu, z),
                    tau2: Vec3::new(-sv * cu, -sv * su, cv),
                    normal: Vec3::new(cv * cu, cv * su, sv),
                    kappa1: cv / rho,
                    kappa2: one / b,
                    stretch: [rho, b],
                }
            }
            SurfaceKind::Cylinder { radius: r, .. } => {
                let (su, cu) = u.sin_cos();
                ChartPoint {
                    point: Vec3::new(r * cu, r * su, v),
                    tau1: Vec3::new(-su, cu, z),
                    tau2: Vec3::new(z, z, one),
                    normal: Vec3::new(cu, su, z),
                    kappa1: one / r,
                    kappa2: z,
                    stretch: [r, one],
                }
            }
            SurfaceKind::FlatPatch { .. } => ChartPoint {
                point: Vec3::new(u, v, z),
                tau1: Vec3::unit(0),
                tau2: Vec3::unit(1),
                normal: Vec3::unit(2),
                kappa1: z,
                kappa2: z,
                stretch: [one, one],
            },
        }
    }

    /// Builds the frame grid; see [`SurfaceGrid`].
    pub fn build(&self) -> Result<SurfaceGrid<T>> {
        SurfaceGrid::build(*self)
    }
}

/// Immutable grid of surface frames plus the differencing axes.
#[derive(Debug, Clone)]
pub struct SurfaceGrid<T> {
    pub spec: ParametricSurface<T>,
    pub frames: Vec<SurfaceFrame<T>>,
    pub budget: ThicknessBudget<T>,
    pub axes: [Axis<T>; 2],
}

impl<T: Real> SurfaceGrid<T> {
    pub fn build(spec: ParametricSurface<T>) -> Result<Self> {
        Self::build_with_cap(spec, T::lit(DEFAULT_EPS_CAP))
    }

    pub fn build_with_cap(spec: ParametricSurface<T>, default_eps_cap: T) -> Result<Self> {
        spec.validate()?;
        let [(u0, u1), (v0, v1)] = spec.chart_bounds();
        let [pu, pv] = spec.periodic();
        let axes = [Axis::new(u0, u1, spec.n_u, pu), Axis::new(v0, v1, spec.n_v, pv)];
        let cell = axes[0].spacing * axes[1].spacing;
        let mut frames = Vec::with_capacity(spec.n_u * spec.n_v);
        let mut kappa_max = T::zero();
        for iu in 0..spec.n_u {
            let u = axes[0].coord(iu);
            for iv in 0..spec.n_v {
                let v = axes[1].coord(iv);
                let c = spec.eval(u, v);
                kappa_max = kappa_max.max(c.kappa1.abs()).max(c.kappa2.abs());
                frames.push(SurfaceFrame {
                    u,
                    v,
                    xi: c.point,
                    tau1: c.tau1,
                    tau2: c.tau2,
                    normal: c.normal,
                    kappa1: c.kappa1,
                    kappa2: c.kappa2,
                    area_weight: cell * c.stretch[0] * c.stretch[1],
                    chart_metric: c.stretch,
                });
            }
        }
        let budget = ThicknessBudget::from_kappa_max(kappa_max, default_eps_cap);
        Ok(SurfaceGrid { spec, frames, budget, axes })
    }

    pub fn n_nodes(&self) -> usize {
        self.frames.len()
    }

    pub fn n_u(&self) -> usize {
        self.spec.n_u
    }

    pub fn n_v(&self) -> usize {
        self.spec.n_v
    }

    #[inline]
    pub fn index(&self, iu: usize, iv: usize) -> usize {
        iu * self.spec.n_v + iv
    }

    pub fn total_area(&self) -> T {
        self.frames.iter().map(|f| f.area_weight).sum()
    }

    /// Neighbours of node `k` along chart direction `dir` with raw stencil
    /// coefficients (per chart unit, not yet divided by the stretch).
    #[inline]
    pub fn stencil_row(&self, k: usize, dir: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let n_v = self.spec.n_v;
        let (iu, iv) = (k / n_v, k % n_v);
        let (i, other) = if dir == 0 { (iu, iv) } else { (iv, iu) };
        self.axes[dir].stencil.row(i).map(move |(j, c)| {
            let idx = if dir == 0 { j * n_v + other } else { other * n_v + j };
            (idx, c)
        })
    }

    /// Transposed stencil: rows `k` (with coefficients) that read node `j` along `dir`.
    #[inline]
    pub fn stencil_column(&self, j: usize, dir: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let n_v = self.spec.n_v;
        let (ju, jv) = (j / n_v, j % n_v);
        let (jj, other) = if dir == 0 { (ju, jv) } else { (jv, ju) };
        self.axes[dir].stencil.column(jj).iter().map(move |&(i, c)| {
            let idx = if dir == 0 { i * n_v + other } else { other * n_v + i };
            (idx, c)
        })
    }

    /// `∂_{τ_dir} f` at every node for a field sampled on this grid.
    pub fn tangential_derivative(&self, values: &[Vec3<T>], dir: usize) -> Result<Vec<Vec3<T>>> {
        if values.len() != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                self.n_nodes()
            )));
        }
        if dir > 1 {
            return Err(Error::GridMismatch(format!("direction index {dir} out of range")));
        }
        Ok((0..self.n_nodes()).map(|k| self.derivative_at(values, k, dir)).collect())
    }

    /// Same as [`Self::tangential_derivative`] for a scalar field.
    pub fn tangential_derivative_scalar(&self, values: &[T], dir: usize) -> Result<Vec<T>> {
        if values.len() != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                self.n_nodes()
            )));
        }
        Ok((0..self.n_nodes())
            .map(|k| {
                let raw: T = self.stencil_row(k, dir).map(|(j, c)| c * (values[j] - values[k])).sum();
                raw / self.frames[k].chart_metric[dir]
            })
            .collect())
    }

    #[inline]
    pub(crate) fn derivative_at(&self, values: &[Vec3<T>], k: usize, dir: usize) -> Vec3<T> {
        // difference form: constant fields differentiate to exactly zero
        let base = values[k];
        let mut acc = Vec3::zero();
        for (j, c) in self.stencil_row(k, dir) {
            acc += (values[j] - base) * c;
        }
        acc * (T::one() / self.frames[k].chart_metric[dir])
    }

    /// `ψ_ε(ξ, s) = ξ + εs n_N(ξ)` at node `k`, with the budget check.
    pub fn tubular_point(&self, k: usize, eps: T, s: T) -> Result<Vec3<T>> {
        tubular_point(&self.frames[k], &self.budget, eps, s)
    }
}

/// `ψ_ε(ξ, s) = ξ + εs n_N(ξ)`.
pub fn tubular_point<T: Real>(
    frame: &SurfaceFrame<T>,
    budget: &ThicknessBudget<T>,
    eps: T,
    s: T,
) -> Result<Vec3<T>> {
    budget.check(eps)?;
    if !(s.abs() <= T::one()) {
        return Err(Error::InvalidOptions(format!("layer coordinate s = {s} outside [-1, 1]")));
    }
    Ok(frame.xi + frame.normal * (eps * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(n: usize) -> SurfaceGrid<f64> {
        ParametricSurface::new(SurfaceKind::SphereLatLong { radius: 1.0, theta_cap: 0.15 }, n, n)
            .build()
            .unwrap()
    }

    fn torus(n: usize) -> SurfaceGrid<f64> {
        ParametricSurface::new(SurfaceKind::Torus { major: 2.0, minor: 0.5 }, n, n).build().unwrap()
    }

    fn all_kinds(n: usize) -> Vec<SurfaceGrid<f64>> {
        vec![
            sphere(n),
            torus(n),
            ParametricSurface::new(SurfaceKind::Cylinder { radius: 0.7, height: 2.0 }, n, n)
                .build()
                .unwrap(),
            ParametricSurface::new(
                SurfaceKind::FlatPatch { lx: 1.0, ly: 2.0, periodic_u: false, periodic_v: true },
                n,
                n,
            )
            .build()
            .unwrap(),
        ]
    }

    #[test]
    fn flat_patch_area_is_exact() {
        let g = ParametricSurface::new(
            SurfaceKind::FlatPatch { lx: 1.0, ly: 1.0, periodic_u: false, periodic_v: false },
            16,
            16,
        )
        .build()
        .unwrap();
        assert_eq!(g.total_area(), 1.0);
        assert!(g.frames.iter().all(|f| f.kappa1 == 0.0 && f.kappa2 == 0.0));
        assert_eq!(g.budget.eps_max, 1.0);
    }

    #[test]
    fn sphere_band_area_matches_zone_formula() {
        let g = sphere(64);
        let exact = 4.0 * std::f64::consts::PI * 0.15f64.cos();
        assert!((g.total_area() - exact).abs() / exact < 1e-3);
        assert!(g.frames.iter().all(|f| f.kappa1 == 1.0 && f.kappa2 == 1.0));
        assert_eq!(g.budget.eps_max, 0.5);
    }

    #[test]
    fn frames_are_orthonormal_right_handed() {
        for g in all_kinds(12) {
            for f in &g.frames {
                let (t1, t2, n) = (f.tau1, f.tau2, f.normal);
                for (a, b, want) in [
                    (t1, t1, 1.0),
                    (t2, t2, 1.0),
                    (n, n, 1.0),
                    (t1, t2, 0.0),
                    (t1, n, 0.0),
                    (t2, n, 0.0),
                ] {
                    assert!((a.dot(b) - want).abs() < 1e-12);
                }
                assert!((t1.cross(t2) - n).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn torus_curvatures_match_shape_operator_fd() {
        let g = torus(64);
        let spec = g.spec;
        let h = 1e-5;
        for f in &g.frames {
            assert_eq!(f.kappa2, 2.0);
            let expected = f.v.cos() / (2.0 + 0.5 * f.v.cos());
            assert!((f.kappa1 - expected).abs() < 1e-14);
            // ∂_{τ_1} n by central differences on the chart
            let dn_u = (spec.eval(f.u + h, f.v).normal - spec.eval(f.u - h, f.v).normal)
                * (0.5 / h / f.chart_metric[0]);
            let dn_v = (spec.eval(f.u, f.v + h).normal - spec.eval(f.u, f.v - h).normal)
                * (0.5 / h / f.chart_metric[1]);
            assert!((dn_u - f.tau1 * f.kappa1).norm() < 1e-6);
            assert!((dn_v - f.tau2 * f.kappa2).norm() < 1e-6);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            ParametricSurface::new(SurfaceKind::Torus { major: 1.0, minor: 1.0 }, 8, 8),
            ParametricSurface::new(SurfaceKind::SphereLatLong { radius: 0.0, theta_cap: 0.1 }, 8, 8),
            ParametricSurface::new(SurfaceKind::Cylinder { radius: 1.0, height: 1.0 }, 3, 8),
        ];
        for spec in bad {
            assert!(matches!(spec.build(), Err(Error::InvalidSurface(_))));
        }
    }

    #[test]
    fn tubular_point_examples() {
        let flat = ParametricSurface::new(
            SurfaceKind::FlatPatch { lx: 1.0, ly: 1.0, periodic_u: false, periodic_v: false },
            8,
            8,
        )
        .build()
        .unwrap();
        let f = &flat.frames[10];
        let p = flat.tubular_point(10, 0.1, 0.5).unwrap();
        assert_eq!(p, Vec3::new(f.xi.x(), f.xi.y(), 0.05));

        let sph = sphere(16);
        for k in [0, 37, 200] {
            let p = sph.tubular_point(k, 0.1, 1.0).unwrap();
            assert!((p.norm() - 1.1).abs() < 1e-14);
            assert_eq!(sph.tubular_point(k, 0.1, 0.0).unwrap(), sph.frames[k].xi);
        }
        assert!(matches!(sph.tubular_point(0, 0.6, 1.0), Err(Error::ThicknessOutOfBudget { .. })));
    }

    #[test]
    fn metric_factor_examples() {
        assert_eq!(metric_volume_factor(0.0, 0.0, 0.3, -0.7), 1.0);
        assert!((metric_volume_factor(1.0_f64, 1.0, 0.1, 1.0) - 1.21).abs() < 1e-15);
        assert_eq!(metric_tangent_coeff(0.0, 0.4, 0.9), 1.0);
        assert!((metric_tangent_coeff(2.0_f64, 0.1, -1.0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn volume_factor_mean_gaussian_form() {
        for g in all_kinds(8) {
            for f in &g.frames {
                for (eps, s) in [(0.05, 0.3), (0.1, -1.0), (0.02, 0.9)] {
                    let es: f64 = eps * s;
                    let hg = (1.0 + 2.0 * es * f.mean_curvature() + es * es * f.gaussian_curvature()).abs();
                    assert!((metric_volume_factor(f.kappa1, f.kappa2, eps, s) - hg).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn thickness_budget_guarantee() {
        for g in all_kinds(16) {
            let b = g.budget;
            let eps = b.eps_max;
            for f in &g.frames {
                for s in [-1.0, 1.0] {
                    let vol = metric_volume_factor(f.kappa1, f.kappa2, eps, s);
                    assert!(vol >= 1.0 / b.c_n && vol <= b.c_n, "vol {vol}");
                    for i in 0..2 {
                        let h = metric_tangent_coeff(f.kappa(i), eps, s);
                        assert!(h >= 1.0 / b.c_n && h <= b.c_n, "h {h}");
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_of_identity_map() {
        let flat = ParametricSurface::new(
            SurfaceKind::FlatPatch { lx: 1.0, ly: 1.0, periodic_u: false, periodic_v: false },
            10,
            10,
        )
        .build()
        .unwrap();
        let x: Vec<_> = flat.frames.iter().map(|f| f.xi).collect();
        let d1 = flat.tangential_derivative(&x, 0).unwrap();
        assert!(d1.iter().all(|d| (*d - Vec3::unit(0)).norm() < 1e-13));

        let identity_error = |g: &SurfaceGrid<f64>, dir: usize| {
            let x: Vec<_> = g.frames.iter().map(|f| f.xi).collect();
            let d = g.tangential_derivative(&x, dir).unwrap();
            d.iter().zip(&g.frames).map(|(d, f)| (*d - f.tau(dir)).norm()).fold(0.0, f64::max)
        };
        let sph = sphere(64);
        assert!(identity_error(&sph, 0) < 1e-3);
        // periodic central differences of cos/sin lose exactly 1 - sin(h)/h
        let h = sph.axes[1].spacing;
        assert!((identity_error(&sph, 1) - (1.0 - h.sin() / h)).abs() < 1e-12);
        let fine = sphere(128);
        for dir in 0..2 {
            let err = identity_error(&fine, dir);
            assert!(err < 1e-3, "dir {dir}: {err}");
            let order = (identity_error(&sph, dir) / err).log2();
            assert!(order > 1.9, "dir {dir}: order {order}");
        }

        let c = vec![Vec3::new(0.3, 0.1, -2.0); sph.n_nodes()];
        assert!(sph.tangential_derivative(&c, 1).unwrap().iter().all(|d| d.norm() < 1e-12));
        assert!(sph.tangential_derivative(&c[1..], 0).is_err());
    }

    fn shape_operator_error(g: &SurfaceGrid<f64>) -> f64 {
        let n: Vec<_> = g.frames.iter().map(|f| f.normal).collect();
        let mut err: f64 = 0.0;
        for dir in 0..2 {
            let d = g.tangential_derivative(&n, dir).unwrap();
            for (dk, f) in d.iter().zip(&g.frames) {
                err = err.max((*dk - f.tau(dir) * f.kappa(dir)).norm());
            }
        }
        err
    }

    #[test]
    fn shape_operator_consistency_second_order() {
        for make in [sphere as fn(usize) -> SurfaceGrid<f64>, torus] {
            let e1 = shape_operator_error(&make(32));
            let e2 = shape_operator_error(&make(64));
            let order = (e1 / e2).log2();
            assert!(order >= 1.9, "observed order {order}");
        }
    }

    #[test]
    fn spherical_shell_volume() {
        let (r, eps, cap) = (1.0f64, 0.1, 0.15f64);
        let g = sphere(64);
        let n_s = 9;
        let ds = 2.0 / (n_s - 1) as f64;
        let mut vol = 0.0;
        for f in &g.frames {
            for l in 0..n_s {
                let s = -1.0 + l as f64 * ds;
                let w = if l == 0 || l == n_s - 1 { 0.5 * ds } else { ds };
                vol += f.area_weight * w * eps * metric_volume_factor(f.kappa1, f.kappa2, eps, s);
            }
        }
        let exact = ((r + eps).powi(3) - (r - eps).powi(3)) / 3.0 * 4.0 * std::f64::consts::PI * cap.cos();
        assert!((vol - exact).abs() / exact < 1e-3);
    }
}
