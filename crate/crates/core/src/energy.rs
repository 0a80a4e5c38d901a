//! Discrete chiral energies on the reference cylinder `N × (−1, 1)` and on `N`.
//!
//! * thin film (pull-back):
//!   `½ ∫ Σ_i |a h_i ∂_{τ_i} u + K(u) τ_i|² √g + ½ ∫ |a ε⁻¹ ∂_s u + K(u) n_N|² √g`
//! * limit: `Σ_i ∫ |a ∂_{τ_i} u + K(u) τ_i|² + ∫ ((K(u) n_N · n_M) / (n_M · n_M))²`
//!
//! with `a ≡ 1` unless an elliptic tensor is supplied (for `A = aI` the
//! `A⁻¹` factors of the anisotropy ratio cancel to the form above).
//! Surface integrals use the per-node area weights, `s`-integrals the
//! trapezoid rule on uniform layers. Gradients are exact for the discrete
//! energies: the transposed difference stencils are applied by a pull pass so
//! the result does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DirectorField, Layers, Layout};
use crate::linalg::Vec3;
use crate::perturbation::{BoundPerturbation, BoundTensor};
use crate::real::Real;
use crate::surface::{metric_tangent_coeff, metric_volume_factor, SurfaceGrid};
use crate::target::TargetManifold;

const MIN_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown<T> {
    pub tangential: T,
    /// Thin film: the `∂_s` integral. Limit: the shape-anisotropy integral.
    pub normal_or_anisotropy: T,
    pub total: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn new(tangential: T, normal_or_anisotropy: T) -> Self {
        EnergyBreakdown { tangential, normal_or_anisotropy, total: tangential + normal_or_anisotropy }
    }

    pub fn to_f64(self) -> EnergyBreakdown<f64> {
        EnergyBreakdown {
            tangential: self.tangential.to_f64_lossy(),
            normal_or_anisotropy: self.normal_or_anisotropy.to_f64_lossy(),
            total: self.total.to_f64_lossy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyForm<T> {
    Limit,
    Thin { eps: T },
}

/// An assembled energy functional over director fields.
#[derive(Clone)]
pub struct Energy<'a, T: Real> {
    pub grid: &'a SurfaceGrid<T>,
    pub target: &'a TargetManifold<T>,
    pub perturbation: &'a BoundPerturbation<T>,
    pub tensor: Option<&'a BoundTensor<T>>,
    pub form: EnergyForm<T>,
}

/// Per-node residual data gathered in the first assembly pass.
#[derive(Clone, Copy, Default)]
struct NodeTerms<T> {
    tangential: T,
    normal: T,
    /// Adjoint seeds for the two tangential stencils and the `s` stencil.
    seed: [Vec3<T>; 3],
    local: Vec3<T>,
}

impl<'a, T: Real> Energy<'a, T> {
    pub fn limit(grid: &'a SurfaceGrid<T>, target: &'a TargetManifold<T>, perturbation: &'a BoundPerturbation<T>) -> Self {
        Energy { grid, target, perturbation, tensor: None, form: EnergyForm::Limit }
    }

    pub fn limit_general(
        grid: &'a SurfaceGrid<T>,
        target: &'a TargetManifold<T>,
        perturbation: &'a BoundPerturbation<T>,
        tensor: &'a BoundTensor<T>,
    ) -> Self {
        Energy { grid, target, perturbation, tensor: Some(tensor), form: EnergyForm::Limit }
    }

    pub fn thin(
        grid: &'a SurfaceGrid<T>,
        target: &'a TargetManifold<T>,
        perturbation: &'a BoundPerturbation<T>,
        eps: T,
        tensor: Option<&'a BoundTensor<T>>,
    ) -> Self {
        Energy { grid, target, perturbation, tensor, form: EnergyForm::Thin { eps } }
    }

    fn validate(&self, field: &DirectorField<T>) -> Result<()> {
        field.check_grid(self.grid)?;
        if self.perturbation.n_nodes() != self.grid.n_nodes() {
            return Err(Error::GridMismatch("perturbation bound to a different grid".into()));
        }
        if let Some(t) = self.tensor {
            if t.values.len() != self.grid.n_nodes() {
                return Err(Error::GridMismatch("tensor bound to a different grid".into()));
            }
        }
        match (self.form, field.layout) {
            (EnergyForm::Limit, Layout::Surface) => Ok(()),
            (EnergyForm::Thin { eps }, Layout::Thin { .. }) => self.grid.budget.check(eps),
            (EnergyForm::Limit, _) => Err(Error::GridMismatch("limit energy needs a surface field".into())),
            (EnergyForm::Thin { .. }, _) => Err(Error::GridMismatch("thin-film energy needs a thin field".into())),
        }
    }

    pub fn evaluate(&self, field: &DirectorField<T>) -> Result<EnergyBreakdown<T>> {
        self.validate(field)?;
        Ok(self.assemble(field, false, false)?.0)
    }

    /// Euclidean gradient of the discrete energy with respect to every stored value.
    pub fn gradient(&self, field: &DirectorField<T>) -> Result<Vec<Vec3<T>>> {
        self.validate(field)?;
        Ok(self.assemble(field, true, false)?.1.expect("gradient requested"))
    }

    pub fn evaluate_with_gradient(&self, field: &DirectorField<T>) -> Result<(EnergyBreakdown<T>, Vec<Vec3<T>>)> {
        self.validate(field)?;
        let (e, g) = self.assemble(field, true, false)?;
        Ok((e, g.expect("gradient requested")))
    }

    /// Gradient of the `K = 0` part of this energy at `z`. That part is
    /// quadratic, so this is its (constant) Hessian applied to `z`; values
    /// need not lie on `M`.
    pub fn dirichlet_apply(&self, layout: Layout, z: &[Vec3<T>]) -> Result<Vec<Vec3<T>>> {
        let field = DirectorField { layout, n_nodes: self.grid.n_nodes(), values: z.to_vec() };
        self.validate(&field)?;
        Ok(self.assemble(&field, true, true)?.1.expect("gradient requested"))
    }

    /// Diagonal blocks of the `K = 0` Hessian: for every surface node the dense
    /// `n_s × n_s` block coupling its layers (row-major, `n_s = 1` for the limit
    /// energy). Tangential couplings contribute only their diagonal.
    pub fn dirichlet_blocks(&self, layout: Layout) -> Result<Vec<T>> {
        let n = self.grid.n_nodes();
        let two = T::lit(2.0);
        match (self.form, layout) {
            (EnergyForm::Limit, Layout::Surface) => Ok((0..n)
                .map(|k| {
                    let mut d = T::zero();
                    for dir in 0..2 {
                        for (kp, c) in self.grid.stencil_column(k, dir) {
                            let f = &self.grid.frames[kp];
                            let q = self.a(kp) * c / f.chart_metric[dir];
                            d += two * f.area_weight * q * q;
                        }
                    }
                    d
                })
                .collect()),
            (EnergyForm::Thin { eps }, Layout::Thin { n_s }) => {
                self.grid.budget.check(eps)?;
                let layers = Layers::<T>::new(n_s)?;
                let weight = |k: usize, l: usize| {
                    let f = &self.grid.frames[k];
                    T::lit(0.5) * layers.weights[l] * f.area_weight * metric_volume_factor(f.kappa1, f.kappa2, eps, layers.s[l])
                };
                let mut blocks = vec![T::zero(); n * n_s * n_s];
                for k in 0..n {
                    let block = &mut blocks[k * n_s * n_s..(k + 1) * n_s * n_s];
                    let q = self.a(k) / eps;
                    // 2 q² Σ_m W_m (D_s)_{m i} (D_s)_{m j}
                    for m in 0..n_s {
                        let wm = two * q * q * weight(k, m);
                        let row: Vec<(usize, T)> = layers.stencil.row(m).collect();
                        for &(i, ci) in &row {
                            for &(j, cj) in &row {
                                block[i * n_s + j] += wm * ci * cj;
                            }
                        }
                    }
                    for l in 0..n_s {
                        let mut d = T::zero();
                        for dir in 0..2 {
                            for (kp, c) in self.grid.stencil_column(k, dir) {
                                let f = &self.grid.frames[kp];
                                let h = metric_tangent_coeff(f.kappa(dir), eps, layers.s[l]);
                                let q = self.a(kp) * h * c / f.chart_metric[dir];
                                d += two * weight(kp, l) * q * q;
                            }
                        }
                        block[l * n_s + l] += d;
                    }
                }
                Ok(blocks)
            }
            _ => Err(Error::GridMismatch("layout does not match the energy form".into())),
        }
    }

    #[inline]
    fn a(&self, k: usize) -> T {
        self.tensor.map_or(T::one(), |t| t.eval_a(k))
    }

    fn general(&self) -> bool {
        self.tensor.is_some_and(|t| !t.identity)
    }

    fn assemble(&self, field: &DirectorField<T>, want_grad: bool, dirichlet: bool) -> Result<(EnergyBreakdown<T>, Option<Vec<Vec3<T>>>)> {
        let n = self.grid.n_nodes();
        let layers = match field.layout {
            Layout::Thin { n_s } => Some(Layers::new(n_s)?),
            Layout::Surface => None,
        };
        let total = field.values.len();
        let terms: Vec<NodeTerms<T>> = (0..total)
            .into_par_iter()
            .with_min_len(MIN_CHUNK)
            .map(|idx| match (&layers, self.form) {
                (Some(ls), EnergyForm::Thin { eps }) => self.thin_node(field, ls, eps, idx / n, idx % n, dirichlet),
                _ => self.limit_node(&field.values, idx, dirichlet),
            })
            .collect();

        let mut tangential = T::zero();
        let mut normal = T::zero();
        for t in &terms {
            tangential += t.tangential;
            normal += t.normal;
        }
        if !(tangential.is_finite() && normal.is_finite()) {
            return Err(Error::NonFinite("energy".into()));
        }
        let energy = EnergyBreakdown::new(tangential, normal);
        if !want_grad {
            return Ok((energy, None));
        }

        let grid = self.grid;
        let grad: Vec<Vec3<T>> = (0..total)
            .into_par_iter()
            .with_min_len(MIN_CHUNK)
            .map(|idx| {
                let (l, j) = (idx / n, idx % n);
                let base = l * n;
                let mut g = terms[idx].local;
                for dir in 0..2 {
                    for (k, c) in grid.stencil_column(j, dir) {
                        g += terms[base + k].seed[dir] * c;
                    }
                }
                if let Some(ls) = &layers {
                    for &(m, c) in ls.stencil.column(l) {
                        g += terms[m * n + j].seed[2] * c;
                    }
                }
                g
            })
            .collect();
        Ok((energy, Some(grad)))
    }

    fn limit_node(&self, values: &[Vec3<T>], k: usize, dirichlet: bool) -> NodeTerms<T> {
        let frame = &self.grid.frames[k];
        let w = frame.area_weight;
        let a = self.a(k);
        let u = values[k];
        let pert = self.perturbation;
        let two_w = T::lit(2.0) * w;

        let mut out = NodeTerms::default();
        for dir in 0..2 {
            let mut r = self.grid.derivative_at(values, k, dir) * a;
            if !dirichlet {
                r += pert.apply(k, u, dir);
                out.local += pert.sigma_jacobian(k, u, dir).tr_mul_vec(r) * two_w;
            }
            out.tangential += r.norm_sq();
            out.seed[dir] = r * (two_w * a / frame.chart_metric[dir]);
        }

        if !dirichlet && !pert.is_zero() {
            let v = pert.apply(k, u, 2);
            let nm = self.target.normal_extension(u);
            let jac_n = self.target.normal_extension_jacobian(u);
            let bn = pert.sigma_jacobian(k, u, 2);
            // d(v·ñ)/du
            let dvn = bn.tr_mul_vec(nm) + jac_n.tr_mul_vec(v);
            let (q, dq) = if self.general() {
                let num = v.dot(nm) / a;
                let den = nm.dot(nm) / a;
                let dnum = dvn * (T::one() / a);
                let dden = jac_n.tr_mul_vec(nm) * (T::lit(2.0) / a);
                (num / den, dnum * (T::one() / den) - dden * (num / (den * den)))
            } else {
                (v.dot(nm), dvn)
            };
            out.normal = w * q * q;
            out.local += dq * (two_w * q);
        }
        out.tangential *= w;
        out
    }

    fn thin_node(&self, field: &DirectorField<T>, layers: &Layers<T>, eps: T, l: usize, k: usize, dirichlet: bool) -> NodeTerms<T> {
        let n = field.n_nodes;
        let frame = &self.grid.frames[k];
        let s = layers.s[l];
        let a = self.a(k);
        let values = field.layer(l);
        let u = values[k];
        let pert = self.perturbation;
        let weight = T::lit(0.5) * layers.weights[l] * frame.area_weight
            * metric_volume_factor(frame.kappa1, frame.kappa2, eps, s);
        let two_w = T::lit(2.0) * weight;

        let mut out = NodeTerms::default();
        for dir in 0..2 {
            let h = metric_tangent_coeff(frame.kappa(dir), eps, s);
            let mut r = self.grid.derivative_at(values, k, dir) * (a * h);
            if !dirichlet {
                r += pert.apply(k, u, dir);
                out.local += pert.sigma_jacobian(k, u, dir).tr_mul_vec(r) * two_w;
            }
            out.tangential += r.norm_sq();
            out.seed[dir] = r * (two_w * a * h / frame.chart_metric[dir]);
        }

        let mut ds = Vec3::zero();
        for (m, c) in layers.stencil.row(l) {
            ds += (field.values[m * n + k] - u) * c;
        }
        let mut r = ds * (a / eps);
        if !dirichlet {
            r += pert.apply(k, u, 2);
            out.local += pert.sigma_jacobian(k, u, 2).tr_mul_vec(r) * two_w;
        }
        out.normal = weight * r.norm_sq();
        out.seed[2] = r * (two_w * a / eps);
        out.tangential *= weight;
        out
    }

    /// `½ ∫ |∂_s u|² √g` (no `ε⁻¹`): the part of a thin field's energy that the
    /// limit forces to vanish.
    pub fn s_derivative_energy(&self, field: &DirectorField<T>) -> Result<T> {
        self.validate(field)?;
        let (EnergyForm::Thin { eps }, Layout::Thin { n_s }) = (self.form, field.layout) else {
            return Err(Error::GridMismatch("s-derivative energy needs a thin field".into()));
        };
        let layers = Layers::new(n_s)?;
        let n = field.n_nodes;
        let mut total = T::zero();
        for l in 0..n_s {
            for (k, f) in self.grid.frames.iter().enumerate() {
                let u = field.values[l * n + k];
                let mut ds = Vec3::zero();
                for (m, c) in layers.stencil.row(l) {
                    ds += (field.values[m * n + k] - u) * c;
                }
                total += T::lit(0.5) * layers.weights[l] * f.area_weight
                    * metric_volume_factor(f.kappa1, f.kappa2, eps, layers.s[l])
                    * ds.norm_sq();
            }
        }
        Ok(total)
    }
}

/// Pull-back energy `E^ε_N` of a thin field.
pub fn eval_thin_energy<T: Real>(
    field: &DirectorField<T>,
    grid: &SurfaceGrid<T>,
    target: &TargetManifold<T>,
    perturbation: &BoundPerturbation<T>,
    eps: T,
) -> Result<EnergyBreakdown<T>> {
    Energy::thin(grid, target, perturbation, eps, None).evaluate(field)
}

/// Limit energy `E_N` of a surface field.
pub fn eval_limit_energy<T: Real>(
    field: &DirectorField<T>,
    grid: &SurfaceGrid<T>,
    target: &TargetManifold<T>,
    perturbation: &BoundPerturbation<T>,
) -> Result<EnergyBreakdown<T>> {
    Energy::limit(grid, target, perturbation).evaluate(field)
}

/// Generalized limit energy with an elliptic tensor.
pub fn eval_limit_energy_general<T: Real>(
    field: &DirectorField<T>,
    grid: &SurfaceGrid<T>,
    target: &TargetManifold<T>,
    perturbation: &BoundPerturbation<T>,
    tensor: &BoundTensor<T>,
) -> Result<EnergyBreakdown<T>> {
    Energy::limit_general(grid, target, perturbation, tensor).evaluate(field)
}

/// Minimizer of `|d + K(u) n_N|²` (or `|a d + K n_N|²`) over `d ⟂ n_M(u)`:
/// `d₀ = (n_M ⊗ n_M − I) K(u) n_N / a`.
pub fn optimal_corrector<T: Real>(
    field: &DirectorField<T>,
    grid: &SurfaceGrid<T>,
    target: &TargetManifold<T>,
    perturbation: &BoundPerturbation<T>,
    tensor: Option<&BoundTensor<T>>,
) -> Result<Vec<Vec3<T>>> {
    if field.layout != Layout::Surface {
        return Err(Error::GridMismatch("corrector needs a surface field".into()));
    }
    field.check_grid(grid)?;
    Ok(field
        .values
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let v = perturbation.apply(k, u, 2);
            let nm = target.normal_extension(u);
            let a = tensor.map_or(T::one(), |t| t.eval_a(k));
            (nm * nm.dot(v) - v) * (T::one() / a)
        })
        .collect())
}

/// Recovery field `u*_ε(ξ, s) = π_M(u₀(ξ) + εs d₀(ξ))` on `n_s` layers.
pub fn recovery_field<T: Real>(
    u0: &DirectorField<T>,
    d0: &[Vec3<T>],
    eps: T,
    n_s: usize,
    target: &TargetManifold<T>,
) -> Result<DirectorField<T>> {
    if u0.layout != Layout::Surface || d0.len() != u0.n_nodes {
        return Err(Error::GridMismatch("recovery needs a surface field and one corrector per node".into()));
    }
    let dmax = d0.iter().map(|d| d.norm()).fold(T::zero(), T::max);
    let radius = target.admissible_radius();
    if eps * dmax >= radius {
        return Err(Error::OutsideNeighborhood {
            distance: (eps * dmax).to_f64_lossy(),
            radius: radius.to_f64_lossy(),
        });
    }
    let layers = Layers::<T>::new(n_s)?;
    let mut values = Vec::with_capacity(u0.n_nodes * n_s);
    for &s in &layers.s {
        for (&u, &d) in u0.values.iter().zip(d0) {
            let shift = d * (eps * s);
            values.push(if shift == Vec3::zero() { u } else { target.project(u + shift)? });
        }
    }
    DirectorField::thin(u0.n_nodes, n_s, values)
}

/// Discrete `H¹(N × I)` distance between a thin field and a surface field
/// extended constantly in `s`.
pub fn h1_distance<T: Real>(thin: &DirectorField<T>, surface: &DirectorField<T>, grid: &SurfaceGrid<T>) -> Result<T> {
    let Layout::Thin { n_s } = thin.layout else {
        return Err(Error::GridMismatch("first argument must be a thin field".into()));
    };
    if surface.layout != Layout::Surface {
        return Err(Error::GridMismatch("second argument must be a surface field".into()));
    }
    thin.check_grid(grid)?;
    surface.check_grid(grid)?;
    let layers = Layers::<T>::new(n_s)?;
    let n = grid.n_nodes();
    let mut total = T::zero();
    for l in 0..n_s {
        let diff: Vec<Vec3<T>> = thin.layer(l).iter().zip(&surface.values).map(|(&a, &b)| a - b).collect();
        for (k, f) in grid.frames.iter().enumerate() {
            let d1 = grid.derivative_at(&diff, k, 0);
            let d2 = grid.derivative_at(&diff, k, 1);
            let mut ds = Vec3::zero();
            for (m, c) in layers.stencil.row(l) {
                ds += (thin.values[m * n + k] - thin.values[l * n + k]) * c;
            }
            let density = diff[k].norm_sq() + d1.norm_sq() + d2.norm_sq() + ds.norm_sq();
            total += layers.weights[l] * f.area_weight * density;
        }
    }
    Ok(total.sqrt())
}
