//! Projected-gradient descent on `M^n` with retraction by the nearest-point
//! projection.
//!
//! The stopping test uses the sup-norm over values of the Euclidean gradient
//! projected onto `T_u M`. Descent directions use the quadrature-weighted
//! `L²` metric, or an `H¹`-type metric when preconditioned.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::energy::{Energy, EnergyBreakdown, EnergyForm};
use crate::error::{Error, Result};
use crate::field::{DirectorField, Layers, Layout};
use crate::linalg::Vec3;
use crate::real::Real;
use crate::target::TargetManifold;

/// Constraint tolerance for the initial field and every iterate.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

/// Something the minimizer can descend on.
pub trait Objective<T: Real> {
    fn target(&self) -> &TargetManifold<T>;
    fn evaluate(&self, field: &DirectorField<T>) -> Result<EnergyBreakdown<T>>;
    fn evaluate_with_gradient(&self, field: &DirectorField<T>) -> Result<(EnergyBreakdown<T>, Vec<Vec3<T>>)>;
    /// Positive quadrature weight of every stored value.
    fn metric_weights(&self, field: &DirectorField<T>) -> Result<Vec<T>>;
    /// A symmetric positive semidefinite operator `H₀` approximating the
    /// leading-order Hessian; `None` disables preconditioning.
    fn hessian_model(&self, _layout: Layout, _z: &[Vec3<T>]) -> Option<Result<Vec<Vec3<T>>>> {
        None
    }
    /// Per-node dense layer blocks of `H₀` (row-major `n_layers²` each), used
    /// to precondition the inner solve; `None` falls back to the mass matrix.
    fn hessian_blocks(&self, _layout: Layout) -> Option<Result<Vec<T>>> {
        None
    }
}

impl<T: Real> Objective<T> for Energy<'_, T> {
    fn target(&self) -> &TargetManifold<T> {
        self.target
    }

    fn evaluate(&self, field: &DirectorField<T>) -> Result<EnergyBreakdown<T>> {
        Energy::evaluate(self, field)
    }

    fn evaluate_with_gradient(&self, field: &DirectorField<T>) -> Result<(EnergyBreakdown<T>, Vec<Vec3<T>>)> {
        Energy::evaluate_with_gradient(self, field)
    }

    fn metric_weights(&self, field: &DirectorField<T>) -> Result<Vec<T>> {
        field.check_grid(self.grid)?;
        let area = self.grid.frames.iter().map(|f| f.area_weight);
        Ok(match (self.form, field.layout) {
            (EnergyForm::Thin { .. }, Layout::Thin { n_s }) => {
                let layers = Layers::<T>::new(n_s)?;
                layers.weights.iter().flat_map(|&w| area.clone().map(move |a| a * w)).collect()
            }
            _ => area.collect(),
        })
    }

    fn hessian_model(&self, layout: Layout, z: &[Vec3<T>]) -> Option<Result<Vec<Vec3<T>>>> {
        Some(self.dirichlet_apply(layout, z))
    }

    fn hessian_blocks(&self, layout: Layout) -> Option<Result<Vec<T>>> {
        Some(self.dirichlet_blocks(layout))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Barzilai–Borwein trial steps, then Armijo backtracking.
    BarzilaiBorwein,
    /// Backtracking from twice the previously accepted step.
    FixedBacktracking,
    /// Limited-memory BFGS directions (the preconditioner as initial inverse
    /// Hessian), unit trial step, Armijo backtracking.
    #[default]
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Plain `L²` gradient.
    None,
    /// `H¹`-type gradient: solves `(shift·M + H₀) z = ∇E` by a few CG steps
    /// preconditioned with the per-node layer blocks, `H₀` being the `K = 0` Hessian.
    #[default]
    Sobolev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    /// Relative tolerance on the projected-gradient sup-norm; the absolute
    /// threshold is `tolerance · max(1, E(initial))`.
    pub tolerance: f64,
    pub step_rule: StepRule,
    pub armijo: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    pub preconditioner: Preconditioner,
    /// Mass shift of the Sobolev metric.
    pub metric_shift: f64,
    pub cg_iterations: usize,
    /// Relative residual at which the inner CG stops early.
    pub cg_tolerance: f64,
    /// Correction pairs kept by the L-BFGS rule.
    pub lbfgs_memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iterations: 5000,
            tolerance: 1e-6,
            step_rule: StepRule::Lbfgs,
            armijo: 1e-4,
            shrink: 0.5,
            max_halvings: 30,
            preconditioner: Preconditioner::Sobolev,
            metric_shift: 1.0,
            cg_iterations: 30,
            cg_tolerance: 1e-2,
            lbfgs_memory: 8,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOptions(m.into()));
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad("armijo constant must lie in (0, 0.5)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if self.max_halvings == 0 {
            return bad("max_halvings must be at least 1");
        }
        if !(self.metric_shift > 0.0 && self.metric_shift.is_finite()) {
            return bad("metric_shift must be positive");
        }
        if self.cg_iterations == 0 || !(self.cg_tolerance > 0.0 && self.cg_tolerance < 1.0) {
            return bad("cg_iterations must be positive and cg_tolerance in (0, 1)");
        }
        if self.step_rule == StepRule::Lbfgs && self.lbfgs_memory == 0 {
            return bad("lbfgs_memory must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition within the allowed halvings.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry<T> {
    pub iteration: usize,
    pub energy: T,
    pub gradient_norm: T,
    pub step: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport<T> {
    pub iterations: usize,
    pub energy: EnergyBreakdown<T>,
    pub gradient_norm: T,
    pub tolerance: T,
    pub trace: Vec<TraceEntry<T>>,
    pub termination: Termination,
}

struct Iterate<T> {
    field: DirectorField<T>,
    energy: EnergyBreakdown<T>,
    /// Tangent-projected Euclidean gradient.
    gradient: Vec<Vec3<T>>,
    /// Sup-norm of the projected gradient.
    sup: T,
}

struct Context<'a, T: Real, O: ?Sized> {
    objective: &'a O,
    weights: Vec<T>,
    opts: &'a MinimizeOptions,
    /// Cholesky factors of `shift·M + H₀` restricted to each node's layers.
    blocks: Option<BlockCholesky<T>>,
}

/// Independent dense Cholesky factorizations of equally sized SPD blocks.
struct BlockCholesky<T> {
    size: usize,
    n_nodes: usize,
    factors: Vec<T>,
}

impl<T: Real> BlockCholesky<T> {
    /// `blocks[k]` is node `k`'s block; values are stored layer-major, so the
    /// entry for layer `l` of node `k` sits at `l * n_nodes + k`.
    fn new(size: usize, mut blocks: Vec<T>) -> Option<Self> {
        let n_nodes = blocks.len() / (size * size);
        for b in blocks.chunks_mut(size * size) {
            for j in 0..size {
                let mut d = b[j * size + j];
                for p in 0..j {
                    d -= b[j * size + p] * b[j * size + p];
                }
                if !(d > T::zero()) {
                    return None;
                }
                let d = d.sqrt();
                b[j * size + j] = d;
                for i in j + 1..size {
                    let mut v = b[i * size + j];
                    for p in 0..j {
                        v -= b[i * size + p] * b[j * size + p];
                    }
                    b[i * size + j] = v / d;
                }
            }
        }
        Some(BlockCholesky { size, n_nodes, factors: blocks })
    }

    fn solve(&self, rhs: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let (m, n) = (self.size, self.n_nodes);
        let mut out = rhs.to_vec();
        let mut x = vec![Vec3::zero(); m];
        for k in 0..n {
            let l = &self.factors[k * m * m..(k + 1) * m * m];
            for i in 0..m {
                let mut v = rhs[i * n + k];
                for p in 0..i {
                    v -= x[p] * l[i * m + p];
                }
                x[i] = v * (T::one() / l[i * m + i]);
            }
            for i in (0..m).rev() {
                let mut v = x[i];
                for p in i + 1..m {
                    v -= x[p] * l[p * m + i];
                }
                x[i] = v * (T::one() / l[i * m + i]);
            }
            for i in 0..m {
                out[i * n + k] = x[i];
            }
        }
        out
    }
}

fn dot<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    a.iter().zip(b).map(|(x, y)| x.dot(*y)).sum()
}

fn weighted_dot<T: Real>(weights: &[T], a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    weights.iter().zip(a.iter().zip(b)).map(|(&m, (x, y))| m * x.dot(*y)).sum()
}

fn scale_by_weights<T: Real>(weights: &[T], v: &[Vec3<T>]) -> Vec<Vec3<T>> {
    v.iter().zip(weights).map(|(x, &m)| *x * (T::one() / m)).collect()
}

impl<T: Real, O: Objective<T> + ?Sized> Context<'_, T, O> {
    fn iterate(&self, field: DirectorField<T>) -> Result<Iterate<T>> {
        let (energy, grad) = self.objective.evaluate_with_gradient(&field)?;
        let target = self.objective.target();
        let gradient: Vec<Vec3<T>> = field.values.iter().zip(&grad).map(|(&u, &g)| target.tangent_project(u, g)).collect();
        let sup = gradient.iter().map(|g| g.norm()).fold(T::zero(), T::max);
        if !sup.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(Iterate { field, energy, gradient, sup })
    }

    /// Inverse metric applied to `v`, projected onto the tangent spaces at `at`.
    fn precondition(&self, at: &DirectorField<T>, v: &[Vec3<T>]) -> Result<Vec<Vec3<T>>> {
        let target = self.objective.target();
        let raw = match self.opts.preconditioner {
            Preconditioner::Sobolev => self.sobolev_solve(at.layout, v)?,
            Preconditioner::None => None,
        }
        .unwrap_or_else(|| scale_by_weights(&self.weights, v));
        Ok(at.values.iter().zip(&raw).map(|(&u, &z)| target.tangent_project(u, z)).collect())
    }

    /// Two-loop recursion over the stored `(s, y, 1/(s·y))` pairs.
    fn lbfgs_direction(&self, x: &Iterate<T>, history: &VecDeque<(Vec<Vec3<T>>, Vec<Vec3<T>>, T)>) -> Result<Vec<Vec3<T>>> {
        let mut q = x.gradient.clone();
        let mut coeffs = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= *yi * a;
            }
            coeffs.push(a);
        }
        let mut r = self.precondition(&x.field, &q)?;
        for ((s, y, rho), a) in history.iter().zip(coeffs.iter().rev()) {
            let b = *rho * dot(y, &r);
            for (ri, si) in r.iter_mut().zip(s) {
                *ri += *si * (*a - b);
            }
        }
        let target = self.objective.target();
        Ok(x.field.values.iter().zip(&r).map(|(&u, &z)| target.tangent_project(u, z)).collect())
    }

    /// Block-Jacobi preconditioned CG on `(shift·M + H₀) y = b`.
    fn sobolev_solve(&self, layout: Layout, b: &[Vec3<T>]) -> Result<Option<Vec<Vec3<T>>>> {
        let shift = T::lit(self.opts.metric_shift);
        let apply = |p: &[Vec3<T>]| -> Result<Option<Vec<Vec3<T>>>> {
            let Some(h) = self.objective.hessian_model(layout, p) else { return Ok(None) };
            Ok(Some(h?.iter().zip(p).zip(&self.weights).map(|((h, p), &m)| *h + *p * (shift * m)).collect()))
        };
        let mut y = vec![Vec3::zero(); b.len()];
        let mut r = b.to_vec();
        let precondition = |r: &[Vec3<T>]| match &self.blocks {
            Some(b) => b.solve(r),
            None => scale_by_weights(&self.weights, r),
        };
        let mut q = precondition(&r);
        let mut p = q.clone();
        let mut rq = dot(&r, &q);
        let stop = T::lit(self.opts.cg_tolerance).powi(2) * rq;
        for _ in 0..self.opts.cg_iterations {
            let Some(ap) = apply(&p)? else { return Ok(None) };
            let pap = dot(&p, &ap);
            if !(pap > T::zero()) {
                break;
            }
            let a = rq / pap;
            for i in 0..y.len() {
                y[i] += p[i] * a;
                r[i] -= ap[i] * a;
            }
            q = precondition(&r);
            let rq_new = dot(&r, &q);
            if rq_new <= stop {
                break;
            }
            let beta = rq_new / rq;
            for i in 0..p.len() {
                p[i] = q[i] + p[i] * beta;
            }
            rq = rq_new;
        }
        Ok(Some(y))
    }
}

/// Minimizes `objective` over fields with values on the target manifold.
pub fn minimize<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    initial: &DirectorField<T>,
    opts: &MinimizeOptions,
) -> Result<(DirectorField<T>, MinimizeReport<T>)> {
    opts.validate()?;
    let target = objective.target();
    let off = initial.max_distance_to(target);
    if !(off <= T::lit(ON_MANIFOLD_TOL)) {
        return Err(Error::NotOnManifold(off.to_f64_lossy()));
    }
    let weights = objective.metric_weights(initial)?;
    if weights.len() != initial.values.len() || weights.iter().any(|&m| !(m > T::zero())) {
        return Err(Error::InvalidOptions("quadrature weights must be positive, one per value".into()));
    }
    let preconditioned = opts.preconditioner == Preconditioner::Sobolev;
    let blocks = match objective.hessian_blocks(initial.layout) {
        Some(b) if preconditioned => {
            let mut b = b?;
            let size = initial.n_layers();
            let shift = T::lit(opts.metric_shift);
            for (k, block) in b.chunks_mut(size * size).enumerate() {
                for l in 0..size {
                    block[l * size + l] += shift * weights[l * initial.n_nodes + k];
                }
            }
            BlockCholesky::new(size, b)
        }
        _ => None,
    };
    let ctx = Context { objective, weights, opts, blocks };

    let mut x = ctx.iterate(initial.clone())?;
    let tolerance = T::lit(opts.tolerance) * x.energy.total.max(T::one());
    let max_move = T::lit(0.25) * target.admissible_radius();
    let armijo = T::lit(opts.armijo);
    let shrink = T::lit(opts.shrink);
    let dir_sup = |d: &[Vec3<T>]| d.iter().map(|v| v.norm()).fold(T::zero(), T::max);

    let mut trace = vec![TraceEntry { iteration: 0, energy: x.energy.total, gradient_norm: x.sup, step: T::zero() }];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut alpha: Option<T> = None;
    let mut cached_steepest: Option<Vec<Vec3<T>>> = None;
    let mut history = VecDeque::new();

    while iterations < opts.max_iterations {
        if x.sup < tolerance {
            termination = Termination::Converged;
            break;
        }
        let mut direction = match (opts.step_rule, cached_steepest.take()) {
            (StepRule::Lbfgs, _) if !history.is_empty() => ctx.lbfgs_direction(&x, &history)?,
            (_, Some(d)) => d,
            (_, None) => ctx.precondition(&x.field, &x.gradient)?,
        };
        let steepest = (opts.step_rule == StepRule::BarzilaiBorwein).then(|| direction.clone());
        let mut slope = dot(&x.gradient, &direction);
        if !(slope > T::zero()) {
            history.clear();
            direction = scale_by_weights(&ctx.weights, &x.gradient);
            slope = dot(&x.gradient, &direction);
        }
        if !slope.is_finite() {
            return Err(Error::NonFinite("search direction".into()));
        }
        let reach = dir_sup(&direction);
        let mut step = match (opts.step_rule, alpha) {
            (StepRule::Lbfgs, _) if preconditioned || !history.is_empty() => T::one(),
            (_, Some(a)) => a,
            _ if preconditioned => T::one(),
            _ => T::lit(0.1) * max_move / reach.max(T::min_positive_value()),
        };
        if reach > T::zero() {
            step = step.min(max_move / reach);
        }

        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            match trial(objective, &x.field, &direction, step) {
                Ok((field, e)) if e.total <= x.energy.total - armijo * step * slope => {
                    accepted = Some(field);
                    break;
                }
                Ok(_) | Err(Error::OutsideNeighborhood { .. }) | Err(Error::ProjectionDiverged(_)) => {}
                Err(e) => return Err(e),
            }
            step *= shrink;
        }
        let Some(field) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let next = ctx.iterate(field)?;
        iterations += 1;
        trace.push(TraceEntry { iteration: iterations, energy: next.energy.total, gradient_norm: next.sup, step });

        let s: Vec<Vec3<T>> = next.field.values.iter().zip(&x.field.values).map(|(a, b)| *a - *b).collect();
        let y: Vec<Vec3<T>> = next.gradient.iter().zip(&x.gradient).map(|(a, b)| *a - *b).collect();
        let sy = dot(&s, &y);
        let fallback = step * T::lit(2.0);
        alpha = Some(match opts.step_rule {
            StepRule::BarzilaiBorwein => {
                let bb = if !preconditioned && iterations % 2 == 1 {
                    weighted_dot(&ctx.weights, &s, &s) / sy
                } else {
                    // BB2 in the preconditioned metric: s·y / y·P⁻¹y
                    let next_steepest = ctx.precondition(&next.field, &next.gradient)?;
                    let prev = steepest.as_deref().unwrap_or_default();
                    let w: Vec<Vec3<T>> = next_steepest.iter().zip(prev).map(|(a, b)| *a - *b).collect();
                    cached_steepest = Some(next_steepest);
                    sy / dot(&y, &w)
                };
                if sy > T::zero() && bb.is_finite() && bb > T::zero() { bb } else { fallback }
            }
            StepRule::FixedBacktracking => fallback,
            StepRule::Lbfgs => {
                if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if history.len() == opts.lbfgs_memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, T::one() / sy));
                }
                T::one()
            }
        });
        x = next;
    }
    if termination == Termination::MaxIterations && x.sup < tolerance {
        termination = Termination::Converged;
    }

    let report = MinimizeReport {
        iterations,
        energy: x.energy,
        gradient_norm: x.sup,
        tolerance,
        trace,
        termination,
    };
    Ok((x.field, report))
}

fn trial<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    at: &DirectorField<T>,
    direction: &[Vec3<T>],
    alpha: T,
) -> Result<(DirectorField<T>, EnergyBreakdown<T>)> {
    let target = objective.target();
    let values = at
        .values
        .iter()
        .zip(direction)
        .map(|(&u, &r)| target.project(u - r * alpha))
        .collect::<Result<Vec<_>>>()?;
    let field = DirectorField { layout: at.layout, n_nodes: at.n_nodes, values };
    let energy = objective.evaluate(&field)?;
    Ok((field, energy))
}
