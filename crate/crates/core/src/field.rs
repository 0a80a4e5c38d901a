//! Director fields on the surface grid (`Surface`) or on grid × s-layers (`Thin`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::perturbation::random_point_on;
use crate::real::Real;
use crate::stencil::DiffStencil;
use crate::surface::SurfaceGrid;
use crate::target::TargetManifold;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Surface,
    /// `n_s` uniform layers on `[-1, 1]`, endpoints included.
    Thin { n_s: usize },
}

impl Layout {
    pub fn layers(&self) -> usize {
        match *self {
            Layout::Surface => 1,
            Layout::Thin { n_s } => n_s,
        }
    }
}

/// Node values stored layer-major: value `(k, l)` sits at `l * n_nodes + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectorField<T> {
    pub layout: Layout,
    pub n_nodes: usize,
    pub values: Vec<Vec3<T>>,
}

/// Uniform s-layers with trapezoid weights and the s-derivative stencil.
#[derive(Debug, Clone)]
pub struct Layers<T> {
    pub s: Vec<T>,
    pub weights: Vec<T>,
    pub stencil: DiffStencil<T>,
}

impl<T: Real> Layers<T> {
    pub fn new(n_s: usize) -> Result<Self> {
        if n_s < 3 {
            return Err(Error::GridMismatch(format!("need at least 3 s-layers, got {n_s}")));
        }
        let ds = T::lit(2.0) / T::from_usize_lossy(n_s - 1);
        let s = (0..n_s).map(|l| -T::one() + T::from_usize_lossy(l) * ds).collect();
        let weights = (0..n_s)
            .map(|l| if l == 0 || l == n_s - 1 { ds * T::lit(0.5) } else { ds })
            .collect();
        Ok(Layers { s, weights, stencil: DiffStencil::new(n_s, ds, false) })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

impl<T: Real> DirectorField<T> {
    pub fn surface(values: Vec<Vec3<T>>) -> Self {
        DirectorField { layout: Layout::Surface, n_nodes: values.len(), values }
    }

    pub fn thin(n_nodes: usize, n_s: usize, values: Vec<Vec3<T>>) -> Result<Self> {
        if n_s < 3 || values.len() != n_nodes * n_s {
            return Err(Error::GridMismatch(format!(
                "thin field with {} values does not match {n_nodes} nodes x {n_s} layers",
                values.len()
            )));
        }
        Ok(DirectorField { layout: Layout::Thin { n_s }, n_nodes, values })
    }

    pub fn constant(grid: &SurfaceGrid<T>, layout: Layout, value: Vec3<T>) -> Self {
        let n = grid.n_nodes();
        DirectorField { layout, n_nodes: n, values: vec![value; n * layout.layers()] }
    }

    /// Projects every value onto `M`.
    pub fn projected(mut self, target: &TargetManifold<T>) -> Result<Self> {
        for v in self.values.iter_mut() {
            *v = target.project(*v)?;
        }
        Ok(self)
    }

    pub fn n_layers(&self) -> usize {
        self.layout.layers()
    }

    pub fn layer(&self, l: usize) -> &[Vec3<T>] {
        &self.values[l * self.n_nodes..(l + 1) * self.n_nodes]
    }

    /// Surface field repeated on `n_s` layers.
    pub fn extend_constant(&self, n_s: usize) -> Result<Self> {
        if self.layout != Layout::Surface {
            return Err(Error::GridMismatch("only surface fields can be extended in s".into()));
        }
        let mut values = Vec::with_capacity(self.n_nodes * n_s);
        for _ in 0..n_s {
            values.extend_from_slice(&self.values);
        }
        Self::thin(self.n_nodes, n_s, values)
    }

    pub fn check_grid(&self, grid: &SurfaceGrid<T>) -> Result<()> {
        if self.n_nodes != grid.n_nodes() || self.values.len() != self.n_nodes * self.n_layers() {
            return Err(Error::GridMismatch(format!(
                "field has {} nodes ({} values), grid has {}",
                self.n_nodes,
                self.values.len(),
                grid.n_nodes()
            )));
        }
        Ok(())
    }

    /// Largest distance of a value from `M`.
    pub fn max_distance_to(&self, target: &TargetManifold<T>) -> T {
        self.values.iter().map(|&v| target.distance_to(v)).fold(T::zero(), T::max)
    }
}

/// Reproducible random field: `π_M` of Gaussian draws, one per stored value.
pub fn random_field<T: Real>(
    grid: &SurfaceGrid<T>,
    target: &TargetManifold<T>,
    layout: Layout,
    seed: u64,
) -> Result<DirectorField<T>> {
    if let Layout::Thin { n_s } = layout {
        if n_s < 3 {
            return Err(Error::GridMismatch(format!("need at least 3 s-layers, got {n_s}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_nodes() * layout.layers();
    let values = (0..n).map(|_| random_point_on(target, &mut rng)).collect::<Result<Vec<_>>>()?;
    Ok(DirectorField { layout, n_nodes: grid.n_nodes(), values })
}

/// Random smooth ambient map `v(x) = c + Σ_m a_m sin(k_m·x + φ_m)`, composed
/// with `π_M` to give smooth `M`-valued fields on any surface or tube.
#[derive(Debug, Clone)]
pub struct SmoothRandomMap<T> {
    offset: Vec3<T>,
    modes: Vec<(Vec3<T>, Vec3<T>, T)>,
}

impl<T: Real> SmoothRandomMap<T> {
    /// `n_modes` modes with wave numbers in `[-max_freq, max_freq]³`, total
    /// amplitude at most 1, offset of length 1.2 so `|v| ≥ 0.2`.
    pub fn new(seed: u64, n_modes: usize, max_freq: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = |rng: &mut ChaCha8Rng| loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v.scale(1.0 / n);
            }
        };
        let offset = unit(&mut rng).scale(1.2);
        let amp = 1.0 / n_modes.max(1) as f64;
        let modes = (0..n_modes)
            .map(|_| {
                let k = Vec3::new(
                    rng.random_range(-max_freq..=max_freq),
                    rng.random_range(-max_freq..=max_freq),
                    rng.random_range(-max_freq..=max_freq),
                );
                let a = unit(&mut rng).scale(amp * rng.random_range(0.5..1.0));
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (Vec3::from_f64(k.0), Vec3::from_f64(a.0), T::lit(phase))
            })
            .collect();
        SmoothRandomMap { offset: Vec3::from_f64(offset.0), modes }
    }

    pub fn eval(&self, x: Vec3<T>) -> Vec3<T> {
        self.modes.iter().fold(self.offset, |acc, (k, a, p)| acc + *a * (k.dot(x) + *p).sin())
    }

    /// `Dv(x)`.
    pub fn jacobian(&self, x: Vec3<T>) -> Mat3<T> {
        self.modes.iter().fold(Mat3::zero(), |acc, (k, a, p)| acc + a.outer(*k).scale((k.dot(x) + *p).cos()))
    }

    /// `π_M(v(ξ))` at every surface node.
    pub fn surface_field(&self, grid: &SurfaceGrid<T>, target: &TargetManifold<T>) -> Result<DirectorField<T>> {
        let values = grid.frames.iter().map(|f| target.project(self.eval(f.xi))).collect::<Result<Vec<_>>>()?;
        Ok(DirectorField::surface(values))
    }

    /// `π_M(v(ψ_ε(ξ, s)))` on `n_s` layers of the tube of thickness `ε`.
    pub fn thin_field(&self, grid: &SurfaceGrid<T>, target: &TargetManifold<T>, eps: T, n_s: usize) -> Result<DirectorField<T>> {
        let layers = Layers::<T>::new(n_s)?;
        let mut values = Vec::with_capacity(grid.n_nodes() * n_s);
        for &s in &layers.s {
            for k in 0..grid.n_nodes() {
                values.push(target.project(self.eval(grid.tubular_point(k, eps, s)?))?);
            }
        }
        DirectorField::thin(grid.n_nodes(), n_s, values)
    }
}
