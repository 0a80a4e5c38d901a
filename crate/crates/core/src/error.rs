use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("thickness {eps} outside the admissible range (0, {eps_max}]")]
    ThicknessOutOfBudget { eps: f64, eps_max: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid target manifold: {0}")]
    InvalidTarget(String),

    #[error("point outside the admissible tubular neighborhood of the target (distance {distance}, radius {radius})")]
    OutsideNeighborhood { distance: f64, radius: f64 },

    #[error("point is not on the target manifold (residual {0:e})")]
    NotOnManifold(f64),

    #[error("nearest-point projection did not converge within {0} iterations")]
    ProjectionDiverged(usize),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("tensor is not uniformly elliptic: {0}")]
    NotElliptic(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Whether the error reflects bad input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite(_) | Error::ProjectionDiverged(_) | Error::OutsideNeighborhood { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
