use thiserror::Error;

/// Failure of an iterative solve. Carries the best iterate seen and the
/// relative residual after every iteration.
#[derive(Clone)]
pub struct SolveFailure {
    pub iterations: usize,
    pub relative_residual: f64,
    pub best_iterate: Vec<f64>,
    pub residual_history: Vec<f64>,
}

impl std::fmt::Debug for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveFailure")
            .field("iterations", &self.iterations)
            .field("relative_residual", &self.relative_residual)
            .field("best_iterate", &format_args!("[{} values]", self.best_iterate.len()))
            .field("residual_history", &format_args!("[{} values]", self.residual_history.len()))
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coefficient outside the ellipticity class at {location}: {reason} (matrix {matrix:?})")]
    NotElliptic { location: String, reason: String, matrix: Vec<f64> },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("grid misaligned: {0}")]
    Misaligned(String),

    #[error("incompatible boundary conditions: {0}")]
    Incompatible(String),

    #[error("solver did not converge after {} iterations (relative residual {:.3e})", .0.iterations, .0.relative_residual)]
    NotConverged(Box<SolveFailure>),

    #[error("radius {radius} exceeds the admissible {limit}")]
    RadiusTooLarge { radius: f64, limit: f64 },

    #[error("empty averaging region at radius {0}")]
    EmptyRegion(f64),

    #[error("basis is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("flux is not divergence-free (relative residual {0:.3e})")]
    NotDivergenceFree(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
