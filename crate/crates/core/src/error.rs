use thiserror::Error;

/// Errors raised by the field algebra, the solvers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("weight must be strictly positive (min = {min:e})")]
    NegativeWeight { min: f64 },

    /// `1 - theta z + delta r` dropped below the vacuum threshold.
    #[error("vacuum: min xi = {min_xi:e}")]
    Vacuum { min_xi: f64 },

    /// The vertical-velocity fixed point failed to converge.
    #[error(
        "w fixed point not converged after {iterations} iterations (last residual {residual:e})"
    )]
    NoContraction { iterations: usize, residual: f64 },

    /// Diagnosed vertical velocity does not vanish on the plates.
    #[error("w on the plates is {value:e}, exceeds tolerance")]
    BoundaryViolation { value: f64 },

    #[error("blow-up at t = {t}: |u|_inf = {u_inf:e} exceeds {bound:e}")]
    BlowUp { t: f64, u_inf: f64, bound: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("inadmissible configuration: {0}")]
    Inadmissible(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
