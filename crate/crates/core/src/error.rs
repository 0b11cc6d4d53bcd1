use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: {what} (last change {last_change:.3e}, tol {tol:.1e})")]
    NonConvergence {
        what: String,
        last_change: f64,
        tol: f64,
    },

    #[error("lattice sum not converged within {shells} shells")]
    Truncation { shells: usize },

    #[error("envelope fit failed: {0}")]
    FitFailure(String),

    #[error("solver breakdown at k = {k}: pivot {pivot:.3e}")]
    SolverBreakdown { k: f64, pivot: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("grid rejected: {0}")]
    GridRejected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
