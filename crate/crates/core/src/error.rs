use thiserror::Error;

/// Errors raised by the bridge library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument is malformed (empty grid, non-positive penalty, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value-function integral diverges for the requested coefficients.
    #[error(
        "cost of migration diverges: blow-up coefficient c = {c} with power m = {m} \
         violates c < 1 + 1/m (integral of A_s over [0, T) is infinite)"
    )]
    Divergence { c: f64, m: f64 },

    /// Quadrature or ODE integration failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The simulator produced a non-finite value.
    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    /// Every simulated path was excluded from an estimator.
    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure is numerical (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::Divergence { .. }
                | Error::NonFinite { .. }
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
