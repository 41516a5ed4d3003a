use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Unit string not in the conversion table.
    #[error("unknown unit `{token}`")]
    UnknownUnit { token: String },

    #[error("malformed quantity `{input}`: {reason}")]
    MalformedQuantity { input: String, reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invariant `{name}` violated: {detail}")]
    Invariant { name: &'static str, detail: String },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("field profile under-resolved: sample spacing {spacing:.3e} s exceeds {limit:.3e} s")]
    Resolution { spacing: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: error estimate {estimate:.3e} above tolerance {tolerance:.3e}")]
    Convergence { estimate: f64, tolerance: f64 },

    #[error("spectrum window too small: normalization deficit {deficit:.3e} exceeds {limit:.1e}")]
    Window { deficit: f64, limit: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("bound violated: {0}")]
    Bound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numeric failures (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Window { .. } | Error::Fit(_) | Error::Bound(_))
    }
}
