use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, non-finite entries, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A numerical routine failed to converge or produced garbage.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation-specific precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The explicit time stepper blew up (CFL violation or worse).
    #[error("instability at step {step}: energy growth factor {factor:.3e}")]
    Instability { step: usize, factor: f64 },

    /// The descent loop diverged.
    #[error("optimization error: {0}")]
    Optimization(String),

    /// Exact-arithmetic path cannot handle the input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
