use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or token-set shapes.
    #[error("shape error: {0}")]
    Shape(String),
    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Invalid argument (counts, ranges, fractions).
    #[error("argument error: {0}")]
    Argument(String),
    /// Degenerate or inconsistent geometry input.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// API misuse, e.g. backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),
    /// A data-path contract was violated (e.g. field channels fed to the
    /// context encoder).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Synthetic-case generation outside the valid parameter range.
    #[error("generation error: {0}")]
    Generation(String),
    /// Constrained solve found no feasible point; carries per-constraint
    /// residuals of the best attempt.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// File-format violation (magic, version, truncation, schema).
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
