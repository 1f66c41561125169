//! Error type shared across the library.

/// Library-wide error type.
///
/// The CLI maps variants to exit codes: configuration problems exit with 2,
/// mesh/solver failures with 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid mesh topology, orientation, or geometry.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Linear-algebra or eigen-solver failure.
    #[error("solver error: {0}")]
    Solver(String),

    /// Mesh-file parse error with 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
