use thiserror::Error;

/// Errors surfaced by the simulation, learning, and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("control block of the kernel is numerically singular (insufficient excitation)")]
    SingularKernel,

    #[error("regression matrix is rank deficient (insufficient excitation)")]
    Excitation,

    #[error("policy is not admissible: closed-loop spectral radius {rho} >= 1")]
    Inadmissible { rho: f64 },

    #[error("fixed-point iteration did not converge within {max_iter} iterations")]
    NonConvergence { max_iter: usize },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("eigenvalue computation failed")]
    EigenFailure,

    #[error("non-finite {0} in weight update")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("trace parse error at line {line}: {what}")]
    TraceParse { line: usize, what: String },
}

pub type Result<T> = std::result::Result<T, Error>;
