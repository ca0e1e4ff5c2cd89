use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatches and values from foreign tapes.
    #[error("structural error: {0}")]
    Structural(String),

    /// A value outside an operation's mathematical domain (e.g. `log` of 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Both densities vanish, so the density ratio is undefined.
    #[error("undefined support: p_r(v) + p_g(v) = 0 at {0:?}")]
    UndefinedSupport(Vec<f64>),

    /// Training or simulation produced non-finite state.
    #[error("divergence at iteration {iter}: {detail}")]
    Divergence { iter: usize, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
