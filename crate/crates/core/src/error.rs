use thiserror::Error;

/// Errors raised by the geometry, solver and evolution layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid shape specification: {0}")]
    InvalidSpec(String),

    /// The normal graph left the admissible tube around the reference curve.
    #[error("rebaseline required: {0}")]
    RebaselineRequired(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    /// The principal part of the curvature operator lost parabolicity.
    #[error("ellipticity lost: {0}")]
    EllipticityLost(String),

    #[error("newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
