use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or geometry do not fit together.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A model invariant (decay law, symmetry, mean) does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// `h_Λ − E` is numerically singular: `E` is a resonance of the finite-volume operator.
    #[error("near-singular resolvent: smallest singular value {sigma_min:e}")]
    NearSingular { sigma_min: f64 },

    /// A gated check refused to run because its inputs fail a stated precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
