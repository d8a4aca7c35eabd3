//! Error type shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A count vector with zero total mass cannot be normalized.
    #[error("cannot normalize a label-count vector with zero total mass")]
    ZeroMass,

    /// Vector lengths disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An argument is outside its valid domain.
    #[error("invalid argument: {0}")]
    Domain(String),

    /// A request that cannot be satisfied with the given inputs.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A class with no samples where at least one is required.
    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    /// Malformed input data (file contents, config text, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A non-finite value appeared in a numeric computation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An error that occurred while executing a specific communication round.
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach round context to an error bubbling out of the round loop.
    pub fn in_round(self, round: usize) -> Error {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
