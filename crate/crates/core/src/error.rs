use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{kind} id {id} out of range (bound {bound})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        bound: usize,
    },

    #[error("non-finite loss in {term} term")]
    NonFiniteLoss { term: String },

    #[error("non-finite gradient entry in {0}; parameters left untouched")]
    NonFiniteGradient(&'static str),

    #[error("non-finite parameter in {0} after update")]
    NonFiniteParameters(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("AUC undefined: {n_pos} positives, {n_neg} negatives")]
    UndefinedAuc { n_pos: usize, n_neg: usize },

    #[error("rating {0} outside 1..=5")]
    InvalidRating(i64),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("every user-item pair is observed; no unobserved pairs to sample")]
    FullyObserved,

    #[error("cannot split {available} elements into {requested} parts")]
    TooFewElements { available: usize, requested: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
