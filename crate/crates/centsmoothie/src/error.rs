use thiserror::Error;

/// Errors produced by graph construction, training, evaluation and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("self-pair: drug {0} paired with itself")]
    SelfPair(usize),

    #[error("{kind} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("negative hyperedge weight {value} at edge {edge}")]
    NegativeWeight { edge: usize, value: f64 },

    #[error("non-finite value detected in {context}")]
    NonFinite { context: String },

    #[error("training diverged: loss is not finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("requested {requested} negatives but the complement holds only {available}")]
    NotEnoughNegatives { requested: usize, available: usize },

    #[error("side effect {side_effect}: requested {requested} evaluation negatives, only {available} available")]
    NotEnoughNegativesForSideEffect {
        side_effect: usize,
        requested: usize,
        available: usize,
    },

    #[error("need at least one positive and one negative label, got {positives} positives / {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("fold count {folds} invalid: {reason}")]
    BadFoldCount { folds: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} name '{name}'")]
    UnknownName { kind: &'static str, name: String },

    #[error("drug '{0}' appears in triples but has no feature row")]
    MissingFeatureRow(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
