use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("absorbing state {state}: all rates are zero")]
    Absorbing { state: String },

    #[error("reaction {reaction} would drive species {species} negative from {state}")]
    NegativeCount {
        reaction: usize,
        species: usize,
        state: String,
    },

    #[error("species count overflow applying reaction {reaction}")]
    Overflow { reaction: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required field `{0}`")]
    MissingField(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("metastable set is reducible or singular: {0}")]
    Reducible(String),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("transition block is periodic; no aperiodic quasi-stationary limit")]
    Periodic,

    #[error("no trajectory survived in the set; try a smaller time or step count")]
    NoSurvivors,

    #[error("{what} budget of {budget} exceeded ({detail})")]
    BudgetExceeded {
        what: &'static str,
        budget: u64,
        detail: String,
    },

    #[error("reports are not comparable: {0}")]
    Mismatch(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
