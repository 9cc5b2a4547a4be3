use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("root is not bracketed on [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("agent `{agent}` would exceed its budget: worst-case loss {required:.9} > {budget:.9}")]
    BudgetExceeded {
        agent: String,
        required: f64,
        budget: f64,
    },

    #[error("agent `{0}` has already traded in a single-entry market")]
    AlreadyTraded(String),

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("agent `{0}` is already registered")]
    DuplicateAgent(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
