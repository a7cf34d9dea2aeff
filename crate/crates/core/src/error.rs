use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("state space has {states} states, more than the limit of {limit}")]
    TooLarge { states: u128, limit: usize },

    /// A model assigns zero probability to a state that carries mass.
    #[error("infinite risk: model probability is zero at state {state}")]
    InfiniteRisk { state: usize },

    #[error("infeasible floor: lambda = {lambda} with {states} states (requires lambda * states < 1)")]
    InfeasibleFloor { lambda: f64, states: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("sample count must be positive")]
    EmptySample,

    #[error("model is not normalized (log Z = {log_z})")]
    Unnormalized { log_z: f64 },

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error(
        "variable `{variable}` category {category} is never observed; use the floored solver instead"
    )]
    ZeroMarginal { variable: String, category: usize },

    /// Combinatorial search exceeds the configured guard.
    #[error("scale error: {0}")]
    Scale(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
