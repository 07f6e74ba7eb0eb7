use thiserror::Error;

use crate::types::{ProcessorId, Round, Value};

/// A run description that violates a structural or protocol precondition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("empty system: n must be at least 1")]
    EmptySystem,
    #[error("max_rounds must be at least 1")]
    ZeroHorizon,
    #[error("{protocol} requires {inequality} (got n={n}, k={k})")]
    Precondition { protocol: &'static str, inequality: String, n: usize, k: usize },
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Field { field: field.into(), reason: reason.into() }
    }
}

/// The adversary tried to exceed its per-receiver, per-round allowance.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{receiver} targeted by {count} forged envelopes in round {round} (budget {budget})")]
pub struct BudgetError {
    pub receiver: ProcessorId,
    pub count: usize,
    pub budget: usize,
    pub round: Round,
}

/// A protocol transition hit a state its own invariants rule out.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("value {value} missing from its own rank set")]
    MissingValue { value: Value },
    #[error("set M is empty at decision time")]
    EmptyM,
    #[error("no value appears in more than {k} decision messages")]
    NoQualifyingValue { k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("{id} failed in round {round}: {source}")]
    Protocol {
        id: ProcessorId,
        round: Round,
        #[source]
        source: ProtocolError,
    },
    #[error("forged envelope has invalid endpoint {id} for n={n}")]
    UnknownProcessor { id: ProcessorId, n: usize },
    #[error("run already reached its horizon of {0} rounds")]
    HorizonReached(Round),
    #[error("graph does not match run: {0}")]
    GraphMismatch(String),
}
