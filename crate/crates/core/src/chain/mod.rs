//! Communication-graph calculus for a single impersonating adversary and
//! the similarity chain between the all-0 and all-1 failure-free graphs.

mod build;
mod exec;
mod graph;

pub use build::{
    apply_op, build_full_chain, build_pi_chain, oracle_scan, strawman_decision, strawman_in, strawman_scan,
    verify_chain, Chain, ChainBuilder, ChainLimits, ChainOp, ChainReport, ChainStep, StrawmanFinding,
};
pub use exec::{
    execute_graph, interpret_graph, inverse_state, oracle_agrees, verify_similar, views_of_run, Execution, GraphRun,
    Similarity, View, GRAPH_SEED,
};
pub use graph::{op_label, op_remove, op_switch, validate_graph, CommGraph, Label, Violation, GRAPH_SCHEMA_VERSION};

use thiserror::Error;

use crate::error::EngineError;
use crate::types::Round;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("{op}: precondition failed: {reason}")]
    PreconditionFailed { op: String, reason: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("chain for n={n}, R={rounds} exceeds the limits n <= {max_n}, R <= {max_rounds}")]
    HorizonExceeded { n: usize, rounds: Round, max_n: usize, max_rounds: Round },
    #[error("graph file: {0}")]
    Parse(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl ChainError {
    pub(crate) fn precondition(op: &str, reason: impl Into<String>) -> Self {
        ChainError::PreconditionFailed { op: op.to_string(), reason: reason.into() }
    }
}
