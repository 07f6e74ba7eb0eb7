//! Deterministic simulation of synchronous message passing under
//! impersonation attacks.
//!
//! A `k`-adversary may add up to `k` forged envelopes per receiver per
//! round, tagged with any sender id, but can never drop or alter a genuine
//! message. The crate provides the round engine, adversary strategies,
//! reference protocols (order-preserving renaming, set agreement,
//! randomized binary consensus, full information), the communication-graph
//! calculus behind the consensus impossibility chain, and the scenario
//! runner used by the `simctl` binary.

pub mod adversary;
pub mod chain;
pub mod engine;
pub mod error;
pub mod protocols;
pub mod sim;
pub mod trace;
pub mod types;

pub use adversary::{Adversary, Forgery, Observation};
pub use engine::{
    run_protocol, validate_config, Decision, Engine, EngineConfig, Protocol, ProtocolKind, RunOutcome, Step,
};
pub use error::{BudgetError, ConfigError, EngineError, ProtocolError};
pub use trace::{Trace, TraceEvent};
pub use types::{Envelope, FullView, Item, Origin, Payload, ProcessorId, Round, RoundInbox, Value};
