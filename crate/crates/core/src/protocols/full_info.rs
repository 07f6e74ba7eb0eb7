use std::sync::Arc;

use crate::engine::{Protocol, ProtocolKind, Step};
use crate::error::ProtocolError;
use crate::types::{FullView, Item, Payload, ProcessorId, Round, RoundInbox, Value};

/// Each processor rebroadcasts its entire view every round and never
/// decides. Its state after round `r` is exactly its view of rounds `1..=r`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullInformation;

impl Protocol for FullInformation {
    type State = FullView;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::FullInformation
    }

    fn init(&self, id: ProcessorId, input: Value, _coin_seed: u64) -> FullView {
        FullView { id, input, inboxes: Vec::new() }
    }

    fn broadcast(&self, state: &FullView, _round: Round) -> Payload {
        Payload::single(Item::FullInfo { view: Arc::new(state.clone()) })
    }

    fn step(&self, state: &FullView, _round: Round, inbox: &RoundInbox) -> Result<Step<FullView>, ProtocolError> {
        let mut next = state.clone();
        let mut entries = inbox.entries().to_vec();
        entries.sort();
        next.inboxes.push(entries);
        Ok(Step::undecided(next))
    }
}

/// Inputs announced in the round-1 messages of a full-information view.
pub fn round_one_inputs(view: &FullView) -> Vec<Value> {
    view.inboxes
        .first()
        .into_iter()
        .flatten()
        .flat_map(|(_, payload)| payload.items())
        .filter_map(|item| match item {
            Item::FullInfo { view } => Some(view.input),
            _ => None,
        })
        .collect()
}
