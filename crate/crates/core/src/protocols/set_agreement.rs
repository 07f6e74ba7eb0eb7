use std::collections::{BTreeMap, BTreeSet};

use super::Fault;
use crate::engine::{Protocol, ProtocolKind, Step};
use crate::error::ProtocolError;
use crate::types::{Item, Payload, ProcessorId, Round, RoundInbox, Value};

/// Two-round `(k+1)`-set agreement over a finite value domain.
///
/// Round 1 sends the input. Round 2 echoes every value heard from more than
/// `k` distinct senders. A value echoed by `n` distinct senders joins `M`
/// and everyone decides `min(M)` at the end of round 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetAgreement {
    pub n: usize,
    pub k: usize,
    pub domain: BTreeSet<Value>,
    pub fault: Option<Fault>,
}

impl SetAgreement {
    pub fn new(n: usize, k: usize, domain: impl IntoIterator<Item = Value>) -> Self {
        SetAgreement { n, k, domain: domain.into_iter().collect(), fault: None }
    }

    pub const HORIZON: Round = 2;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetAgreementState {
    pub v0: Value,
    /// Values heard in round 1 from more than `k` senders.
    pub candidates: BTreeSet<Value>,
    pub m: BTreeSet<Value>,
    pub decided: Option<Value>,
}

fn senders_per_value(inbox: &RoundInbox, round: Round) -> BTreeMap<Value, BTreeSet<ProcessorId>> {
    let mut out: BTreeMap<Value, BTreeSet<ProcessorId>> = BTreeMap::new();
    for (src, item) in inbox.items() {
        let value = match (round, item) {
            (1, Item::SaVal { value }) | (2, Item::SaEcho { value }) => *value,
            _ => continue,
        };
        out.entry(value).or_default().insert(src);
    }
    out
}

pub fn set_agreement_round(
    protocol: &SetAgreement,
    state: &SetAgreementState,
    round: Round,
    inbox: &RoundInbox,
) -> Result<(SetAgreementState, Option<Value>), ProtocolError> {
    let mut next = state.clone();
    let counts = senders_per_value(inbox, round);
    match round {
        1 => {
            next.candidates = counts.into_iter().filter(|(_, s)| s.len() > protocol.k).map(|(v, _)| v).collect();
            Ok((next, None))
        }
        2 => {
            next.m.extend(counts.into_iter().filter(|(_, s)| s.len() >= protocol.n).map(|(v, _)| v));
            let decision = *next.m.first().ok_or(ProtocolError::EmptyM)?;
            if next.decided.is_none() {
                next.decided = Some(decision);
                return Ok((next, Some(decision)));
            }
            Ok((next, None))
        }
        _ => Ok((next, None)),
    }
}

impl Protocol for SetAgreement {
    type State = SetAgreementState;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::SetAgreement { domain_size: self.domain.len() }
    }

    fn init(&self, _id: ProcessorId, input: Value, _coin_seed: u64) -> SetAgreementState {
        SetAgreementState { v0: input, candidates: BTreeSet::new(), m: BTreeSet::new(), decided: None }
    }

    fn broadcast(&self, state: &SetAgreementState, round: Round) -> Payload {
        match round {
            1 => Payload::single(Item::SaVal { value: state.v0 }),
            2 if self.fault == Some(Fault::SkipRound2Echo) => Payload::empty(),
            2 => Payload::new(state.candidates.iter().map(|&value| Item::SaEcho { value }).collect()),
            _ => Payload::empty(),
        }
    }

    fn step(
        &self,
        state: &SetAgreementState,
        round: Round,
        inbox: &RoundInbox,
    ) -> Result<Step<SetAgreementState>, ProtocolError> {
        let (state, decision) = set_agreement_round(self, state, round, inbox)?;
        Ok(Step { state, decision })
    }
}

/// The inbox of an extra participant after every original processor
/// broadcast its decision.
pub fn decision_inbox(decisions: &[Value]) -> RoundInbox {
    RoundInbox::canonical(
        decisions
            .iter()
            .enumerate()
            .map(|(slot, &value)| (ProcessorId::from_slot(slot), Payload::single(Item::Decided { value })))
            .collect(),
    )
}

/// Decision of a processor that joins after the set-agreement run: the
/// smallest value carried by more than `k` `DECIDED` messages.
pub fn boost_participants(inbox: &RoundInbox, k: usize) -> Result<Value, ProtocolError> {
    let mut counts: BTreeMap<Value, usize> = BTreeMap::new();
    for (_, item) in inbox.items() {
        if let Item::Decided { value } = item {
            *counts.entry(*value).or_default() += 1;
        }
    }
    counts.into_iter().find(|&(_, c)| c > k).map(|(v, _)| v).ok_or(ProtocolError::NoQualifyingValue { k })
}
