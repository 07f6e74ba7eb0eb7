//! Order-preserving renaming into `1..=n+k`.
//!
//! Two layers. The echo layer builds a vector `V` of `(id, value)` pairs:
//! round 1 sends the input, round 2 echoes (`ECHO1`) every pair heard in
//! round 1, and from round 3 on every pair in `V` is echoed (`ECHO`). A pair
//! joins `V` when its echo arrives from `n` distinct claimed senders and is
//! re-echoed next round when it arrives from `n - k`. The renaming layer
//! decides `r` at the end of round `r + 3` if the input's rank among the
//! values of `V` was `r` at the end of this round and of the previous one.

use std::collections::{BTreeMap, BTreeSet};

use super::Fault;
use crate::engine::{Protocol, ProtocolKind, Step};
use crate::error::ProtocolError;
use crate::types::{Item, Payload, ProcessorId, Round, RoundInbox, Value};

/// The `(id, value)` pairs accepted by the echo layer.
pub type VVector = BTreeSet<(ProcessorId, Value)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenamingState {
    pub v0: Value,
    /// Pairs heard in round 1, echoed in round 2.
    pub heard: BTreeSet<(ProcessorId, Value)>,
    pub vector: VVector,
    /// Pairs to echo next round on top of `vector`.
    pub echo_next: BTreeSet<(ProcessorId, Value)>,
    /// Rank of `v0` at the end of the previous and of the latest round.
    pub rank_history: [Option<usize>; 2],
    pub decided: Option<Value>,
}

impl RenamingState {
    /// Distinct values present in `V`.
    pub fn values(&self) -> BTreeSet<Value> {
        self.vector.iter().map(|&(_, v)| v).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Renaming {
    pub n: usize,
    pub k: usize,
    /// Accept `n > k^2 + k` instead of `n > k^2 + 2k`.
    pub allow_weak_bound: bool,
    pub fault: Option<Fault>,
}

impl Renaming {
    pub fn new(n: usize, k: usize) -> Self {
        Renaming { n, k, allow_weak_bound: false, fault: None }
    }

    /// Last round of the echo protocol, `n + k + 4`.
    pub fn horizon(&self) -> Round {
        (self.n + self.k + 4) as Round
    }

    /// Latest round at whose end a processor may decide, `n + k + 3`.
    pub fn decision_deadline(&self) -> Round {
        (self.n + self.k + 3) as Round
    }
}

/// 1-based position of `v` among the ascending distinct values of `set`.
pub fn rank(v: Value, set: &BTreeSet<Value>) -> Result<usize, ProtocolError> {
    if !set.contains(&v) {
        return Err(ProtocolError::MissingValue { value: v });
    }
    Ok(set.range(..v).count() + 1)
}

fn distinct_senders<'a>(
    items: impl Iterator<Item = (ProcessorId, (ProcessorId, Value))> + 'a,
) -> BTreeMap<(ProcessorId, Value), BTreeSet<ProcessorId>> {
    let mut counts: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
    for (src, pair) in items {
        counts.entry(pair).or_default().insert(src);
    }
    counts
}

/// One round of the vector-building echo layer.
pub fn echo_vector_round(state: &RenamingState, round: Round, inbox: &RoundInbox, n: usize, k: usize) -> RenamingState {
    let mut next = state.clone();
    match round {
        1 => {
            next.heard = inbox
                .items()
                .filter_map(|(src, item)| match item {
                    Item::Input { value } => Some((src, *value)),
                    _ => None,
                })
                .collect();
        }
        2 => {
            let counts = distinct_senders(inbox.items().filter_map(|(src, item)| match item {
                Item::Echo1 { id, value } => Some((src, (*id, *value))),
                _ => None,
            }));
            next.echo_next = counts.into_iter().filter(|(_, s)| s.len() >= n).map(|(pair, _)| pair).collect();
        }
        _ => {
            let counts = distinct_senders(inbox.items().filter_map(|(src, item)| match item {
                Item::Echo { id, value } => Some((src, (*id, *value))),
                _ => None,
            }));
            next.echo_next.clear();
            for (pair, senders) in counts {
                if senders.len() >= n {
                    next.vector.insert(pair);
                }
                if senders.len() >= n.saturating_sub(k) {
                    next.echo_next.insert(pair);
                }
            }
        }
    }
    next
}

/// Echo layer followed by the rank-stability decision rule.
pub fn renaming_round(
    protocol: &Renaming,
    state: &RenamingState,
    round: Round,
    inbox: &RoundInbox,
) -> Result<(RenamingState, Option<Value>), ProtocolError> {
    let mut next = echo_vector_round(state, round, inbox, protocol.n, protocol.k);
    if round < 3 {
        return Ok((next, None));
    }
    let current = rank(next.v0, &next.values())?;
    let previous = next.rank_history[1];
    next.rank_history = [previous, Some(current)];
    let mut decision = None;
    if round >= 4 && round <= protocol.decision_deadline() && next.decided.is_none() {
        let r = (round - 3) as usize;
        if current == r && previous == Some(r) {
            next.decided = Some(r as Value);
            decision = Some(r as Value);
        }
    }
    Ok((next, decision))
}

impl Protocol for Renaming {
    type State = RenamingState;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Renaming { allow_weak_bound: self.allow_weak_bound }
    }

    fn init(&self, _id: ProcessorId, input: Value, _coin_seed: u64) -> RenamingState {
        RenamingState {
            v0: input,
            heard: BTreeSet::new(),
            vector: VVector::new(),
            echo_next: BTreeSet::new(),
            rank_history: [None, None],
            decided: None,
        }
    }

    fn broadcast(&self, state: &RenamingState, round: Round) -> Payload {
        match round {
            1 => Payload::single(Item::Input { value: state.v0 }),
            2 if self.fault == Some(Fault::SkipRound2Echo) => Payload::empty(),
            2 => Payload::new(state.heard.iter().map(|&(id, value)| Item::Echo1 { id, value }).collect()),
            _ => Payload::new(
                state.vector.union(&state.echo_next).map(|&(id, value)| Item::Echo { id, value }).collect(),
            ),
        }
    }

    fn step(
        &self,
        state: &RenamingState,
        round: Round,
        inbox: &RoundInbox,
    ) -> Result<Step<RenamingState>, ProtocolError> {
        let (state, decision) = renaming_round(self, state, round, inbox)?;
        Ok(Step { state, decision })
    }
}
