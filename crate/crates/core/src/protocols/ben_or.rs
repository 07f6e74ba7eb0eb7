use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Protocol, ProtocolKind, Step};
use crate::error::ProtocolError;
use crate::types::{Item, Payload, ProcessorId, Round, RoundInbox, Value};

/// Drops every entry whose claimed sender appears more than once.
///
/// Every genuine sender appears exactly once, so whatever survives is
/// genuine and at most `k` senders are lost, as in an asynchronous round
/// with `k` crashes.
pub fn async_filter(inbox: &RoundInbox) -> RoundInbox {
    let mut seen: BTreeMap<ProcessorId, usize> = BTreeMap::new();
    for (src, _) in inbox.entries() {
        *seen.entry(*src).or_default() += 1;
    }
    RoundInbox::new(inbox.entries().iter().filter(|(src, _)| seen[src] == 1).cloned().collect())
}

/// Randomized binary consensus run on top of [`async_filter`].
///
/// Each phase takes two rounds. Odd rounds carry reports, even rounds
/// proposals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenOr {
    pub n: usize,
    pub k: usize,
}

impl BenOr {
    pub fn new(n: usize, k: usize) -> Self {
        BenOr { n, k }
    }

    pub fn rounds_for(max_phases: u32) -> Round {
        2 * max_phases
    }

    pub fn phase_of(round: Round) -> Value {
        round.div_ceil(2) as Value
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenOrState {
    pub x: Value,
    pub phase: Value,
    /// What to propose in the coming proposal round.
    pub proposal: Option<Value>,
    pub decided: Option<Value>,
    pub coin_seed: u64,
}

fn coin(seed: u64, phase: Value) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase);
    rng.gen_bool(0.5) as Value
}

pub fn ben_or_round(
    protocol: &BenOr,
    state: &BenOrState,
    round: Round,
    inbox: &RoundInbox,
) -> (BenOrState, Option<Value>) {
    let filtered = async_filter(inbox);
    let phase = BenOr::phase_of(round);
    let mut next = state.clone();
    next.phase = phase;
    let mut counts: BTreeMap<Value, usize> = BTreeMap::new();
    if round % 2 == 1 {
        for (_, item) in filtered.items() {
            if let Item::BrReport { phase: p, value } = item {
                if *p == phase {
                    *counts.entry(*value).or_default() += 1;
                }
            }
        }
        next.proposal = counts.into_iter().find(|&(_, c)| 2 * c > protocol.n).map(|(v, _)| v);
        return (next, None);
    }
    for (_, item) in filtered.items() {
        if let Item::BrPropose { phase: p, value: Some(value) } = item {
            if *p == phase {
                *counts.entry(*value).or_default() += 1;
            }
        }
    }
    next.proposal = None;
    let best = counts.iter().max_by_key(|&(v, c)| (*c, std::cmp::Reverse(*v))).map(|(v, c)| (*v, *c));
    let mut decision = None;
    match best {
        Some((v, c)) if c > protocol.k => {
            if next.decided.is_none() {
                next.decided = Some(v);
                decision = Some(v);
            }
            next.x = v;
        }
        Some((v, _)) => next.x = v,
        None => next.x = coin(state.coin_seed, phase),
    }
    if let Some(d) = next.decided {
        next.x = d;
    }
    (next, decision)
}

impl Protocol for BenOr {
    type State = BenOrState;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::BenOr
    }

    fn init(&self, _id: ProcessorId, input: Value, coin_seed: u64) -> BenOrState {
        BenOrState { x: input, phase: 0, proposal: None, decided: None, coin_seed }
    }

    fn broadcast(&self, state: &BenOrState, round: Round) -> Payload {
        let phase = BenOr::phase_of(round);
        if round % 2 == 1 {
            Payload::single(Item::BrReport { phase, value: state.x })
        } else {
            Payload::single(Item::BrPropose { phase, value: state.proposal })
        }
    }

    fn step(&self, state: &BenOrState, round: Round, inbox: &RoundInbox) -> Result<Step<BenOrState>, ProtocolError> {
        let (state, decision) = ben_or_round(self, state, round, inbox);
        Ok(Step { state, decision })
    }
}
