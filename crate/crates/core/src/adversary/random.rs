use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adversary, Forgery, Observation};
use crate::types::{Item, Payload, ProcessorId, Value};

/// How the random forger picks payload content.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadMode {
    /// Re-send a genuine payload observed this round.
    Replay,
    /// Re-send an observed payload with some fields resampled from the
    /// values seen this round.
    Mutate,
}

/// Per receiver per round, forges a uniform number `0..=k` of envelopes with
/// uniformly chosen claimed senders and payloads drawn from what the genuine
/// processors broadcast this round.
pub struct RandomForger {
    rng: ChaCha8Rng,
    mode: PayloadMode,
}

pub fn random_forger(seed: u64, mode: PayloadMode) -> RandomForger {
    RandomForger { rng: ChaCha8Rng::seed_from_u64(seed), mode }
}

#[derive(Default)]
struct Alphabet {
    values: Vec<Value>,
    phases: Vec<Value>,
}

impl Alphabet {
    fn observe(payloads: &[Payload]) -> Self {
        let mut values = BTreeSet::new();
        let mut phases = BTreeSet::new();
        for item in payloads.iter().flat_map(|p| p.items()) {
            match item {
                Item::Input { value }
                | Item::Echo1 { value, .. }
                | Item::Echo { value, .. }
                | Item::SaVal { value }
                | Item::SaEcho { value }
                | Item::Decided { value } => {
                    values.insert(*value);
                }
                Item::BrReport { phase, value } => {
                    phases.insert(*phase);
                    values.insert(*value);
                }
                Item::BrPropose { phase, value } => {
                    phases.insert(*phase);
                    values.extend(value);
                }
                Item::FullInfo { .. } => {}
            }
        }
        Alphabet { values: values.into_iter().collect(), phases: phases.into_iter().collect() }
    }
}

fn pick(rng: &mut ChaCha8Rng, from: &[Value], fallback: Value) -> Value {
    from.choose(rng).copied().unwrap_or(fallback)
}

fn mutate_item(item: &Item, n: usize, alphabet: &Alphabet, rng: &mut ChaCha8Rng) -> Item {
    let id = |rng: &mut ChaCha8Rng| ProcessorId::from_slot(rng.gen_range(0..n));
    let first_field = rng.gen_bool(0.5);
    match item.clone() {
        Item::Input { value } => Item::Input { value: pick(rng, &alphabet.values, value) },
        Item::Echo1 { value, .. } if first_field => Item::Echo1 { id: id(rng), value },
        Item::Echo1 { id: p, value } => Item::Echo1 { id: p, value: pick(rng, &alphabet.values, value) },
        Item::Echo { value, .. } if first_field => Item::Echo { id: id(rng), value },
        Item::Echo { id: p, value } => Item::Echo { id: p, value: pick(rng, &alphabet.values, value) },
        Item::SaVal { value } => Item::SaVal { value: pick(rng, &alphabet.values, value) },
        Item::SaEcho { value } => Item::SaEcho { value: pick(rng, &alphabet.values, value) },
        Item::Decided { value } => Item::Decided { value: pick(rng, &alphabet.values, value) },
        Item::BrReport { phase, value } if first_field => {
            Item::BrReport { phase: pick(rng, &alphabet.phases, phase), value }
        }
        Item::BrReport { phase, value } => Item::BrReport { phase, value: pick(rng, &alphabet.values, value) },
        Item::BrPropose { phase, value } if first_field => {
            Item::BrPropose { phase: pick(rng, &alphabet.phases, phase), value }
        }
        Item::BrPropose { phase, .. } => {
            // index == len stands for the empty proposal
            let slot = rng.gen_range(0..=alphabet.values.len());
            Item::BrPropose { phase, value: alphabet.values.get(slot).copied() }
        }
        full @ Item::FullInfo { .. } => full,
    }
}

fn mutate(payload: &Payload, n: usize, alphabet: &Alphabet, rng: &mut ChaCha8Rng) -> Payload {
    Payload::new(
        payload
            .items()
            .iter()
            .map(|item| if rng.gen_bool(0.5) { mutate_item(item, n, alphabet, rng) } else { item.clone() })
            .collect(),
    )
}

impl Adversary for RandomForger {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        let alphabet = match self.mode {
            PayloadMode::Replay => Alphabet::default(),
            PayloadMode::Mutate => Alphabet::observe(obs.broadcasts),
        };
        let mut out = Vec::new();
        for receiver in ProcessorId::all(obs.n) {
            let count = self.rng.gen_range(0..=obs.k);
            for _ in 0..count {
                let claimed_sender = ProcessorId::from_slot(self.rng.gen_range(0..obs.n));
                let source = &obs.broadcasts[self.rng.gen_range(0..obs.n)];
                let payload = match self.mode {
                    PayloadMode::Replay => source.clone(),
                    PayloadMode::Mutate => mutate(source, obs.n, &alphabet, &mut self.rng),
                };
                out.push(Forgery { receiver, claimed_sender, payload });
            }
        }
        out
    }
}

/// Sends every receiver exact copies of the genuine broadcasts of `per_receiver`
/// distinct, randomly chosen senders (capped at `k`), so that those senders
/// appear twice in its inbox.
pub struct DuplicateSpammer {
    rng: ChaCha8Rng,
    per_receiver: usize,
}

impl DuplicateSpammer {
    pub fn new(seed: u64, per_receiver: usize) -> Self {
        DuplicateSpammer { rng: ChaCha8Rng::seed_from_u64(seed), per_receiver }
    }
}

impl Adversary for DuplicateSpammer {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        let count = self.per_receiver.min(obs.k).min(obs.n);
        let mut out = Vec::new();
        for receiver in ProcessorId::all(obs.n) {
            let mut picked = index::sample(&mut self.rng, obs.n, count).into_vec();
            picked.sort_unstable();
            for slot in picked {
                out.push(Forgery {
                    receiver,
                    claimed_sender: ProcessorId::from_slot(slot),
                    payload: obs.broadcasts[slot].clone(),
                });
            }
        }
        out
    }
}
