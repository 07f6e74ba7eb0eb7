//! Pluggable k-adversary strategies.
//!
//! An adversary is rushing and omniscient: before choosing its forgeries for
//! a round it sees every input, every coin seed and every genuine broadcast
//! of that round. After delivery it also sees every inbox. Its only power is
//! to add envelopes; it can never suppress a genuine one.

mod graph;
mod random;
mod sybil;

pub use graph::{graph_adversary, GraphAdversary, ShadowRecord};
pub use random::{random_forger, DuplicateSpammer, PayloadMode, RandomForger};
pub use sybil::{sybil_twin_adversary, SybilTwin, TwinSpec};

use crate::types::{Payload, ProcessorId, Round, RoundInbox, Value};

/// One forged envelope the adversary wants delivered this round.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Forgery {
    pub receiver: ProcessorId,
    pub claimed_sender: ProcessorId,
    pub payload: Payload,
}

/// Everything the adversary sees before forging in a round.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub round: Round,
    pub n: usize,
    pub k: usize,
    pub inputs: &'a [Value],
    pub seeds: &'a [u64],
    /// Genuine broadcast of each processor this round, by slot.
    pub broadcasts: &'a [Payload],
}

pub trait Adversary {
    /// Forgeries for `obs.round`. The engine rejects batches over budget.
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery>;

    /// Called with every processor's inbox once the round is delivered.
    fn delivered(&mut self, _round: Round, _inboxes: &[RoundInbox]) {}
}

impl<A: Adversary + ?Sized> Adversary for &mut A {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        (**self).forge(obs)
    }

    fn delivered(&mut self, round: Round, inboxes: &[RoundInbox]) {
        (**self).delivered(round, inboxes)
    }
}

impl<A: Adversary + ?Sized> Adversary for Box<A> {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        (**self).forge(obs)
    }

    fn delivered(&mut self, round: Round, inboxes: &[RoundInbox]) {
        (**self).delivered(round, inboxes)
    }
}

/// Never forges anything: failure-free executions.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullAdversary;

pub fn null_adversary() -> NullAdversary {
    NullAdversary
}

impl Adversary for NullAdversary {
    fn forge(&mut self, _obs: &Observation<'_>) -> Vec<Forgery> {
        Vec::new()
    }
}

/// Replays a fixed list of `(round, forgery)` pairs. Used for trace replay
/// and exhaustive enumeration of small adversaries.
#[derive(Clone, Debug, Default)]
pub struct ScriptedAdversary {
    script: Vec<(Round, Forgery)>,
}

impl ScriptedAdversary {
    pub fn new(script: Vec<(Round, Forgery)>) -> Self {
        ScriptedAdversary { script }
    }
}

impl Adversary for ScriptedAdversary {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        self.script.iter().filter(|(round, _)| *round == obs.round).map(|(_, f)| f.clone()).collect()
    }
}

/// Runs `inner` in a world whose processor ids are permuted.
///
/// `perm[slot]` is the id that original processor `p_{slot+1}` carries in the
/// relabeled run. The inner strategy sees observations translated back to
/// the original labels, so an execution under `Relabeled` is the image under
/// the permutation of the original execution.
pub struct Relabeled<A> {
    inner: A,
    forward: Vec<ProcessorId>,
    backward: Vec<ProcessorId>,
}

impl<A: Adversary> Relabeled<A> {
    pub fn new(inner: A, perm: Vec<ProcessorId>) -> Self {
        let mut backward = vec![ProcessorId::new(1); perm.len()];
        for (slot, image) in perm.iter().enumerate() {
            backward[image.slot()] = ProcessorId::from_slot(slot);
        }
        Relabeled { inner, forward: perm, backward }
    }

    pub fn into_inner(self) -> A {
        self.inner
    }
}

impl<A: Adversary> Adversary for Relabeled<A> {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        let back = |id: ProcessorId| self.backward[id.slot()];
        let fwd = |id: ProcessorId| self.forward[id.slot()];
        let slots: Vec<usize> = self.forward.iter().map(|id| id.slot()).collect();
        let inputs: Vec<Value> = slots.iter().map(|&s| obs.inputs[s]).collect();
        let seeds: Vec<u64> = slots.iter().map(|&s| obs.seeds[s]).collect();
        let broadcasts: Vec<Payload> = slots.iter().map(|&s| obs.broadcasts[s].map_ids(&back)).collect();
        let original = Observation { inputs: &inputs, seeds: &seeds, broadcasts: &broadcasts, ..*obs };
        self.inner
            .forge(&original)
            .into_iter()
            .map(|f| Forgery {
                receiver: fwd(f.receiver),
                claimed_sender: fwd(f.claimed_sender),
                payload: f.payload.map_ids(&fwd),
            })
            .collect()
    }

    fn delivered(&mut self, round: Round, inboxes: &[RoundInbox]) {
        let back = |id: ProcessorId| self.backward[id.slot()];
        let original: Vec<RoundInbox> = self
            .forward
            .iter()
            .map(|id| {
                RoundInbox::canonical(
                    inboxes[id.slot()].entries().iter().map(|(src, p)| (back(*src), p.map_ids(&back))).collect(),
                )
            })
            .collect();
        self.inner.delivered(round, &original);
    }
}
