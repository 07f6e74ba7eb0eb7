use serde::Serialize;

use super::{Adversary, Forgery, Observation};
use crate::chain::{validate_graph, CommGraph, Label};
use crate::engine::{EngineConfig, Protocol};
use crate::error::{EngineError, ProtocolError};
use crate::types::{Payload, ProcessorId, Round, RoundInbox};

/// What the enacted processor sent in one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShadowRecord {
    pub round: Round,
    pub identity: ProcessorId,
    pub payload: Payload,
    pub recipients: Vec<ProcessorId>,
}

/// Drives a 1-adversary execution described by a communication graph.
///
/// The adversary keeps a replica of every processor (it sees all inputs,
/// seeds and inboxes) so that it can compute inverse states. After round `r`
/// it sets its own state from the label of `<Adv, r>` and in round `r + 1`
/// sends that state's broadcast, tagged with the impersonated id, along the
/// edges `(r + 1, p_j)`.
pub struct GraphAdversary<P: Protocol> {
    graph: CommGraph,
    protocol: P,
    replicas: Vec<P::State>,
    shadow: Option<(ProcessorId, P::State)>,
    pending: Option<(ProcessorId, Payload)>,
    records: Vec<ShadowRecord>,
    failure: Option<(Round, ProtocolError)>,
}

pub fn graph_adversary<P: Protocol>(
    graph: &CommGraph,
    protocol: P,
    cfg: &EngineConfig,
) -> Result<GraphAdversary<P>, EngineError> {
    let violations = validate_graph(graph);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(EngineError::GraphMismatch(text.join("; ")));
    }
    if graph.n != cfg.n || graph.rounds != cfg.max_rounds {
        return Err(EngineError::GraphMismatch(format!(
            "graph has n={}, R={} but run has n={}, max_rounds={}",
            graph.n, graph.rounds, cfg.n, cfg.max_rounds
        )));
    }
    if cfg.k == 0 {
        return Err(EngineError::GraphMismatch("graph executions need k >= 1".into()));
    }
    Ok(GraphAdversary {
        graph: graph.clone(),
        protocol,
        replicas: Vec::new(),
        shadow: None,
        pending: None,
        records: Vec::new(),
        failure: None,
    })
}

impl<P: Protocol> GraphAdversary<P> {
    pub fn records(&self) -> &[ShadowRecord] {
        &self.records
    }

    /// The enacted processor's identity and state after the last round.
    pub fn shadow(&self) -> Option<&(ProcessorId, P::State)> {
        self.shadow.as_ref()
    }

    pub fn failure(&self) -> Option<&(Round, ProtocolError)> {
        self.failure.as_ref()
    }

    fn next_shadow(
        &self,
        round: Round,
        previous: &[P::State],
        inboxes: &[RoundInbox],
    ) -> Result<Option<(ProcessorId, P::State)>, ProtocolError> {
        match self.graph.label(round) {
            None => Ok(None),
            Some(Label::Proc(id)) => {
                let Some(message) = &self.pending else {
                    return Ok(Some((id, self.replicas[id.slot()].clone())));
                };
                let mut inbox = inboxes[id.slot()].clone();
                if self.graph.has_edge(round, id) {
                    inbox.remove_one(message);
                } else {
                    inbox.push(message.clone());
                }
                let step = self.protocol.step(&previous[id.slot()], round, &inbox)?;
                Ok(Some((id, step.state)))
            }
            Some(Label::A) => match &self.shadow {
                Some((id, state)) => {
                    let step = self.protocol.step(state, round, &inboxes[id.slot()])?;
                    Ok(Some((*id, step.state)))
                }
                None => Ok(None),
            },
        }
    }
}

impl<P: Protocol> Adversary for GraphAdversary<P> {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        if obs.round == 1 {
            self.replicas = ProcessorId::all(obs.n)
                .map(|id| self.protocol.init(id, obs.inputs[id.slot()], obs.seeds[id.slot()]))
                .collect();
            self.shadow = match self.graph.label(0) {
                Some(Label::Proc(id)) => {
                    let flipped = obs.inputs[id.slot()] ^ 1;
                    Some((id, self.protocol.init(id, flipped, obs.seeds[id.slot()])))
                }
                _ => None,
            };
        }
        self.pending = self.shadow.as_ref().map(|(id, s)| (*id, self.protocol.broadcast(s, obs.round)));
        let Some((identity, payload)) = self.pending.clone() else {
            return Vec::new();
        };
        let recipients: Vec<ProcessorId> =
            ProcessorId::all(obs.n).filter(|&j| self.graph.has_edge(obs.round, j)).collect();
        self.records.push(ShadowRecord {
            round: obs.round,
            identity,
            payload: payload.clone(),
            recipients: recipients.clone(),
        });
        recipients
            .into_iter()
            .map(|receiver| Forgery { receiver, claimed_sender: identity, payload: payload.clone() })
            .collect()
    }

    fn delivered(&mut self, round: Round, inboxes: &[RoundInbox]) {
        let mut next = Vec::with_capacity(self.replicas.len());
        for (slot, state) in self.replicas.iter().enumerate() {
            match self.protocol.step(state, round, &inboxes[slot]) {
                Ok(step) => next.push(step.state),
                Err(e) => {
                    self.failure.get_or_insert((round, e));
                    return;
                }
            }
        }
        let previous = std::mem::replace(&mut self.replicas, next);
        match self.next_shadow(round, &previous, inboxes) {
            Ok(shadow) => self.shadow = shadow,
            Err(e) => {
                self.failure.get_or_insert((round, e));
                self.shadow = None;
            }
        }
    }
}
