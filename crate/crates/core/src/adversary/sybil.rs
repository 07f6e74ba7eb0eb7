use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Adversary, Forgery, Observation};
use crate::engine::{splitmix64, Decision, Protocol};
use crate::error::{ConfigError, ProtocolError};
use crate::types::{Payload, ProcessorId, Round, RoundInbox, Value};

const TWIN_SALT: u64 = 0x5457_494e_5f43_4f49;

/// A stolen identity: the adversary runs a faithful copy of the protocol
/// under `target`'s id, started from `alt_input`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinSpec {
    pub target: ProcessorId,
    pub alt_input: Value,
}

struct Shadow<S> {
    spec: TwinSpec,
    state: Option<S>,
    outbox: Option<Payload>,
    decision: Option<Decision>,
}

/// Stolen-identity Sybil attack.
///
/// Each shadow is a protocol instance that receives exactly what every real
/// processor receives (all genuine broadcasts plus every shadow's broadcast,
/// its own included) and whose broadcast reaches every processor tagged with
/// the stolen id. Each receiver therefore gets `twins.len()` forgeries per
/// round.
pub struct SybilTwin<P: Protocol> {
    protocol: P,
    shadows: Vec<Shadow<P::State>>,
    genuine: Vec<Payload>,
    failures: Vec<(ProcessorId, Round, ProtocolError)>,
}

/// Builds the twin strategy. `twins` must have distinct targets and at most
/// `k` entries.
pub fn sybil_twin_adversary<P: Protocol>(
    twins: Vec<TwinSpec>,
    protocol: P,
    k: usize,
) -> Result<SybilTwin<P>, ConfigError> {
    if twins.len() > k {
        return Err(ConfigError::field("adversary.twins", format!("{} twins exceed the budget k = {k}", twins.len())));
    }
    let targets: BTreeSet<_> = twins.iter().map(|t| t.target).collect();
    if targets.len() != twins.len() {
        return Err(ConfigError::field("adversary.twins", "twin targets must be distinct"));
    }
    Ok(SybilTwin {
        protocol,
        shadows: twins.into_iter().map(|spec| Shadow { spec, state: None, outbox: None, decision: None }).collect(),
        genuine: Vec::new(),
        failures: Vec::new(),
    })
}

impl<P: Protocol> SybilTwin<P> {
    pub fn twins(&self) -> Vec<TwinSpec> {
        self.shadows.iter().map(|s| s.spec).collect()
    }

    /// Decision of each shadow, in twin order.
    pub fn shadow_decisions(&self) -> Vec<(TwinSpec, Option<Decision>)> {
        self.shadows.iter().map(|s| (s.spec, s.decision)).collect()
    }

    /// Shadow states, in twin order. `None` before round 1 or after a failure.
    pub fn shadow_states(&self) -> Vec<Option<&P::State>> {
        self.shadows.iter().map(|s| s.state.as_ref()).collect()
    }

    pub fn failures(&self) -> &[(ProcessorId, Round, ProtocolError)] {
        &self.failures
    }
}

impl<P: Protocol> Adversary for SybilTwin<P> {
    fn forge(&mut self, obs: &Observation<'_>) -> Vec<Forgery> {
        if obs.round == 1 {
            for shadow in &mut self.shadows {
                let target = shadow.spec.target;
                let seed = obs.seeds.get(target.slot()).map_or(0, |s| splitmix64(s ^ TWIN_SALT));
                shadow.state = Some(self.protocol.init(target, shadow.spec.alt_input, seed));
            }
        }
        self.genuine = obs.broadcasts.to_vec();
        let mut out = Vec::new();
        for shadow in &mut self.shadows {
            shadow.outbox = shadow.state.as_ref().map(|s| self.protocol.broadcast(s, obs.round));
            if let Some(payload) = &shadow.outbox {
                out.extend(ProcessorId::all(obs.n).map(|receiver| Forgery {
                    receiver,
                    claimed_sender: shadow.spec.target,
                    payload: payload.clone(),
                }));
            }
        }
        out
    }

    fn delivered(&mut self, round: Round, _inboxes: &[RoundInbox]) {
        let mut entries: Vec<(ProcessorId, Payload)> =
            self.genuine.iter().enumerate().map(|(slot, p)| (ProcessorId::from_slot(slot), p.clone())).collect();
        entries.extend(self.shadows.iter().filter_map(|s| s.outbox.clone().map(|p| (s.spec.target, p))));
        let inbox = RoundInbox::canonical(entries);
        for shadow in &mut self.shadows {
            let Some(state) = shadow.state.take() else { continue };
            match self.protocol.step(&state, round, &inbox) {
                Ok(step) => {
                    if let (Some(value), None) = (step.decision, shadow.decision) {
                        shadow.decision = Some(Decision { id: shadow.spec.target, value, round });
                    }
                    shadow.state = Some(step.state);
                }
                Err(e) => self.failures.push((shadow.spec.target, round, e)),
            }
        }
    }
}
