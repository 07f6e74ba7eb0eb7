//! Deterministic synchronous round executor.
//!
//! Every round, each processor broadcasts one payload which reaches every
//! processor (itself included). The adversary then sees all of those
//! broadcasts (it is rushing) and may inject up to `k` forged envelopes per
//! receiver. Inboxes are delivered in canonical order and every processor
//! takes one pure transition step.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, Forgery, Observation};
use crate::error::{BudgetError, ConfigError, EngineError, ProtocolError};
use crate::trace::{DecideRecord, DeliveryRecord, Trace, TraceEvent};
use crate::types::{Envelope, Origin, Payload, ProcessorId, Round, RoundInbox, Value};

/// Parameters of one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Number of processors.
    pub n: usize,
    /// Adversary budget: forged envelopes per receiver per round.
    pub k: usize,
    pub max_rounds: Round,
    pub seed: u64,
    /// Keep running after every real processor decided (needed when the
    /// adversary runs shadow instances that decide later).
    #[serde(default)]
    pub full_horizon: bool,
}

impl EngineConfig {
    pub fn new(n: usize, k: usize, max_rounds: Round, seed: u64) -> Self {
        EngineConfig { n, k, max_rounds, seed, full_horizon: false }
    }

    pub fn with_full_horizon(mut self) -> Self {
        self.full_horizon = true;
        self
    }
}

/// Which protocol a configuration is meant for, with the parameters its
/// precondition depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    Renaming { allow_weak_bound: bool },
    SetAgreement { domain_size: usize },
    BenOr,
    FullInformation,
}

/// Rejects parameter combinations outside a protocol's precondition.
pub fn validate_config(cfg: &EngineConfig, kind: ProtocolKind) -> Result<(), ConfigError> {
    if cfg.n == 0 {
        return Err(ConfigError::EmptySystem);
    }
    if cfg.max_rounds == 0 {
        return Err(ConfigError::ZeroHorizon);
    }
    let (n, k) = (cfg.n, cfg.k);
    let violated = |protocol, inequality: String| Err(ConfigError::Precondition { protocol, inequality, n, k });
    match kind {
        ProtocolKind::Renaming { allow_weak_bound: false } if n <= k * k + 2 * k => {
            violated("renaming", format!("n > k^2 + 2k = {}", k * k + 2 * k))
        }
        ProtocolKind::Renaming { allow_weak_bound: true } if n <= k * k + k => {
            violated("renaming", format!("n > k^2 + k = {}", k * k + k))
        }
        ProtocolKind::SetAgreement { domain_size: 0 } => Err(ConfigError::field("value_domain", "must not be empty")),
        ProtocolKind::SetAgreement { domain_size } if n <= domain_size * k => {
            violated("set_agreement", format!("n > |V|k = {}", domain_size * k))
        }
        ProtocolKind::BenOr if n <= 2 * k => violated("ben_or", format!("n > 2k = {}", 2 * k)),
        _ => Ok(()),
    }
}

/// Checks that no receiver is targeted by more than `k` forged envelopes.
pub fn enforce_budget(forged: &[Envelope], cfg: &EngineConfig) -> Result<(), BudgetError> {
    let mut per_receiver: BTreeMap<ProcessorId, usize> = BTreeMap::new();
    for envelope in forged {
        *per_receiver.entry(envelope.receiver).or_default() += 1;
    }
    match per_receiver.into_iter().find(|&(_, count)| count > cfg.k) {
        Some((receiver, count)) => {
            Err(BudgetError { receiver, count, budget: cfg.k, round: forged.first().map_or(0, |e| e.round) })
        }
        None => Ok(()),
    }
}

/// Output of one transition.
#[derive(Clone, Debug)]
pub struct Step<S> {
    pub state: S,
    /// Set exactly once, in the round the processor decides.
    pub decision: Option<Value>,
}

impl<S> Step<S> {
    pub fn undecided(state: S) -> Self {
        Step { state, decision: None }
    }
}

/// A deterministic round-based protocol.
///
/// The broadcast of round `r` is a function of the state at the beginning of
/// round `r`; `step` consumes that round's inbox and yields the state at the
/// beginning of round `r + 1`. Implementations must not depend on inbox
/// order or on anything but equality of processor ids.
pub trait Protocol: Clone {
    type State: Clone + fmt::Debug;

    fn kind(&self) -> ProtocolKind;

    fn init(&self, id: ProcessorId, input: Value, coin_seed: u64) -> Self::State;

    fn broadcast(&self, state: &Self::State, round: Round) -> Payload;

    fn step(&self, state: &Self::State, round: Round, inbox: &RoundInbox) -> Result<Step<Self::State>, ProtocolError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub id: ProcessorId,
    pub value: Value,
    pub round: Round,
}

/// Result of [`run_protocol`].
#[derive(Clone, Debug)]
pub struct RunOutcome<S> {
    pub decisions: Vec<Option<Decision>>,
    pub trace: Trace,
    pub rounds_run: Round,
    /// The horizon was reached with undecided processors. A reported
    /// outcome, not an error.
    pub non_termination: bool,
    pub final_states: Vec<S>,
}

impl<S> RunOutcome<S> {
    pub fn decided_values(&self) -> Vec<Option<Value>> {
        self.decisions.iter().map(|d| d.map(|d| d.value)).collect()
    }
}

/// Seed of processor slot `slot`'s private coin, derived from the run seed.
pub fn processor_seed(seed: u64, slot: usize) -> u64 {
    splitmix64(seed ^ splitmix64(slot as u64 + 1))
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One engine instance: owns all processor states for a single run.
pub struct Engine<'p, P: Protocol> {
    cfg: EngineConfig,
    protocol: &'p P,
    inputs: Vec<Value>,
    seeds: Vec<u64>,
    states: Vec<P::State>,
    decisions: Vec<Option<Decision>>,
    round: Round,
    trace: Trace,
    last_inboxes: Vec<RoundInbox>,
}

impl<'p, P: Protocol> Engine<'p, P> {
    /// Creates an engine with coin seeds derived from `cfg.seed`.
    pub fn new(cfg: EngineConfig, protocol: &'p P, inputs: Vec<Value>) -> Result<Self, EngineError> {
        let seeds = (0..cfg.n).map(|slot| processor_seed(cfg.seed, slot)).collect();
        Self::with_seeds(cfg, protocol, inputs, seeds)
    }

    /// Creates an engine with explicit per-processor coin seeds.
    pub fn with_seeds(
        cfg: EngineConfig,
        protocol: &'p P,
        inputs: Vec<Value>,
        seeds: Vec<u64>,
    ) -> Result<Self, EngineError> {
        validate_config(&cfg, protocol.kind())?;
        if inputs.len() != cfg.n {
            return Err(ConfigError::field("inputs", format!("expected {} inputs, got {}", cfg.n, inputs.len())).into());
        }
        if seeds.len() != cfg.n {
            return Err(ConfigError::field("seeds", "one coin seed per processor").into());
        }
        let states = ProcessorId::all(cfg.n).map(|id| protocol.init(id, inputs[id.slot()], seeds[id.slot()])).collect();
        Ok(Engine {
            decisions: vec![None; cfg.n],
            cfg,
            protocol,
            inputs,
            seeds,
            states,
            round: 0,
            trace: Trace::default(),
            last_inboxes: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Number of completed rounds.
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn states(&self) -> &[P::State] {
        &self.states
    }

    pub fn inputs(&self) -> &[Value] {
        &self.inputs
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn decisions(&self) -> &[Option<Decision>] {
        &self.decisions
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Inboxes delivered in the last completed round.
    pub fn last_inboxes(&self) -> &[RoundInbox] {
        &self.last_inboxes
    }

    pub fn all_decided(&self) -> bool {
        self.decisions.iter().all(Option::is_some)
    }

    /// Whether `run_protocol` would execute another round.
    pub fn should_continue(&self) -> bool {
        self.round < self.cfg.max_rounds && (self.cfg.full_horizon || !self.all_decided())
    }

    /// Executes the next round.
    pub fn run_round(&mut self, adversary: &mut dyn Adversary) -> Result<(), EngineError> {
        if self.round >= self.cfg.max_rounds {
            return Err(EngineError::HorizonReached(self.cfg.max_rounds));
        }
        let round = self.round + 1;
        let n = self.cfg.n;

        let broadcasts: Vec<Payload> = self.states.iter().map(|s| self.protocol.broadcast(s, round)).collect();

        let forgeries = adversary.forge(&Observation {
            round,
            n,
            k: self.cfg.k,
            inputs: &self.inputs,
            seeds: &self.seeds,
            broadcasts: &broadcasts,
        });
        let forged = self.forged_envelopes(round, forgeries)?;
        enforce_budget(&forged, &self.cfg)?;

        let mut per_receiver: Vec<Vec<Envelope>> = ProcessorId::all(n)
            .map(|receiver| {
                ProcessorId::all(n)
                    .map(|sender| Envelope {
                        claimed_sender: sender,
                        receiver,
                        payload: broadcasts[sender.slot()].clone(),
                        origin: Origin::Genuine,
                        round,
                    })
                    .collect()
            })
            .collect();
        for envelope in forged {
            per_receiver[envelope.receiver.slot()].push(envelope);
        }

        let mut inboxes = Vec::with_capacity(n);
        for envelopes in &mut per_receiver {
            envelopes.sort_by(|a, b| a.delivery_key().cmp(&b.delivery_key()));
            let genuine = envelopes.iter().filter(|e| e.origin == Origin::Genuine).count();
            let forged = envelopes.len() - genuine;
            assert_eq!(genuine, n, "genuine completeness violated");
            assert!(forged <= self.cfg.k, "forgery budget violated");
            for e in envelopes.iter() {
                self.trace.push(TraceEvent::Delivery(DeliveryRecord {
                    round,
                    recv: e.receiver,
                    src: e.claimed_sender,
                    forged: e.origin == Origin::Forged,
                    payload: e.payload.clone(),
                }));
            }
            inboxes.push(RoundInbox::new(envelopes.iter().map(|e| (e.claimed_sender, e.payload.clone())).collect()));
        }

        adversary.delivered(round, &inboxes);

        for id in ProcessorId::all(n) {
            let slot = id.slot();
            let step = self
                .protocol
                .step(&self.states[slot], round, &inboxes[slot])
                .map_err(|source| EngineError::Protocol { id, round, source })?;
            self.states[slot] = step.state;
            if let (Some(value), None) = (step.decision, self.decisions[slot]) {
                let decision = Decision { id, value, round };
                self.decisions[slot] = Some(decision);
                self.trace.push(TraceEvent::Decide(DecideRecord { decide: decision }));
            }
        }

        self.last_inboxes = inboxes;
        self.round = round;
        Ok(())
    }

    fn forged_envelopes(&self, round: Round, forgeries: Vec<Forgery>) -> Result<Vec<Envelope>, EngineError> {
        let n = self.cfg.n;
        forgeries
            .into_iter()
            .map(|f| {
                for id in [f.receiver, f.claimed_sender] {
                    if id.slot() >= n {
                        return Err(EngineError::UnknownProcessor { id, n });
                    }
                }
                Ok(Envelope {
                    claimed_sender: f.claimed_sender,
                    receiver: f.receiver,
                    payload: f.payload,
                    origin: Origin::Forged,
                    round,
                })
            })
            .collect()
    }

    /// Runs rounds until the horizon or until everyone decided, calling
    /// `observer` after each round.
    pub fn run_with(
        &mut self,
        adversary: &mut dyn Adversary,
        mut observer: impl FnMut(&Self),
    ) -> Result<(), EngineError> {
        while self.should_continue() {
            self.run_round(adversary)?;
            observer(self);
        }
        Ok(())
    }

    pub fn finish(self) -> RunOutcome<P::State> {
        let non_termination = !self.all_decided();
        RunOutcome {
            decisions: self.decisions,
            trace: self.trace,
            rounds_run: self.round,
            non_termination,
            final_states: self.states,
        }
    }
}

/// Runs `protocol` from `inputs` against `adversary` until every processor
/// decided or `max_rounds` elapsed.
pub fn run_protocol<P: Protocol>(
    cfg: &EngineConfig,
    protocol: &P,
    inputs: &[Value],
    adversary: &mut dyn Adversary,
) -> Result<RunOutcome<P::State>, EngineError> {
    let mut engine = Engine::new(cfg.clone(), protocol, inputs.to_vec())?;
    engine.run_with(adversary, |_| {})?;
    Ok(engine.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{NullAdversary, ScriptedAdversary};
    use crate::types::Item;

    /// Decides, in round 1, the number of entries in its inbox.
    #[derive(Clone)]
    struct InboxCounter;

    impl Protocol for InboxCounter {
        type State = (Value, Option<Value>);

        fn kind(&self) -> ProtocolKind {
            ProtocolKind::FullInformation
        }

        fn init(&self, _id: ProcessorId, input: Value, _coin_seed: u64) -> Self::State {
            (input, None)
        }

        fn broadcast(&self, state: &Self::State, _round: Round) -> Payload {
            Payload::single(Item::Input { value: state.0 })
        }

        fn step(
            &self,
            state: &Self::State,
            _round: Round,
            inbox: &RoundInbox,
        ) -> Result<Step<Self::State>, ProtocolError> {
            let size = inbox.len() as Value;
            Ok(Step { state: (state.0, Some(size)), decision: Some(size) })
        }
    }

    fn forgery(receiver: u32, sender: u32, value: Value) -> Forgery {
        Forgery {
            receiver: ProcessorId::new(receiver),
            claimed_sender: ProcessorId::new(sender),
            payload: Payload::single(Item::Input { value }),
        }
    }

    fn envelope(receiver: u32, round: Round) -> Envelope {
        Envelope {
            claimed_sender: ProcessorId::new(1),
            receiver: ProcessorId::new(receiver),
            payload: Payload::empty(),
            origin: Origin::Forged,
            round,
        }
    }

    #[test]
    fn validate_config_examples() {
        let renaming = ProtocolKind::Renaming { allow_weak_bound: false };
        assert!(validate_config(&EngineConfig::new(9, 2, 15, 0), renaming).is_ok());
        assert_eq!(validate_config(&EngineConfig::new(0, 0, 1, 0), ProtocolKind::BenOr), Err(ConfigError::EmptySystem));
        let err = validate_config(&EngineConfig::new(4, 2, 10, 0), ProtocolKind::BenOr).unwrap_err();
        assert!(err.to_string().contains("n > 2k"), "{err}");
        let err = validate_config(&EngineConfig::new(8, 2, 14, 0), renaming).unwrap_err();
        assert!(err.to_string().contains("k^2 + 2k"), "{err}");
        // The weaker bound admits n = 7, k = 2.
        let weak = ProtocolKind::Renaming { allow_weak_bound: true };
        assert!(validate_config(&EngineConfig::new(7, 2, 13, 0), weak).is_ok());
        assert!(validate_config(&EngineConfig::new(6, 2, 12, 0), weak).is_err());
        let sa = ProtocolKind::SetAgreement { domain_size: 3 };
        assert!(validate_config(&EngineConfig::new(7, 2, 2, 0), sa).is_ok());
        assert!(validate_config(&EngineConfig::new(6, 2, 2, 0), sa).is_err());
        assert_eq!(validate_config(&EngineConfig::new(3, 0, 0, 0), ProtocolKind::BenOr), Err(ConfigError::ZeroHorizon));
    }

    #[test]
    fn enforce_budget_examples() {
        let cfg1 = EngineConfig::new(3, 1, 1, 0);
        assert!(enforce_budget(&[envelope(1, 1)], &cfg1).is_ok());
        let err = enforce_budget(&[envelope(1, 1), envelope(1, 1)], &cfg1).unwrap_err();
        assert_eq!((err.receiver, err.count), (ProcessorId::new(1), 2));
        let cfg2 = EngineConfig::new(3, 2, 1, 0);
        let two_each: Vec<_> = (1..=3).flat_map(|r| [envelope(r, 1), envelope(r, 1)]).collect();
        assert!(enforce_budget(&two_each, &cfg2).is_ok());
    }

    #[test]
    fn null_adversary_inboxes_hold_n_entries() {
        let cfg = EngineConfig::new(3, 1, 1, 0);
        let out = run_protocol(&cfg, &InboxCounter, &[1, 2, 3], &mut NullAdversary).unwrap();
        assert_eq!(out.decided_values(), vec![Some(3); 3]);
    }

    #[test]
    fn one_forgery_grows_one_inbox() {
        let cfg = EngineConfig::new(3, 1, 1, 0);
        let mut adv = ScriptedAdversary::new(vec![(1, forgery(1, 2, 9))]);
        let out = run_protocol(&cfg, &InboxCounter, &[1, 2, 3], &mut adv).unwrap();
        assert_eq!(out.decided_values(), vec![Some(4), Some(3), Some(3)]);
    }

    #[test]
    fn over_budget_adversary_is_rejected() {
        let cfg = EngineConfig::new(3, 1, 1, 0);
        let mut adv = ScriptedAdversary::new(vec![(1, forgery(2, 1, 0)), (1, forgery(2, 3, 0))]);
        let err = run_protocol(&cfg, &InboxCounter, &[1, 2, 3], &mut adv).unwrap_err();
        assert!(matches!(err, EngineError::Budget(BudgetError { count: 2, .. })));
    }

    #[test]
    fn forged_envelopes_sort_after_identical_genuine_ones() {
        let cfg = EngineConfig::new(2, 1, 1, 0);
        let mut adv = ScriptedAdversary::new(vec![(1, forgery(1, 1, 5))]);
        let out = run_protocol(&cfg, &InboxCounter, &[5, 6], &mut adv).unwrap();
        let forged: Vec<bool> =
            out.trace.deliveries().filter(|d| d.recv == ProcessorId::new(1)).map(|d| d.forged).collect();
        assert_eq!(forged, vec![false, true, false]);
    }

    #[test]
    fn unknown_receiver_is_an_error() {
        let cfg = EngineConfig::new(2, 1, 1, 0);
        let mut adv = ScriptedAdversary::new(vec![(1, forgery(3, 1, 0))]);
        let err = run_protocol(&cfg, &InboxCounter, &[0, 0], &mut adv).unwrap_err();
        assert!(matches!(err, EngineError::UnknownProcessor { .. }));
    }

    #[test]
    fn processor_seeds_differ_per_slot() {
        let seeds: Vec<_> = (0..8).map(|slot| processor_seed(7, slot)).collect();
        let mut unique = seeds.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        assert_eq!(processor_seed(7, 3), seeds[3]);
    }
}
