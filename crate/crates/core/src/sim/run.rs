use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;

use super::scenario::{AdversarySpec, ProtocolChoice, ScenarioConfig};
use crate::adversary::{
    graph_adversary, null_adversary, random_forger, sybil_twin_adversary, Adversary, DuplicateSpammer,
    ScriptedAdversary,
};
use crate::engine::{splitmix64, Decision, Engine, Protocol, RunOutcome};
use crate::error::{ConfigError, EngineError};
use crate::protocols::{rank, BenOr, BenOrState, RenamingState, SetAgreementState, VVector};
use crate::trace::Trace;
use crate::types::{ProcessorId, Round, Value};

const ADVERSARY_SALT: u64 = 0x4144_5645_5253_4152;

/// Seed handed to a scenario's randomized adversary for run seed `seed`.
pub fn adversary_seed(seed: u64) -> u64 {
    splitmix64(seed ^ ADVERSARY_SALT)
}

/// Outcome of one named property check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
    /// Checked across many runs rather than required of each one.
    pub statistical: bool,
}

#[derive(Default)]
struct Checks {
    verdicts: Vec<Verdict>,
}

impl Checks {
    fn declare(&mut self, name: &'static str) {
        self.verdicts.push(Verdict { name, passed: true, detail: String::new(), statistical: false });
    }

    fn declare_statistical(&mut self, name: &'static str) {
        self.verdicts.push(Verdict { name, passed: true, detail: String::new(), statistical: true });
    }

    /// Records the first failure of `name`.
    fn fail(&mut self, name: &'static str, detail: impl FnOnce() -> String) {
        let v = self.verdicts.iter_mut().find(|v| v.name == name).expect("verdict declared");
        if v.passed {
            v.passed = false;
            v.detail = detail();
        }
    }

    fn require(&mut self, name: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.fail(name, detail);
        }
    }
}

/// Decision of a Sybil shadow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShadowOutcome {
    pub target: ProcessorId,
    pub alt_input: Value,
    pub decision: Option<Decision>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub protocol: String,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub inputs: Vec<Value>,
    pub decisions: Vec<Option<Decision>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub shadows: Vec<ShadowOutcome>,
    pub rounds_run: Round,
    pub non_termination: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub trace: Trace,
}

impl RunReport {
    /// Every per-run property holds.
    pub fn safety_ok(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed || v.statistical)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failed(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }

    pub fn decided_values(&self) -> Vec<Option<Value>> {
        self.decisions.iter().map(|d| d.map(|d| d.value)).collect()
    }

    pub fn decision_set(&self) -> BTreeSet<Value> {
        self.decisions.iter().flatten().map(|d| d.value).collect()
    }

    /// 0 when every per-run property holds, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.safety_ok() {
            0
        } else {
            1
        }
    }
}

struct Driven<S> {
    outcome: RunOutcome<S>,
    error: Option<EngineError>,
    shadows: Vec<ShadowOutcome>,
    shadow_failures: Vec<String>,
}

fn config_error(e: EngineError) -> ConfigError {
    match e {
        EngineError::Config(c) => c,
        other => ConfigError::field("scenario", other.to_string()),
    }
}

fn drive<P: Protocol + 'static>(
    scn: &ScenarioConfig,
    protocol: &P,
    script: Option<ScriptedAdversary>,
    mut observer: impl FnMut(&Engine<'_, P>),
) -> Result<Driven<P::State>, ConfigError> {
    let cfg = scn.engine_config(scn.seed);
    let mut engine = Engine::new(cfg.clone(), protocol, scn.inputs_for(scn.seed)).map_err(config_error)?;
    let adv_seed = adversary_seed(scn.seed);

    let mut twins = match (&scn.adversary, &script) {
        (AdversarySpec::SybilTwin(t), None) => Some(sybil_twin_adversary(t.clone(), protocol.clone(), scn.k)?),
        _ => None,
    };
    let mut other: Box<dyn Adversary> = match (script, &scn.adversary) {
        (Some(s), _) => Box::new(s),
        (None, AdversarySpec::Null | AdversarySpec::SybilTwin(_)) => Box::new(null_adversary()),
        (None, AdversarySpec::RandomForger(mode)) => Box::new(random_forger(adv_seed, *mode)),
        (None, AdversarySpec::DuplicateSpammer { per_receiver }) => {
            Box::new(DuplicateSpammer::new(adv_seed, *per_receiver))
        }
        (None, AdversarySpec::Graph { graph, .. }) => {
            Box::new(graph_adversary(graph, protocol.clone(), &cfg).map_err(config_error)?)
        }
    };
    let adversary: &mut dyn Adversary = match twins.as_mut() {
        Some(t) => t,
        None => other.as_mut(),
    };
    let error = engine.run_with(adversary, &mut observer).err();
    let (shadows, shadow_failures) = match &twins {
        Some(t) => (
            t.shadow_decisions()
                .into_iter()
                .map(|(spec, decision)| ShadowOutcome { target: spec.target, alt_input: spec.alt_input, decision })
                .collect(),
            t.failures().iter().map(|(id, r, e)| format!("shadow {id} failed in round {r}: {e}")).collect(),
        ),
        None => (Vec::new(), Vec::new()),
    };
    Ok(Driven { outcome: engine.finish(), error, shadows, shadow_failures })
}

fn report<S>(scn: &ScenarioConfig, driven: Driven<S>, checks: Checks, started: Instant) -> RunReport {
    let phases = (scn.protocol == ProtocolChoice::BenOr)
        .then(|| driven.outcome.decisions.iter().flatten().map(|d| BenOr::phase_of(d.round) as u32).max())
        .flatten();
    RunReport {
        protocol: scn.protocol.to_string(),
        n: scn.n,
        k: scn.k,
        seed: scn.seed,
        inputs: scn.inputs_for(scn.seed),
        decisions: driven.outcome.decisions,
        shadows: driven.shadows,
        rounds_run: driven.outcome.rounds_run,
        non_termination: driven.outcome.non_termination,
        phases,
        error: driven.error.map(|e| e.to_string()),
        verdicts: checks.verdicts,
        trace_path: None,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        trace: driven.outcome.trace,
    }
}

/// Executes a scenario with its own seed and checks every property of its
/// protocol.
pub fn run_scenario(scn: &ScenarioConfig) -> Result<RunReport, ConfigError> {
    run_inner(scn, None)
}

fn run_inner(scn: &ScenarioConfig, script: Option<ScriptedAdversary>) -> Result<RunReport, ConfigError> {
    let started = Instant::now();
    match scn.protocol {
        ProtocolChoice::Renaming => run_renaming(scn, script, started),
        ProtocolChoice::SetAgreement => run_set_agreement(scn, script, started),
        ProtocolChoice::BenOr => run_ben_or(scn, script, started),
    }
}

fn no_error<S>(checks: &mut Checks, driven: &Driven<S>) {
    if let Some(e) = &driven.error {
        checks.fail("no_protocol_error", || e.to_string());
    }
    if let Some(f) = driven.shadow_failures.first() {
        checks.fail("no_protocol_error", || f.clone());
    }
}

fn run_renaming(
    scn: &ScenarioConfig,
    script: Option<ScriptedAdversary>,
    started: Instant,
) -> Result<RunReport, ConfigError> {
    let protocol = scn.renaming();
    let (n, k) = (scn.n, scn.k);
    let inputs = scn.inputs_for(scn.seed);
    let genuine: VVector = ProcessorId::all(n).zip(inputs.iter().copied()).collect();
    let mut checks = Checks::default();
    for name in [
        "no_protocol_error",
        "termination_deadline",
        "names_in_range",
        "names_distinct",
        "order_preserving",
        "vector_bound",
        "genuine_pairs_by_round_3",
        "one_round_propagation",
        "undecided_rank_above_r",
    ] {
        checks.declare(name);
    }
    let mut previous_union: Option<VVector> = None;
    let driven = drive(scn, &protocol, script, |e| {
        let r = e.round();
        let states: &[RenamingState] = e.states();
        for (slot, s) in states.iter().enumerate() {
            checks.require("vector_bound", s.vector.len() <= n + k, || {
                format!("|V| = {} at p_{} after round {r}", s.vector.len(), slot + 1)
            });
        }
        if r == 3 {
            for (slot, s) in states.iter().enumerate() {
                checks.require("genuine_pairs_by_round_3", genuine.is_subset(&s.vector), || {
                    format!("p_{} misses a genuine pair after round 3", slot + 1)
                });
            }
        }
        if let Some(prev) = &previous_union {
            for (slot, s) in states.iter().enumerate() {
                checks.require("one_round_propagation", prev.is_subset(&s.vector), || {
                    format!("p_{} lacks a pair held by someone after round {}", slot + 1, r - 1)
                });
            }
        }
        if r >= 3 {
            previous_union = Some(states.iter().flat_map(|s| s.vector.iter().copied()).collect());
        }
        if r >= 4 && (r - 3) as usize <= n + k {
            let bound = (r - 3) as usize;
            for (slot, s) in states.iter().enumerate() {
                if e.decisions()[slot].is_some() {
                    continue;
                }
                if let Ok(current) = rank(s.v0, &s.values()) {
                    checks.require("undecided_rank_above_r", current > bound, || {
                        format!("p_{} undecided after round {r} with rank {current}", slot + 1)
                    });
                }
            }
        }
    })?;
    no_error(&mut checks, &driven);

    let deadline = protocol.decision_deadline();
    let decisions = &driven.outcome.decisions;
    let late = decisions.iter().enumerate().find(|(_, d)| d.is_none_or(|d| d.round > deadline));
    checks.require("termination_deadline", late.is_none(), || {
        format!("p_{} undecided at the end of round {deadline}", late.map_or(0, |(s, _)| s + 1))
    });
    let names: Vec<(Value, Value)> =
        decisions.iter().enumerate().filter_map(|(s, d)| d.map(|d| (inputs[s], d.value))).collect();
    let range = 1..=(n + k) as Value;
    checks.require("names_in_range", names.iter().all(|(_, name)| range.contains(name)), || {
        format!("names {names:?} leave 1..={}", n + k)
    });
    let distinct: BTreeSet<Value> = names.iter().map(|&(_, name)| name).collect();
    checks.require("names_distinct", distinct.len() == names.len(), || format!("duplicate names in {names:?}"));
    checks.require("order_preserving", is_order_preserving(&names), || format!("order broken in {names:?}"));

    if !driven.shadows.is_empty() {
        let mut all = names.clone();
        all.extend(driven.shadows.iter().filter_map(|s| s.decision.map(|d| (s.alt_input, d.value))));
        let all_inputs: BTreeSet<Value> =
            inputs.iter().copied().chain(driven.shadows.iter().map(|s| s.alt_input)).collect();
        if all_inputs.len() == n + driven.shadows.len() {
            checks.declare("instances_decided");
            checks.declare("instances_distinct");
            checks.declare("instances_order_preserving");
            checks.require("instances_decided", all.len() == all_inputs.len(), || {
                format!("{} of {} instances decided", all.len(), all_inputs.len())
            });
            let names: BTreeSet<Value> = all.iter().map(|&(_, name)| name).collect();
            checks.require(
                "instances_distinct",
                names.len() == all.len() && names.iter().all(|x| range.contains(x)),
                || format!("instance names {all:?}"),
            );
            checks.require("instances_order_preserving", is_order_preserving(&all), || {
                format!("instance order broken in {all:?}")
            });
        }
    }
    Ok(report(scn, driven, checks, started))
}

/// `(input, name)` pairs: names must sort like inputs.
fn is_order_preserving(pairs: &[(Value, Value)]) -> bool {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    sorted.windows(2).all(|w| w[0].0 == w[1].0 || w[0].1 < w[1].1)
}

fn run_set_agreement(
    scn: &ScenarioConfig,
    script: Option<ScriptedAdversary>,
    started: Instant,
) -> Result<RunReport, ConfigError> {
    let protocol = scn.set_agreement();
    let inputs = scn.inputs_for(scn.seed);
    let mut checks = Checks::default();
    for name in
        ["no_protocol_error", "termination", "decision_set_bound", "validity", "m_nonempty", "common_values_in_m"]
    {
        checks.declare(name);
    }
    let driven = drive(scn, &protocol, script, |_| {})?;
    no_error(&mut checks, &driven);
    let decisions = &driven.outcome.decisions;
    checks.require("termination", decisions.iter().all(Option::is_some), || "undecided processors".into());
    let set: BTreeSet<Value> = decisions.iter().flatten().map(|d| d.value).collect();
    checks.require("decision_set_bound", set.len() <= scn.k + 1, || {
        format!("{} distinct decisions {set:?} exceed k + 1 = {}", set.len(), scn.k + 1)
    });
    let input_set: BTreeSet<Value> = inputs.iter().copied().collect();
    checks.require("validity", set.is_subset(&input_set), || format!("decisions {set:?} vs inputs {input_set:?}"));
    let states: &[SetAgreementState] = &driven.outcome.final_states;
    if driven.outcome.rounds_run >= 2 {
        checks.require("m_nonempty", states.iter().all(|s| !s.m.is_empty()), || "some M is empty".into());
        for v in &input_set {
            if inputs.iter().filter(|&x| x == v).count() > scn.k {
                checks.require("common_values_in_m", states.iter().all(|s| s.m.contains(v)), || {
                    format!("value {v} held by more than k processors is missing from some M")
                });
            }
        }
    }
    Ok(report(scn, driven, checks, started))
}

fn run_ben_or(
    scn: &ScenarioConfig,
    script: Option<ScriptedAdversary>,
    started: Instant,
) -> Result<RunReport, ConfigError> {
    let protocol = scn.ben_or();
    let inputs = scn.inputs_for(scn.seed);
    let k = scn.k;
    let mut checks = Checks::default();
    for name in ["no_protocol_error", "agreement", "validity", "decision_stable", "filter_drop_bound"] {
        checks.declare(name);
    }
    let unanimous = inputs.windows(2).all(|w| w[0] == w[1]);
    if unanimous {
        checks.declare("unanimous_fast_path");
    }
    checks.declare_statistical("termination");
    let driven = drive(scn, &protocol, script, |e| {
        let r = e.round();
        for (slot, inbox) in e.last_inboxes().iter().enumerate() {
            let mut seen = BTreeSet::new();
            let dup: BTreeSet<ProcessorId> =
                inbox.entries().iter().filter(|(s, _)| !seen.insert(*s)).map(|(s, _)| *s).collect();
            checks.require("filter_drop_bound", dup.len() <= k, || {
                format!("{} ids dropped at p_{} in round {r}", dup.len(), slot + 1)
            });
        }
        let states: &[BenOrState] = e.states();
        for (slot, d) in e.decisions().iter().enumerate() {
            if let Some(d) = d {
                let s = &states[slot];
                checks.require("decision_stable", s.decided == Some(d.value) && s.x == d.value, || {
                    format!("p_{} drifted from its decision {} in round {r}", slot + 1, d.value)
                });
            }
        }
    })?;
    no_error(&mut checks, &driven);
    let decisions = &driven.outcome.decisions;
    let set: BTreeSet<Value> = decisions.iter().flatten().map(|d| d.value).collect();
    checks.require("agreement", set.len() <= 1, || format!("decisions {set:?}"));
    checks.require("validity", set.iter().all(|v| inputs.contains(v)), || {
        format!("decisions {set:?} vs inputs {inputs:?}")
    });
    if unanimous {
        let ok = decisions.iter().all(|d| d.is_some_and(|d| d.value == inputs[0] && d.round == 2));
        checks.require("unanimous_fast_path", ok, || format!("unanimous input {} not decided in phase 1", inputs[0]));
    }
    checks.require("termination", decisions.iter().all(Option::is_some), || {
        format!("undecided after {} phases", driven.outcome.rounds_run / 2)
    });
    Ok(report(scn, driven, checks, started))
}

/// Result of re-running a scenario against the forgeries of a trace.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub decisions_match: bool,
    pub trace_identical: bool,
    pub original: Vec<Decision>,
    pub replayed: Vec<Decision>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.decisions_match && self.trace_identical
    }
}

/// Replays the forged envelopes recorded in `trace` against `scn`.
pub fn replay_trace(scn: &ScenarioConfig, trace: &Trace) -> Result<ReplayReport, ConfigError> {
    let script = ScriptedAdversary::new(trace.forgeries());
    let rerun = run_inner(scn, Some(script))?;
    let original: Vec<Decision> = trace.decisions().copied().collect();
    let replayed: Vec<Decision> = rerun.trace.decisions().copied().collect();
    Ok(ReplayReport {
        decisions_match: original == replayed,
        trace_identical: rerun.trace.to_jsonl() == trace.to_jsonl(),
        original,
        replayed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::parse_scenario;

    fn scenario(text: &str) -> ScenarioConfig {
        parse_scenario(text, None).unwrap()
    }

    #[test]
    fn twin_scenario_fills_the_namespace() {
        let scn = scenario(
            r#"
schema = 1
protocol = "renaming"
n = 9
k = 2
inputs = [1, 2, 3, 4, 5, 6, 7, 8, 9]
[adversary]
kind = "sybil_twin"
twins = [{ target = "p_1", alt_input = 10 }, { target = "p_2", alt_input = 11 }]
"#,
        );
        let report = run_scenario(&scn).unwrap();
        assert!(report.all_passed(), "{:?}", report.failed());
        let mut names: Vec<Value> = report.decisions.iter().map(|d| d.unwrap().value).collect();
        names.extend(report.shadows.iter().map(|s| s.decision.unwrap().value));
        names.sort();
        assert_eq!(names, (1..=11).collect::<Vec<_>>());
    }

    #[test]
    fn faulty_variant_is_flagged() {
        let scn = scenario(
            "schema = 1\nprotocol = \"renaming\"\nn = 4\nk = 1\ninputs = [4, 3, 2, 1]\ntest_hook = \"skip_round2_echo\"\n",
        );
        let report = run_scenario(&scn).unwrap();
        assert_eq!(report.exit_code(), 1);
        assert!(report.failed().iter().any(|v| v.name == "no_protocol_error"));
    }

    #[test]
    fn set_agreement_random_forger_run() {
        let scn = scenario(
            "schema = 1\nprotocol = \"set_agreement\"\nn = 7\nk = 2\nvalue_domain = [0, 1, 2]\ninputs = [0, 1, 2, 0, 1, 2, 0]\nseed = 7\n[adversary]\nkind = \"random_forger\"\nmode = \"mutate\"\n",
        );
        let report = run_scenario(&scn).unwrap();
        assert!(report.all_passed(), "{:?}", report.failed());
        assert!(report.decision_set().len() <= 3);
    }

    #[test]
    fn replay_reproduces_the_run() {
        let scn = scenario(
            "schema = 1\nprotocol = \"ben_or\"\nn = 5\nk = 2\ninputs = [0, 0, 1, 1, 1]\nmax_phases = 60\nseed = 11\n[adversary]\nkind = \"duplicate_spammer\"\nper_receiver = 2\n",
        );
        let report = run_scenario(&scn).unwrap();
        assert!(report.all_passed(), "{:?}", report.failed());
        let replay = replay_trace(&scn, &report.trace).unwrap();
        assert!(replay.matches());
        let other = run_scenario(&scn.with_seed(12)).unwrap();
        assert!(!replay_trace(&scn, &other.trace).unwrap().trace_identical);
    }
}
