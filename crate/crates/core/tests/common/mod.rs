#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use impsim::adversary::{random_forger, Adversary, PayloadMode, Relabeled, ScriptedAdversary};
use impsim::chain::{build_full_chain, execute_graph, interpret_graph, strawman_scan, Chain, CommGraph};
use impsim::protocols::{BenOr, FullInformation, Renaming, RenamingState, SetAgreement};
use impsim::trace::DeliveryRecord;
use impsim::{
    Decision, Engine, EngineConfig, EngineError, Forgery, Item, Payload, ProcessorId, Protocol, Round, RunOutcome,
    Value,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pid(i: u32) -> ProcessorId {
    ProcessorId::new(i)
}

pub fn distinct_inputs(rng: &mut impl Rng, n: usize, max: Value) -> Vec<Value> {
    let mut pool: Vec<Value> = (1..=max).collect();
    pool.shuffle(rng);
    pool.truncate(n);
    pool
}

pub fn random_perm(rng: &mut impl Rng, n: usize) -> Vec<ProcessorId> {
    let mut perm: Vec<ProcessorId> = ProcessorId::all(n).collect();
    perm.shuffle(rng);
    perm
}

/// Round-by-round checker for the echo-vector invariants: bounded `|V|`,
/// every genuine pair everywhere after round 3, and any pair held by some
/// processor at the end of round `r >= 3` held by all at the end of `r + 1`.
pub struct VectorInvariants {
    n: usize,
    k: usize,
    genuine: BTreeSet<(ProcessorId, Value)>,
    previous: Option<BTreeSet<(ProcessorId, Value)>>,
    pub rounds_checked: usize,
    pub violations: Vec<String>,
}

impl VectorInvariants {
    pub fn new(n: usize, k: usize, inputs: &[Value]) -> Self {
        VectorInvariants {
            n,
            k,
            genuine: inputs.iter().enumerate().map(|(s, &v)| (ProcessorId::from_slot(s), v)).collect(),
            previous: None,
            rounds_checked: 0,
            violations: Vec::new(),
        }
    }

    pub fn observe(&mut self, round: Round, states: &[RenamingState]) {
        self.rounds_checked += 1;
        for (slot, s) in states.iter().enumerate() {
            if s.vector.len() > self.n + self.k {
                self.violations.push(format!("round {round}: |V| = {} at slot {slot}", s.vector.len()));
            }
            if round >= 3 && !self.genuine.is_subset(&s.vector) {
                self.violations.push(format!("round {round}: slot {slot} misses a genuine pair"));
            }
            if let Some(prev) = &self.previous {
                if let Some(p) = prev.difference(&s.vector).next() {
                    self.violations.push(format!("round {round}: slot {slot} lacks {p:?}"));
                }
            }
        }
        if round >= 3 {
            self.previous = Some(states.iter().flat_map(|s| s.vector.iter().copied()).collect());
        }
    }
}

/// Names are distinct, inside `1..=n+k`, ordered like the inputs and all
/// decided by `deadline`.
pub fn check_names(
    inputs: &[Value],
    decisions: &[Option<Decision>],
    n: usize,
    k: usize,
    deadline: Round,
) -> Result<(), String> {
    let mut named = Vec::new();
    for (slot, d) in decisions.iter().enumerate() {
        match d {
            Some(d) if d.round <= deadline => named.push((inputs[slot], d.value)),
            Some(d) => return Err(format!("slot {slot} decided in round {} > {deadline}", d.round)),
            None => return Err(format!("slot {slot} undecided")),
        }
    }
    check_instances(&named, n + k)
}

/// `(input, name)` pairs of decided instances: distinct names in
/// `1..=space`, strictly increasing with the input.
pub fn check_instances(named: &[(Value, Value)], space: usize) -> Result<(), String> {
    let mut sorted = named.to_vec();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0].1 >= w[1].1 {
            return Err(format!("order or distinctness broken: {:?} vs {:?}", w[0], w[1]));
        }
    }
    match sorted.iter().find(|(_, name)| *name < 1 || *name > space as Value) {
        Some(bad) => Err(format!("name {} outside 1..={space}", bad.1)),
        None => Ok(()),
    }
}

pub struct RenamingRun {
    pub inputs: Vec<Value>,
    pub outcome: RunOutcome<RenamingState>,
    pub invariants: VectorInvariants,
}

pub fn renaming_run(
    n: usize,
    k: usize,
    inputs: Vec<Value>,
    seed: u64,
    adversary: &mut dyn Adversary,
) -> Result<RenamingRun, EngineError> {
    let protocol = Renaming::new(n, k);
    let cfg = EngineConfig::new(n, k, protocol.horizon(), seed);
    let mut invariants = VectorInvariants::new(n, k, &inputs);
    let mut engine = Engine::new(cfg, &protocol, inputs.clone())?;
    engine.run_with(adversary, |e| invariants.observe(e.round(), e.states()))?;
    Ok(RenamingRun { inputs, outcome: engine.finish(), invariants })
}

/// Checks a renaming run end to end; returns the number of rounds the
/// vector invariants were checked on.
pub fn check_renaming_run(run: &RenamingRun, n: usize, k: usize) -> Result<usize, String> {
    if let Some(v) = run.invariants.violations.first() {
        return Err(v.clone());
    }
    check_names(&run.inputs, &run.outcome.decisions, n, k, (n + k + 3) as Round)?;
    Ok(run.invariants.rounds_checked)
}

/// One round of a `k = 1` adversary for set agreement: each receiver gets
/// nothing or a single `(claimed sender, value)` envelope. `code` ranges
/// over `(1 + n |domain|)^n`.
pub fn per_receiver_forgeries(n: usize, round: Round, domain: &[Value], mut code: usize) -> Vec<Forgery> {
    let options = 1 + n * domain.len();
    let mut out = Vec::new();
    for receiver in ProcessorId::all(n) {
        let choice = code % options;
        code /= options;
        if choice == 0 {
            continue;
        }
        let (sender, value) = ((choice - 1) / domain.len(), domain[(choice - 1) % domain.len()]);
        let item = if round == 1 { Item::SaVal { value } } else { Item::SaEcho { value } };
        out.push(Forgery { receiver, claimed_sender: ProcessorId::from_slot(sender), payload: Payload::single(item) });
    }
    out
}

/// Set-agreement outcome checks: no error, every processor decided a real
/// input, at most `bound` distinct decisions.
pub fn check_set_agreement(inputs: &[Value], decisions: &[Option<Decision>], bound: usize) -> Result<(), String> {
    let real: BTreeSet<Value> = inputs.iter().copied().collect();
    let mut decided = BTreeSet::new();
    for (slot, d) in decisions.iter().enumerate() {
        let d = d.ok_or_else(|| format!("slot {slot} undecided"))?;
        if !real.contains(&d.value) {
            return Err(format!("slot {slot} decided {} which nobody proposed", d.value));
        }
        decided.insert(d.value);
    }
    if decided.len() > bound {
        return Err(format!("{} distinct decisions {decided:?}", decided.len()));
    }
    Ok(())
}

/// Exhaustive check of set agreement for `n = 3`, `k = 1`, `V = {0, 1}`:
/// every input vector against every budget-respecting choice of one forged
/// envelope per receiver in each round. Returns the number of executions
/// and the largest decision set seen.
pub fn exhaustive_set_agreement() -> Result<(usize, usize), String> {
    let (n, k) = (3, 1);
    let domain = [0, 1];
    let protocol = SetAgreement::new(n, k, domain);
    let per_round = (1 + n * domain.len()).pow(n as u32);
    let cfg = EngineConfig::new(n, k, SetAgreement::HORIZON, 0);
    let jobs: Vec<(u32, usize)> = (0..(1u32 << n)).flat_map(|m| (0..per_round).map(move |c| (m, c))).collect();
    let largest = jobs
        .par_iter()
        .map(|&(mask, c1)| {
            let inputs: Vec<Value> = (0..n).map(|s| Value::from(mask >> s & 1)).collect();
            let first = per_receiver_forgeries(n, 1, &domain, c1);
            let mut largest = 0;
            for c2 in 0..per_round {
                let script: Vec<(Round, Forgery)> = first
                    .iter()
                    .map(|f| (1, f.clone()))
                    .chain(per_receiver_forgeries(n, 2, &domain, c2).into_iter().map(|f| (2, f)))
                    .collect();
                let context = || format!("inputs {inputs:?}, script {script:?}");
                let outcome =
                    impsim::run_protocol(&cfg, &protocol, &inputs, &mut ScriptedAdversary::new(script.clone()))
                        .map_err(|e| format!("{}: {e}", context()))?;
                check_set_agreement(&inputs, &outcome.decisions, k + 1).map_err(|e| format!("{}: {e}", context()))?;
                let set: BTreeSet<Value> = outcome.decisions.iter().flatten().map(|d| d.value).collect();
                largest = largest.max(set.len());
            }
            Ok::<usize, String>(largest)
        })
        .try_reduce(|| 0, |a, b| Ok(a.max(b)))?;
    Ok((jobs.len() * per_round, largest))
}

/// Ben-Or outcome checks. Returns the phase of the last decision.
pub fn check_ben_or(
    inputs: &[Value],
    outcome: &RunOutcome<impsim::protocols::BenOrState>,
    max_phases: Value,
) -> Result<Value, String> {
    let mut values = BTreeSet::new();
    let mut last = 0;
    for (slot, d) in outcome.decisions.iter().enumerate() {
        let d = d.ok_or_else(|| format!("slot {slot} undecided after {max_phases} phases"))?;
        values.insert(d.value);
        last = last.max(d.round.div_ceil(2) as Value);
    }
    if values.len() > 1 {
        return Err(format!("disagreement: {values:?}"));
    }
    let v = *values.first().expect("n >= 1");
    if !inputs.contains(&v) {
        return Err(format!("decided {v}, inputs {inputs:?}"));
    }
    if inputs.iter().all(|&x| x == inputs[0]) && last != 1 {
        return Err(format!("unanimous {inputs:?} decided in phase {last}"));
    }
    if last > max_phases {
        return Err(format!("decided in phase {last}"));
    }
    Ok(last)
}

pub fn ben_or_cfg(n: usize, k: usize, max_phases: u32, seed: u64) -> EngineConfig {
    EngineConfig::new(n, k, BenOr::rounds_for(max_phases), seed)
}

fn relabel_delivery(d: &DeliveryRecord, perm: &[ProcessorId]) -> DeliveryRecord {
    let f = |id: ProcessorId| perm[id.slot()];
    DeliveryRecord { recv: f(d.recv), src: f(d.src), payload: d.payload.map_ids(&f), ..d.clone() }
}

fn delivery_multiset(ds: impl Iterator<Item = DeliveryRecord>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for d in ds {
        *out.entry(serde_json::to_string(&d).expect("delivery serializes")).or_default() += 1;
    }
    out
}

/// Runs `protocol` under a mutating random forger, then again with ids
/// permuted by `perm` (inputs, coin seeds and adversary relabeled along),
/// and compares decisions and deliveries through the permutation.
pub fn check_equivariance<P: Protocol>(
    protocol: &P,
    cfg: &EngineConfig,
    inputs: &[Value],
    adversary_seed: u64,
    perm: &[ProcessorId],
) -> Result<(), String> {
    let n = cfg.n;
    let mut base = Engine::new(cfg.clone(), protocol, inputs.to_vec()).map_err(|e| e.to_string())?;
    let seeds = base.seeds().to_vec();
    base.run_with(&mut random_forger(adversary_seed, PayloadMode::Mutate), |_| {}).map_err(|e| e.to_string())?;
    let a = base.finish();

    let mut p_inputs = vec![0; n];
    let mut p_seeds = vec![0; n];
    for (s, image) in perm.iter().enumerate() {
        p_inputs[image.slot()] = inputs[s];
        p_seeds[image.slot()] = seeds[s];
    }
    let mut permuted = Engine::with_seeds(cfg.clone(), protocol, p_inputs, p_seeds).map_err(|e| e.to_string())?;
    let mut adversary = Relabeled::new(random_forger(adversary_seed, PayloadMode::Mutate), perm.to_vec());
    permuted.run_with(&mut adversary, |_| {}).map_err(|e| e.to_string())?;
    let b = permuted.finish();

    if a.rounds_run != b.rounds_run {
        return Err(format!("rounds {} vs {}", a.rounds_run, b.rounds_run));
    }
    for (s, image) in perm.iter().enumerate() {
        let expected = a.decisions[s].map(|d| Decision { id: *image, ..d });
        if expected != b.decisions[image.slot()] {
            return Err(format!("slot {s}: {:?} vs {:?}", expected, b.decisions[image.slot()]));
        }
    }
    let mapped = delivery_multiset(a.trace.deliveries().map(|d| relabel_delivery(d, perm)));
    let actual = delivery_multiset(b.trace.deliveries().cloned());
    if mapped != actual {
        return Err("deliveries differ under the permutation".into());
    }
    Ok(())
}

/// Closed-form chain lengths: `pi(r)` for the sub-chain to `<p_i, r>` and
/// the full chain `n * (2 pi(0) + 1)`.
pub fn expected_chain_length(n: usize, rounds: Round) -> usize {
    let mut pi = vec![0usize; rounds as usize + 1];
    for r in (0..=rounds as usize).rev() {
        pi[r] = 1 + (r + 1..=rounds as usize).map(|s| n * (2 * pi[s] + 1) + 1).sum::<usize>();
    }
    n * (2 * pi[0] + 1)
}

pub struct ChainCheck {
    pub length: usize,
    pub pairs: usize,
    pub strawman_found: bool,
}

/// Builds the full chain and checks endpoints, length, pairwise similarity
/// (views compared directly) and the strawman scan.
pub fn check_chain(n: usize, rounds: Round) -> Result<(Chain, ChainCheck), String> {
    let chain = build_full_chain(n, rounds).map_err(|e| e.to_string())?;
    if chain.start != CommGraph::failure_free(vec![0; n], rounds) {
        return Err("chain does not start at the all-0 failure-free graph".into());
    }
    if *chain.end() != CommGraph::failure_free(vec![1; n], rounds) {
        return Err("chain does not end at the all-1 failure-free graph".into());
    }
    if chain.len() != expected_chain_length(n, rounds) {
        return Err(format!("length {} != {}", chain.len(), expected_chain_length(n, rounds)));
    }
    let views: Vec<_> = chain
        .graphs()
        .map(|g| execute_graph(g, &FullInformation).map(|r| r.views))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for (i, w) in views.windows(2).enumerate() {
        let differing = w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count();
        if differing > 1 {
            return Err(format!("graphs {i} and {} differ at {differing} processors", i + 1));
        }
    }
    let strawman_found = strawman_scan(&chain).map_err(|e| e.to_string())?.is_some();
    let check = ChainCheck { length: chain.len(), pairs: views.len() - 1, strawman_found };
    Ok((chain, check))
}

/// Compares the engine path and the direct interpreter on every graph of
/// `chain`, envelope for envelope. Returns the number of envelopes compared.
pub fn check_oracle_equivalence(chain: &Chain) -> Result<usize, String> {
    let mut envelopes = 0;
    for (i, g) in chain.graphs().enumerate() {
        let direct = interpret_graph(g, &FullInformation).map_err(|e| e.to_string())?;
        let run = execute_graph(g, &FullInformation).map_err(|e| e.to_string())?;
        let expected = direct.deliveries();
        let actual: Vec<DeliveryRecord> = run.trace.deliveries().cloned().collect();
        if expected != actual {
            let at = expected.iter().zip(&actual).position(|(a, b)| a != b).unwrap_or(expected.len().min(actual.len()));
            return Err(format!("graph {i}: deliveries diverge at envelope {at}"));
        }
        if direct.views() != run.views {
            return Err(format!("graph {i}: final views differ"));
        }
        envelopes += actual.len();
    }
    Ok(envelopes)
}

/// Sends one random round-1 batch through a fresh Ben-Or engine. Returns
/// whether the engine accepted it, after checking acceptance agrees with
/// the per-receiver count and that accepted inboxes hold every genuine
/// broadcast plus exactly the forged envelopes addressed to them.
pub fn fuzz_budget_batch(rng: &mut impl Rng, n: usize, k: usize) -> Result<bool, String> {
    let protocol = BenOr::new(n, k);
    let inputs: Vec<Value> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let mut engine =
        Engine::new(EngineConfig::new(n, k, 2, rng.gen()), &protocol, inputs).map_err(|e| e.to_string())?;
    let genuine: Vec<Payload> = engine.states().iter().map(|s| protocol.broadcast(s, 1)).collect();
    let size = rng.gen_range(0..=(k + 1) * n);
    let batch: Vec<Forgery> = (0..size)
        .map(|_| Forgery {
            receiver: ProcessorId::from_slot(rng.gen_range(0..n)),
            claimed_sender: ProcessorId::from_slot(rng.gen_range(0..n)),
            payload: Payload::single(Item::BrReport { phase: 1, value: rng.gen_range(0..3) }),
        })
        .collect();
    let mut per_receiver = vec![0usize; n];
    for f in &batch {
        per_receiver[f.receiver.slot()] += 1;
    }
    let over = per_receiver.iter().any(|&c| c > k);
    let result = engine.run_round(&mut ScriptedAdversary::new(batch.iter().map(|f| (1, f.clone())).collect()));
    match (over, result) {
        (true, Err(EngineError::Budget(_))) => Ok(false),
        (true, other) => Err(format!("over-budget batch {per_receiver:?} gave {other:?}")),
        (false, Err(e)) => Err(format!("in-budget batch {per_receiver:?} rejected: {e}")),
        (false, Ok(())) => {
            for (slot, inbox) in engine.last_inboxes().iter().enumerate() {
                let mut expected: Vec<(ProcessorId, Payload)> =
                    genuine.iter().enumerate().map(|(s, p)| (ProcessorId::from_slot(s), p.clone())).collect();
                expected.extend(
                    batch.iter().filter(|f| f.receiver.slot() == slot).map(|f| (f.claimed_sender, f.payload.clone())),
                );
                expected.sort();
                let mut actual = inbox.entries().to_vec();
                actual.sort();
                if actual != expected {
                    return Err(format!("inbox of slot {slot} is not genuine + forged"));
                }
            }
            Ok(true)
        }
    }
}
