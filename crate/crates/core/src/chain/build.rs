use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::exec::{execute_graph, oracle_agrees, Similarity, View};
use super::graph::{op_label, op_remove, op_switch, CommGraph, Label};
use super::ChainError;
use crate::engine::Protocol;
use crate::protocols::{round_one_inputs, FullInformation};
use crate::types::{ProcessorId, Round, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ChainOp {
    Label {
        #[serde(serialize_with = "label_text")]
        label: Label,
        round: Round,
    },
    Remove {
        round: Round,
    },
    Switch {
        round: Round,
    },
}

fn label_text<S: serde::Serializer>(label: &Label, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(label)
}

impl fmt::Display for ChainOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainOp::Label { label, round } => write!(f, "label({label}, {round})"),
            ChainOp::Remove { round } => write!(f, "remove({round})"),
            ChainOp::Switch { round } => write!(f, "switch({round})"),
        }
    }
}

pub fn apply_op(g: &CommGraph, op: ChainOp) -> Result<CommGraph, ChainError> {
    match op {
        ChainOp::Label { label, round } => op_label(g, label, round),
        ChainOp::Remove { round } => op_remove(g, round),
        ChainOp::Switch { round } => op_switch(g, round),
    }
}

/// An operation and the graph it produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainStep {
    pub op: ChainOp,
    pub graph: CommGraph,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub start: CommGraph,
    pub steps: Vec<ChainStep>,
}

impl Chain {
    /// Number of operations.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn end(&self) -> &CommGraph {
        self.steps.last().map_or(&self.start, |s| &s.graph)
    }

    /// Every graph, starting graph first.
    pub fn graphs(&self) -> impl Iterator<Item = &CommGraph> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|s| &s.graph))
    }

    /// Replays every operation from the start and checks the recorded
    /// graphs.
    pub fn replay(&self) -> Result<(), ChainError> {
        let mut current = self.start.clone();
        for (i, step) in self.steps.iter().enumerate() {
            current = apply_op(&current, step.op)?;
            if current != step.graph {
                return Err(ChainError::precondition(
                    "replay",
                    format!("step {} ({}) does not reproduce its graph", i + 1, step.op),
                ));
            }
        }
        Ok(())
    }
}

fn reversed(start: &CommGraph, steps: &[ChainStep]) -> Vec<ChainStep> {
    let mut out = Vec::with_capacity(steps.len());
    for t in (0..steps.len()).rev() {
        let before = if t == 0 { start } else { &steps[t - 1].graph };
        let op = match steps[t].op {
            ChainOp::Label { round, .. } => ChainOp::Remove { round },
            ChainOp::Remove { round } => {
                ChainOp::Label { label: before.label(round).expect("removed label was present"), round }
            }
            switch @ ChainOp::Switch { .. } => switch,
        };
        out.push(ChainStep { op, graph: before.clone() });
    }
    out
}

/// Size caps on chain construction; chains grow exponentially with `R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainLimits {
    pub max_n: usize,
    pub max_rounds: Round,
}

impl Default for ChainLimits {
    fn default() -> Self {
        ChainLimits { max_n: 4, max_rounds: 3 }
    }
}

impl ChainLimits {
    pub fn check(&self, n: usize, rounds: Round) -> Result<(), ChainError> {
        if n > self.max_n || rounds > self.max_rounds {
            return Err(ChainError::HorizonExceeded { n, rounds, max_n: self.max_n, max_rounds: self.max_rounds });
        }
        Ok(())
    }
}

type MemoKey = (CommGraph, ProcessorId, Round);

/// Builds chains from the three graph operations, memoizing sub-chains by
/// `(graph, i, r)`.
#[derive(Default)]
pub struct ChainBuilder {
    limits: ChainLimits,
    memo: HashMap<MemoKey, Arc<Vec<ChainStep>>>,
    hits: usize,
}

impl ChainBuilder {
    pub fn new(limits: ChainLimits) -> Self {
        ChainBuilder { limits, memo: HashMap::new(), hits: 0 }
    }

    /// Number of sub-chains answered from the memo table.
    pub fn memo_hits(&self) -> usize {
        self.hits
    }

    fn push(steps: &mut Vec<ChainStep>, current: &mut CommGraph, op: ChainOp) -> Result<(), ChainError> {
        *current = apply_op(current, op)?;
        steps.push(ChainStep { op, graph: current.clone() });
        Ok(())
    }

    fn pi_steps(&mut self, g: &CommGraph, i: ProcessorId, r: Round) -> Result<Arc<Vec<ChainStep>>, ChainError> {
        let key = (g.clone(), i, r);
        if let Some(steps) = self.memo.get(&key) {
            self.hits += 1;
            return Ok(Arc::clone(steps));
        }
        if !g.is_failure_free_from(r) {
            return Err(ChainError::precondition("pi_chain", format!("start graph is not {r}-ff")));
        }
        let mut steps = Vec::new();
        let mut current = g.clone();
        Self::push(&mut steps, &mut current, ChainOp::Label { label: Label::Proc(i), round: r })?;
        for s in r + 1..=g.rounds {
            for j in ProcessorId::all(g.n) {
                let before = current.clone();
                let forward = self.pi_steps(&before, j, s)?;
                steps.extend(forward.iter().cloned());
                current = steps.last().expect("sub-chain is never empty").graph.clone();
                Self::push(&mut steps, &mut current, ChainOp::Switch { round: s })?;
                let mut connected = before;
                connected.edges.insert((s, j));
                let back = self.pi_steps(&connected, j, s)?;
                if back.last().map(|st| &st.graph) != Some(&current) {
                    return Err(ChainError::precondition(
                        "pi_chain",
                        format!("switch({s}) for {j} does not land on the connected <{j}, {s}>-graph"),
                    ));
                }
                steps.extend(reversed(&connected, &back));
                current = connected;
            }
            Self::push(&mut steps, &mut current, ChainOp::Label { label: Label::A, round: s })?;
        }
        let steps = Arc::new(steps);
        self.memo.insert(key, Arc::clone(&steps));
        Ok(steps)
    }

    /// Chain from the `r`-ff graph `g` to the `<p_i, r>`-graph with every
    /// later adversary vertex labeled A and fully connected.
    pub fn pi_chain(&mut self, g: &CommGraph, i: ProcessorId, r: Round) -> Result<Chain, ChainError> {
        self.limits.check(g.n, g.rounds)?;
        let steps = self.pi_steps(g, i, r)?;
        Ok(Chain { start: g.clone(), steps: steps.to_vec() })
    }

    /// Chain from the all-0 to the all-1 failure-free graph: for each
    /// processor in turn, build its shadow, switch inputs with it and remove
    /// it again.
    pub fn full_chain(&mut self, n: usize, rounds: Round) -> Result<Chain, ChainError> {
        if n < 2 || rounds < 1 {
            return Err(ChainError::precondition("full_chain", "needs n >= 2 and R >= 1"));
        }
        self.limits.check(n, rounds)?;
        let start = CommGraph::failure_free(vec![0; n], rounds);
        let mut steps = Vec::new();
        let mut current = start.clone();
        for i in ProcessorId::all(n) {
            let forward = self.pi_steps(&current, i, 0)?;
            steps.extend(forward.iter().cloned());
            let mut shadowed = forward.last().expect("non-empty").graph.clone();
            Self::push(&mut steps, &mut shadowed, ChainOp::Switch { round: 0 })?;
            let mut flipped = current.clone();
            flipped.base_inputs[i.slot()] ^= 1;
            let back = self.pi_steps(&flipped, i, 0)?;
            if back.last().map(|st| &st.graph) != Some(&shadowed) {
                return Err(ChainError::precondition("full_chain", format!("switch(0) for {i} is off target")));
            }
            steps.extend(reversed(&flipped, &back));
            current = flipped;
        }
        Ok(Chain { start, steps })
    }
}

pub fn build_pi_chain(g: &CommGraph, i: ProcessorId, r: Round) -> Result<Chain, ChainError> {
    ChainBuilder::default().pi_chain(g, i, r)
}

pub fn build_full_chain(n: usize, rounds: Round) -> Result<Chain, ChainError> {
    ChainBuilder::default().full_chain(n, rounds)
}

/// Pairwise similarity of a chain's consecutive graphs.
#[derive(Clone, Debug)]
pub struct ChainReport {
    pub length: usize,
    pub distinct_graphs: usize,
    /// `pairs[t]` compares graph `t` with graph `t + 1`.
    pub pairs: Vec<Similarity>,
    /// Views of every graph, in chain order.
    pub views: Vec<Arc<Vec<View>>>,
}

impl ChainReport {
    pub fn all_similar(&self) -> bool {
        self.pairs.iter().all(|s| s.similar)
    }

    pub fn max_differing(&self) -> usize {
        self.pairs.iter().map(|s| s.differing.len()).max().unwrap_or(0)
    }
}

/// Executes every distinct graph of the chain once (in parallel) and
/// compares consecutive views.
pub fn verify_chain<P: Protocol + Sync>(chain: &Chain, protocol: &P) -> Result<ChainReport, ChainError> {
    let mut index: HashMap<&CommGraph, usize> = HashMap::new();
    let mut distinct: Vec<&CommGraph> = Vec::new();
    let order: Vec<usize> = chain
        .graphs()
        .map(|g| {
            *index.entry(g).or_insert_with(|| {
                distinct.push(g);
                distinct.len() - 1
            })
        })
        .collect();
    let runs: Vec<Arc<Vec<View>>> = distinct
        .par_iter()
        .map(|g| execute_graph(g, protocol).map(|run| Arc::new(run.views)))
        .collect::<Result<_, _>>()?;
    let views: Vec<Arc<Vec<View>>> = order.iter().map(|&k| Arc::clone(&runs[k])).collect();
    let pairs = views.windows(2).map(|w| Similarity::of_views(&w[0], &w[1])).collect();
    Ok(ChainReport { length: chain.len(), distinct_graphs: distinct.len(), pairs, views })
}

/// Indices of chain graphs on which the engine path and the direct
/// interpreter disagree.
pub fn oracle_scan<P: Protocol + Sync>(chain: &Chain, protocol: &P) -> Result<Vec<usize>, ChainError> {
    let mut first: HashMap<&CommGraph, usize> = HashMap::new();
    for (i, g) in chain.graphs().enumerate() {
        first.entry(g).or_insert(i);
    }
    let mut distinct: Vec<(&CommGraph, usize)> = first.into_iter().collect();
    distinct.sort_by_key(|&(_, i)| i);
    let agree: Vec<bool> = distinct.par_iter().map(|(g, _)| oracle_agrees(g, protocol)).collect::<Result<_, _>>()?;
    Ok(distinct.iter().zip(agree).filter(|(_, ok)| !ok).map(|((_, i), _)| *i).collect())
}

/// A one-round "consensus" rule: majority of the inputs seen in round 1,
/// ties to 0.
pub fn strawman_decision(view: &View) -> Value {
    let inputs = round_one_inputs(view);
    let ones = inputs.iter().filter(|&&v| v == 1).count();
    Value::from(2 * ones > inputs.len())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrawmanFinding {
    Disagreement { index: usize, decisions: Vec<Value> },
    Invalid { index: usize, input: Value, decisions: Vec<Value> },
}

/// Scans a chain for the first graph where the strawman rule breaks
/// agreement or validity under the full-information protocol.
pub fn strawman_scan(chain: &Chain) -> Result<Option<StrawmanFinding>, ChainError> {
    let report = verify_chain(chain, &FullInformation)?;
    Ok(strawman_in(chain, &report))
}

/// As [`strawman_scan`], over an already verified full-information chain.
pub fn strawman_in(chain: &Chain, report: &ChainReport) -> Option<StrawmanFinding> {
    for (index, (graph, views)) in chain.graphs().zip(&report.views).enumerate() {
        let decisions: Vec<Value> = views.iter().map(strawman_decision).collect();
        if decisions.iter().any(|&d| d != decisions[0]) {
            return Some(StrawmanFinding::Disagreement { index, decisions });
        }
        let first = graph.base_inputs[0];
        if graph.base_inputs.iter().all(|&v| v == first) && decisions[0] != first {
            return Some(StrawmanFinding::Invalid { index, input: first, decisions });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form of the pi-chain length: one label, then per later round
    /// `n` forward/switch/backward detours and one A label.
    fn expected_pi_len(n: usize, rounds: Round, r: Round) -> usize {
        1 + (r + 1..=rounds).map(|s| n * (2 * expected_pi_len(n, rounds, s) + 1) + 1).sum::<usize>()
    }

    #[test]
    fn last_round_chain_is_a_single_label() {
        let g = CommGraph::failure_free(vec![0, 1, 0], 2);
        let chain = build_pi_chain(&g, ProcessorId::new(2), 2).unwrap();
        assert_eq!(chain.steps.len(), 1);
        assert_eq!(chain.steps[0].op, ChainOp::Label { label: Label::Proc(ProcessorId::new(2)), round: 2 });
    }

    #[test]
    fn pi_chain_lengths_follow_the_recursion() {
        for (n, rounds) in [(2, 1), (3, 1), (3, 2), (2, 3)] {
            let g = CommGraph::failure_free(vec![0; n], rounds);
            let chain = build_pi_chain(&g, ProcessorId::new(1), 0).unwrap();
            assert_eq!(chain.len(), expected_pi_len(n, rounds, 0), "n={n} R={rounds}");
            chain.replay().unwrap();
            let end = chain.end();
            assert_eq!(end.enacted_from(0), Some(ProcessorId::new(1)));
            assert_eq!(end.edges.len(), n * rounds as usize);
        }
        assert_eq!(expected_pi_len(3, 1, 0), 11);
        assert_eq!(expected_pi_len(3, 2, 0), 81);
    }

    #[test]
    fn full_chain_endpoints_and_length() {
        let chain = build_full_chain(3, 1).unwrap();
        assert_eq!(chain.start, CommGraph::failure_free(vec![0, 0, 0], 1));
        assert_eq!(chain.end(), &CommGraph::failure_free(vec![1, 1, 1], 1));
        assert_eq!(chain.len(), 3 * (2 * expected_pi_len(3, 1, 0) + 1));
        chain.replay().unwrap();
    }

    #[test]
    fn reversal_inverts_every_operation() {
        let g = CommGraph::failure_free(vec![0, 0], 2);
        let chain = build_pi_chain(&g, ProcessorId::new(2), 0).unwrap();
        let back = Chain { start: chain.end().clone(), steps: reversed(&chain.start, &chain.steps) };
        back.replay().unwrap();
        assert_eq!(back.end(), &g);
    }

    #[test]
    fn limits_are_enforced() {
        let err = build_full_chain(5, 1).unwrap_err();
        assert!(matches!(err, ChainError::HorizonExceeded { n: 5, .. }));
        let err = build_full_chain(2, 4).unwrap_err();
        assert!(matches!(err, ChainError::HorizonExceeded { rounds: 4, .. }));
        assert!(ChainBuilder::new(ChainLimits { max_n: 5, max_rounds: 1 }).full_chain(5, 1).is_ok());
    }

    #[test]
    fn strawman_breaks_somewhere_on_the_chain() {
        let chain = build_full_chain(3, 1).unwrap();
        assert!(strawman_scan(&chain).unwrap().is_some());
    }

    #[test]
    fn small_chain_is_similar_pairwise() {
        let chain = build_full_chain(2, 1).unwrap();
        let report = verify_chain(&chain, &FullInformation).unwrap();
        assert!(report.all_similar());
        assert_eq!(report.pairs.len(), chain.len());
    }
}
