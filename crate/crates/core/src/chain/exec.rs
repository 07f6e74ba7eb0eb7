use std::collections::BTreeSet;

use super::{validate_graph, ChainError, CommGraph, Label};
use crate::adversary::{graph_adversary, ShadowRecord};
use crate::engine::{processor_seed, Engine, EngineConfig, Protocol};
use crate::error::{EngineError, ProtocolError};
use crate::trace::{DeliveryRecord, Trace};
use crate::types::{FullView, Payload, ProcessorId, Round, RoundInbox, Value};

/// Run seed used for every graph execution.
pub const GRAPH_SEED: u64 = 0;

/// Input plus every inbox a processor received, round by round.
pub type View = FullView;

/// A graph execution materialized round by round, without the engine.
#[derive(Clone, Debug)]
pub struct Execution<S> {
    pub base_inputs: Vec<Value>,
    /// `states[t][slot]`: state after `t` rounds.
    pub states: Vec<Vec<S>>,
    /// `inboxes[t - 1][slot]`: inbox of round `t`.
    pub inboxes: Vec<Vec<RoundInbox>>,
    /// `shadows[t]`: adversary state set from the label of `<Adv, t>`, with
    /// the identity it impersonates.
    pub shadows: Vec<Option<(ProcessorId, S)>>,
    /// `messages[t - 1]`: the adversary's round-`t` broadcast.
    pub messages: Vec<Option<(ProcessorId, Payload)>>,
    pub edges: BTreeSet<(Round, ProcessorId)>,
}

impl<S> Execution<S> {
    pub fn views(&self) -> Vec<View> {
        views_of_run(&self.base_inputs, &self.inboxes)
    }

    /// Every delivery, in the order the engine records them.
    pub fn deliveries(&self) -> Vec<DeliveryRecord> {
        let mut out = Vec::new();
        for (t, inboxes) in self.inboxes.iter().enumerate() {
            let round = t as Round + 1;
            for (slot, inbox) in inboxes.iter().enumerate() {
                let recv = ProcessorId::from_slot(slot);
                // Identical genuine copies sort first, so the forged entry is
                // the last one equal to the adversary's message.
                let forged_at = match &self.messages[t] {
                    Some(m) if self.edges.contains(&(round, recv)) => inbox.entries().iter().rposition(|e| e == m),
                    _ => None,
                };
                out.extend(inbox.entries().iter().enumerate().map(|(pos, (src, payload))| DeliveryRecord {
                    round,
                    recv,
                    src: *src,
                    forged: forged_at == Some(pos),
                    payload: payload.clone(),
                }));
            }
        }
        out
    }
}

/// Views from per-round inboxes, `inboxes[t - 1][slot]`.
pub fn views_of_run(inputs: &[Value], inboxes: &[Vec<RoundInbox>]) -> Vec<View> {
    ProcessorId::all(inputs.len())
        .map(|id| View {
            id,
            input: inputs[id.slot()],
            inboxes: inboxes.iter().map(|round| round[id.slot()].entries().to_vec()).collect(),
        })
        .collect()
}

fn coin_seed(id: ProcessorId) -> u64 {
    processor_seed(GRAPH_SEED, id.slot())
}

fn protocol_error(id: ProcessorId, round: Round) -> impl FnOnce(ProtocolError) -> ChainError {
    move |source| ChainError::Engine(EngineError::Protocol { id, round, source })
}

/// The inverse of `p_i`'s state at the beginning of round `r`.
///
/// For `r = 1` this is `p_i`'s initial state with the opposite input.
/// Otherwise `p_i`'s round-`(r-1)` step is replayed with the adversary's
/// round-`(r-1)` message removed if it was delivered to `p_i` and added if
/// it was not. Without an adversary message that round the inverse is the
/// original state. `exec` must be materialized through round `r - 1`.
pub fn inverse_state<P: Protocol>(
    exec: &Execution<P::State>,
    graph: &CommGraph,
    protocol: &P,
    id: ProcessorId,
    r: Round,
) -> Result<P::State, ChainError> {
    let slot = id.slot();
    if r == 1 {
        return Ok(protocol.init(id, exec.base_inputs[slot] ^ 1, coin_seed(id)));
    }
    let t = r - 1;
    let Some(message) = &exec.messages[t as usize - 1] else {
        return Ok(exec.states[t as usize][slot].clone());
    };
    let mut inbox = exec.inboxes[t as usize - 1][slot].clone();
    if graph.has_edge(t, id) {
        inbox.remove_one(message);
    } else {
        inbox.push(message.clone());
    }
    let step = protocol.step(&exec.states[t as usize - 1][slot], t, &inbox).map_err(protocol_error(id, t))?;
    Ok(step.state)
}

/// Executes a graph directly from its definition.
pub fn interpret_graph<P: Protocol>(graph: &CommGraph, protocol: &P) -> Result<Execution<P::State>, ChainError> {
    let violations = validate_graph(graph);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(ChainError::InvalidGraph(text.join("; ")));
    }
    let n = graph.n;
    let mut exec = Execution {
        base_inputs: graph.base_inputs.clone(),
        states: vec![ProcessorId::all(n)
            .map(|id| protocol.init(id, graph.base_inputs[id.slot()], coin_seed(id)))
            .collect()],
        inboxes: Vec::new(),
        shadows: Vec::new(),
        messages: Vec::new(),
        edges: graph.edges.clone(),
    };
    let shadow = match graph.label(0) {
        Some(Label::Proc(id)) => Some((id, inverse_state(&exec, graph, protocol, id, 1)?)),
        _ => None,
    };
    exec.shadows.push(shadow);

    for t in 1..=graph.rounds {
        let prev = &exec.states[t as usize - 1];
        let message = exec.shadows[t as usize - 1].as_ref().map(|(id, s)| (*id, protocol.broadcast(s, t)));
        let broadcasts: Vec<(ProcessorId, Payload)> =
            ProcessorId::all(n).map(|id| (id, protocol.broadcast(&prev[id.slot()], t))).collect();
        let inboxes: Vec<RoundInbox> = ProcessorId::all(n)
            .map(|recv| {
                let mut entries = broadcasts.clone();
                if let Some(m) = &message {
                    if graph.has_edge(t, recv) {
                        entries.push(m.clone());
                    }
                }
                RoundInbox::canonical(entries)
            })
            .collect();
        let next = ProcessorId::all(n)
            .map(|id| {
                protocol.step(&prev[id.slot()], t, &inboxes[id.slot()]).map(|s| s.state).map_err(protocol_error(id, t))
            })
            .collect::<Result<Vec<_>, _>>()?;
        exec.states.push(next);
        exec.inboxes.push(inboxes);
        exec.messages.push(message);

        let shadow = match graph.label(t) {
            None => None,
            Some(Label::Proc(id)) => Some((id, inverse_state(&exec, graph, protocol, id, t + 1)?)),
            Some(Label::A) => match &exec.shadows[t as usize - 1] {
                Some((id, state)) => {
                    let inbox = &exec.inboxes[t as usize - 1][id.slot()];
                    let step = protocol.step(state, t, inbox).map_err(protocol_error(*id, t))?;
                    Some((*id, step.state))
                }
                None => None,
            },
        };
        exec.shadows.push(shadow);
    }
    Ok(exec)
}

/// A graph executed through the engine.
#[derive(Clone, Debug)]
pub struct GraphRun {
    pub views: Vec<View>,
    pub shadow_trace: Vec<ShadowRecord>,
    pub trace: Trace,
}

/// Executes a graph through the engine against the graph adversary.
pub fn execute_graph<P: Protocol>(graph: &CommGraph, protocol: &P) -> Result<GraphRun, ChainError> {
    let cfg = EngineConfig::new(graph.n, 1, graph.rounds, GRAPH_SEED).with_full_horizon();
    let mut adversary = graph_adversary(graph, protocol.clone(), &cfg)?;
    let mut engine = Engine::new(cfg, protocol, graph.base_inputs.clone())?;
    let mut inboxes: Vec<Vec<RoundInbox>> = Vec::new();
    engine.run_with(&mut adversary, |e| inboxes.push(e.last_inboxes().to_vec()))?;
    if let Some((round, source)) = adversary.failure() {
        let id = adversary.shadow().map_or(ProcessorId::new(1), |(id, _)| *id);
        return Err(ChainError::Engine(EngineError::Protocol { id, round: *round, source: source.clone() }));
    }
    Ok(GraphRun {
        views: views_of_run(&graph.base_inputs, &inboxes),
        shadow_trace: adversary.records().to_vec(),
        trace: engine.trace().clone(),
    })
}

/// Whether the engine-driven execution and the direct interpreter produce
/// the same deliveries, envelope for envelope, and the same views.
pub fn oracle_agrees<P: Protocol>(graph: &CommGraph, protocol: &P) -> Result<bool, ChainError> {
    let direct = interpret_graph(graph, protocol)?;
    let run = execute_graph(graph, protocol)?;
    let engine: Vec<DeliveryRecord> = run.trace.deliveries().cloned().collect();
    Ok(direct.deliveries() == engine && direct.views() == run.views)
}

/// Outcome of comparing the executions of two graphs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Similarity {
    pub similar: bool,
    pub differing: BTreeSet<ProcessorId>,
}

impl Similarity {
    pub fn of_views(a: &[View], b: &[View]) -> Self {
        let differing: BTreeSet<ProcessorId> = a.iter().zip(b).filter(|(x, y)| x != y).map(|(x, _)| x.id).collect();
        Similarity { similar: differing.len() <= 1, differing }
    }
}

/// Executes both graphs and compares every processor's view. Similar means
/// at most one processor can tell them apart.
pub fn verify_similar<P: Protocol>(g1: &CommGraph, g2: &CommGraph, protocol: &P) -> Result<Similarity, ChainError> {
    if (g1.n, g1.rounds) != (g2.n, g2.rounds) {
        return Err(ChainError::InvalidGraph(format!(
            "cannot compare n={}, R={} with n={}, R={}",
            g1.n, g1.rounds, g2.n, g2.rounds
        )));
    }
    let a = execute_graph(g1, protocol)?;
    let b = execute_graph(g2, protocol)?;
    Ok(Similarity::of_views(&a.views, &b.views))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::null_adversary;
    use crate::chain::{op_label, op_switch};
    use crate::engine::run_protocol;
    use crate::protocols::FullInformation;

    fn p(i: u32) -> ProcessorId {
        ProcessorId::new(i)
    }

    fn fully_connected(inputs: Vec<Value>, rounds: Round, i: u32) -> CommGraph {
        let mut g = CommGraph::failure_free(inputs, rounds);
        g.labels[0] = Some(Label::Proc(p(i)));
        for r in 1..=rounds {
            g.labels[r as usize] = Some(Label::A);
            g.edges.extend(ProcessorId::all(g.n).map(|id| (r, id)));
        }
        g
    }

    #[test]
    fn unlabeled_graph_matches_the_failure_free_run() {
        let g = CommGraph::failure_free(vec![0, 1, 1], 2);
        let run = execute_graph(&g, &FullInformation).unwrap();
        let cfg = EngineConfig::new(3, 1, 2, GRAPH_SEED).with_full_horizon();
        let out = run_protocol(&cfg, &FullInformation, &[0, 1, 1], &mut null_adversary()).unwrap();
        assert_eq!(run.views, out.final_states);
        assert!(run.shadow_trace.is_empty());
    }

    #[test]
    fn fully_connected_shadow_doubles_the_stolen_stream() {
        let g = fully_connected(vec![0, 0, 0], 2, 1);
        let run = execute_graph(&g, &FullInformation).unwrap();
        for view in &run.views {
            for inbox in &view.inboxes {
                assert_eq!(inbox.iter().filter(|(s, _)| *s == p(1)).count(), 2);
                assert_eq!(inbox.len(), 4);
            }
        }
    }

    #[test]
    fn inverse_of_round_one_flips_the_input() {
        let g = op_label(&CommGraph::failure_free(vec![0, 1, 0], 1), Label::Proc(p(1)), 0).unwrap();
        let exec = interpret_graph(&g, &FullInformation).unwrap();
        let shadow = inverse_state(&exec, &g, &FullInformation, p(1), 1).unwrap();
        assert_eq!(shadow.input, 1);
        assert_eq!(exec.shadows[0].as_ref().unwrap().1.input, 1);
    }

    #[test]
    fn inverse_without_adversary_state_is_the_original() {
        let g = CommGraph::failure_free(vec![0, 1, 0], 2);
        let exec = interpret_graph(&g, &FullInformation).unwrap();
        for r in 2..=3 {
            let inv = inverse_state(&exec, &g, &FullInformation, p(2), r).unwrap();
            assert_eq!(inv, exec.states[r as usize - 1][1]);
        }
    }

    #[test]
    fn inverse_replays_the_step_without_the_delivered_forgery() {
        let mut g = CommGraph::failure_free(vec![0, 1, 0], 2);
        g.labels[0] = Some(Label::Proc(p(2)));
        g.edges.insert((1, p(2)));
        let exec = interpret_graph(&g, &FullInformation).unwrap();
        let inv = inverse_state(&exec, &g, &FullInformation, p(2), 2).unwrap();
        // Oracle: p_2's round-1 inbox without the forged p_2-tagged entry is
        // exactly the failure-free round-1 inbox.
        let ff = interpret_graph(&CommGraph::failure_free(vec![0, 1, 0], 2), &FullInformation).unwrap();
        assert_eq!(inv, ff.states[1][1]);
        assert_ne!(inv, exec.states[1][1]);
    }

    #[test]
    fn engine_and_interpreter_agree() {
        let g = fully_connected(vec![1, 0, 1], 2, 3);
        let exec = interpret_graph(&g, &FullInformation).unwrap();
        let run = execute_graph(&g, &FullInformation).unwrap();
        assert_eq!(exec.views(), run.views);
        assert_eq!(exec.deliveries(), run.trace.deliveries().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn switch_is_invisible_to_others() {
        let g = fully_connected(vec![0, 0, 0], 2, 2);
        let s = op_switch(&g, 0).unwrap();
        let sim = verify_similar(&g, &s, &FullInformation).unwrap();
        assert!(sim.similar);
        assert!(sim.differing.iter().all(|&id| id == p(2)));
    }

    #[test]
    fn opposite_failure_free_graphs_are_not_similar() {
        let a = CommGraph::failure_free(vec![0, 0, 0], 1);
        let b = CommGraph::failure_free(vec![1, 1, 1], 1);
        let sim = verify_similar(&a, &b, &FullInformation).unwrap();
        assert!(!sim.similar);
        assert_eq!(sim.differing.len(), 3);
        assert_eq!(verify_similar(&a, &a, &FullInformation).unwrap().differing.len(), 0);
    }
}
