//! Communication graphs of 1-adversary executions.
//!
//! A graph over `n` processors and horizon `R` has one adversary vertex
//! `<Adv, r>` per round `0..=R` and adversary edges `<Adv, r-1> -> <p_j, r>`
//! for `1 <= r <= R`. Genuine messages are implicit. The label of
//! `<Adv, r>` fixes the state the adversary enacts at the beginning of
//! round `r + 1`:
//!
//! * `i`: the inverse of `p_i`'s state,
//! * `A`: its own previous state, advanced by `p_i`'s algorithm on what the
//!   impersonated `p_i` received in round `r`,
//! * none: undefined; the adversary sends nothing in round `r + 1`.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ChainError;
use crate::types::{ProcessorId, Round, Value};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// Continue the previously enacted processor.
    A,
    /// Enact the inverse of this processor's state.
    Proc(ProcessorId),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::A => f.write_str("A"),
            Label::Proc(id) => write!(f, "{}", id.index()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommGraph {
    pub n: usize,
    pub rounds: Round,
    /// `labels[r]` labels `<Adv, r>`, for `r` in `0..=rounds`.
    pub labels: Vec<Option<Label>>,
    /// `(r, p_j)`: the adversary's round-`r` message reaches `p_j`.
    pub edges: BTreeSet<(Round, ProcessorId)>,
    /// Binary input of each processor.
    pub base_inputs: Vec<Value>,
}

/// A broken structural restriction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Shape(String),
    NonBinaryInput {
        id: ProcessorId,
        value: Value,
    },
    /// `<Adv, 0>` labeled A.
    InitialA,
    /// `<Adv, r>` labeled A while `<Adv, r-1>` is unlabeled.
    AWithoutPredecessor {
        round: Round,
    },
    /// `<Adv, r>` labeled A but some round-`r` message is not delivered.
    AWithoutFullDelivery {
        round: Round,
        missing: ProcessorId,
    },
    UnknownProcessor {
        round: Round,
        id: ProcessorId,
    },
    /// Edge out of an unlabeled adversary vertex.
    EdgeFromUndefined {
        round: Round,
        receiver: ProcessorId,
    },
    EdgeOutOfRange {
        round: Round,
        receiver: ProcessorId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "malformed graph: {msg}"),
            Violation::NonBinaryInput { id, value } => write!(f, "input of {id} is {value}, not binary"),
            Violation::InitialA => f.write_str("<Adv, 0> cannot be labeled A"),
            Violation::AWithoutPredecessor { round } => {
                write!(f, "<Adv, {round}> labeled A but <Adv, {}> is unlabeled", round - 1)
            }
            Violation::AWithoutFullDelivery { round, missing } => {
                write!(f, "<Adv, {round}> labeled A but <Adv, {}> is not connected to <{missing}, {round}>", round - 1)
            }
            Violation::UnknownProcessor { round, id } => write!(f, "<Adv, {round}> labeled by unknown {id}"),
            Violation::EdgeFromUndefined { round, receiver } => {
                write!(f, "edge <Adv, {}> -> <{receiver}, {round}> but <Adv, {}> is unlabeled", round - 1, round - 1)
            }
            Violation::EdgeOutOfRange { round, receiver } => {
                write!(f, "edge to <{receiver}, {round}> is outside the grid")
            }
        }
    }
}

/// Checks every structural restriction; an empty list means valid.
pub fn validate_graph(g: &CommGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if g.n == 0 {
        out.push(Violation::Shape("n must be at least 1".into()));
    }
    if g.labels.len() != g.rounds as usize + 1 {
        out.push(Violation::Shape(format!(
            "expected {} labels for R = {}, found {}",
            g.rounds + 1,
            g.rounds,
            g.labels.len()
        )));
        return out;
    }
    if g.base_inputs.len() != g.n {
        out.push(Violation::Shape(format!("expected {} inputs, found {}", g.n, g.base_inputs.len())));
    }
    for (slot, &value) in g.base_inputs.iter().enumerate() {
        if value > 1 {
            out.push(Violation::NonBinaryInput { id: ProcessorId::from_slot(slot), value });
        }
    }
    for (r, label) in g.labels.iter().enumerate() {
        let round = r as Round;
        match label {
            Some(Label::Proc(id)) if id.slot() >= g.n => out.push(Violation::UnknownProcessor { round, id: *id }),
            Some(Label::A) if round == 0 => out.push(Violation::InitialA),
            Some(Label::A) => {
                if g.labels[r - 1].is_none() {
                    out.push(Violation::AWithoutPredecessor { round });
                }
                for id in ProcessorId::all(g.n) {
                    if !g.edges.contains(&(round, id)) {
                        out.push(Violation::AWithoutFullDelivery { round, missing: id });
                    }
                }
            }
            _ => {}
        }
    }
    for &(round, receiver) in &g.edges {
        if round == 0 || round > g.rounds || receiver.slot() >= g.n {
            out.push(Violation::EdgeOutOfRange { round, receiver });
        } else if g.labels[round as usize - 1].is_none() {
            out.push(Violation::EdgeFromUndefined { round, receiver });
        }
    }
    out
}

impl CommGraph {
    /// Unlabeled graph without adversary activity.
    pub fn failure_free(base_inputs: Vec<Value>, rounds: Round) -> Self {
        CommGraph {
            n: base_inputs.len(),
            rounds,
            labels: vec![None; rounds as usize + 1],
            edges: BTreeSet::new(),
            base_inputs,
        }
    }

    pub fn label(&self, round: Round) -> Option<Label> {
        self.labels.get(round as usize).copied().flatten()
    }

    pub fn has_edge(&self, round: Round, receiver: ProcessorId) -> bool {
        self.edges.contains(&(round, receiver))
    }

    pub fn is_valid(&self) -> bool {
        validate_graph(self).is_empty()
    }

    /// No labels on `<Adv, r>, ..., <Adv, R>`.
    pub fn is_failure_free_from(&self, r: Round) -> bool {
        (r..=self.rounds).all(|s| self.label(s).is_none())
    }

    /// Some processor `p_i` for which this is a `<p_i, r>`-graph:
    /// `<Adv, r>` labeled `i` and every later adversary vertex labeled A.
    pub fn enacted_from(&self, r: Round) -> Option<ProcessorId> {
        match self.label(r) {
            Some(Label::Proc(id)) if (r + 1..=self.rounds).all(|s| self.label(s) == Some(Label::A)) => Some(id),
            _ => None,
        }
    }

    /// Identity impersonated by the adversary state labeled at `<Adv, r>`.
    pub fn impersonated_at(&self, r: Round) -> Option<ProcessorId> {
        let mut s = r as usize;
        loop {
            match self.labels.get(s).copied().flatten()? {
                Label::Proc(id) => return Some(id),
                Label::A if s == 0 => return None,
                Label::A => s -= 1,
            }
        }
    }

    fn checked(self, op: &str) -> Result<CommGraph, ChainError> {
        let violations = validate_graph(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ChainError::precondition(
                op,
                format!(
                    "result is invalid: {}",
                    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
                ),
            ))
        }
    }

    pub fn to_text(&self) -> String {
        let file = GraphFile {
            schema: GRAPH_SCHEMA_VERSION,
            n: self.n,
            rounds: self.rounds,
            labels: self.labels.iter().map(|l| l.map_or_else(|| "-".to_string(), |l| l.to_string())).collect(),
            edges: self.edges.iter().map(|&(r, id)| [r, id.index()]).collect(),
            base_inputs: self.base_inputs.clone(),
        };
        toml::to_string(&file).expect("graph files always serialize")
    }

    pub fn from_text(text: &str) -> Result<Self, ChainError> {
        let file: GraphFile = toml::from_str(text).map_err(|e| ChainError::Parse(e.to_string()))?;
        if file.schema != GRAPH_SCHEMA_VERSION {
            return Err(ChainError::Parse(format!(
                "unsupported graph schema {} (expected {GRAPH_SCHEMA_VERSION})",
                file.schema
            )));
        }
        let labels = file
            .labels
            .iter()
            .map(|s| match s.as_str() {
                "-" => Ok(None),
                "A" => Ok(Some(Label::A)),
                num => num
                    .parse::<u32>()
                    .ok()
                    .filter(|&i| i >= 1)
                    .map(|i| Some(Label::Proc(ProcessorId::new(i))))
                    .ok_or_else(|| ChainError::Parse(format!("bad label `{num}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edges = file
            .edges
            .iter()
            .map(|&[r, i]| {
                if i == 0 {
                    Err(ChainError::Parse("edge receiver index must be >= 1".into()))
                } else {
                    Ok((r, ProcessorId::new(i)))
                }
            })
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(CommGraph { n: file.n, rounds: file.rounds, labels, edges, base_inputs: file.base_inputs })
    }

    /// Graphviz rendering of the adversary vertices and edges.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph comm {\n  rankdir=LR;\n  node [shape=circle];\n");
        for r in 0..=self.rounds {
            for id in ProcessorId::all(self.n) {
                let _ = writeln!(out, "  \"{id}_{r}\" [label=\"<{id}, {r}>\"];");
            }
            let label = self.label(r).map_or_else(String::new, |l| format!(": {l}"));
            let _ = writeln!(out, "  \"adv_{r}\" [label=\"<Adv, {r}>{label}\", shape=box];");
        }
        for &(r, id) in &self.edges {
            let _ = writeln!(out, "  \"adv_{}\" -> \"{id}_{r}\";", r - 1);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema: u32,
    n: usize,
    #[serde(rename = "R")]
    rounds: Round,
    labels: Vec<String>,
    edges: Vec<[u32; 2]>,
    base_inputs: Vec<Value>,
}

/// Labels `<Adv, r>` of an `r`-ff graph with `label`.
pub fn op_label(g: &CommGraph, label: Label, r: Round) -> Result<CommGraph, ChainError> {
    if r > g.rounds {
        return Err(ChainError::precondition("label", format!("round {r} beyond horizon {}", g.rounds)));
    }
    if !g.is_failure_free_from(r) {
        return Err(ChainError::precondition("label", format!("graph is not {r}-ff")));
    }
    let mut out = g.clone();
    out.labels[r as usize] = Some(label);
    out.checked("label")
}

/// Removes the label of `<Adv, r>`, which must have no outgoing edges.
pub fn op_remove(g: &CommGraph, r: Round) -> Result<CommGraph, ChainError> {
    if g.label(r).is_none() {
        return Err(ChainError::precondition("remove", format!("<Adv, {r}> is unlabeled")));
    }
    if let Some(&(_, id)) = g.edges.iter().find(|(round, _)| *round == r + 1) {
        return Err(ChainError::precondition("remove", format!("<Adv, {r}> is connected to <{id}, {}>", r + 1)));
    }
    let mut out = g.clone();
    out.labels[r as usize] = None;
    out.checked("remove")
}

/// Swaps the real `p_i` and the copy the adversary enacts from round
/// `r + 1` on, in a `<p_i, r>`-graph. For `r = 0` this flips `p_i`'s input;
/// otherwise it toggles the edge `<Adv, r-1> -> <p_i, r>` when `<Adv, r-1>`
/// is labeled.
pub fn op_switch(g: &CommGraph, r: Round) -> Result<CommGraph, ChainError> {
    let Some(id) = g.enacted_from(r) else {
        return Err(ChainError::precondition("switch", format!("not a <p_i, {r}>-graph")));
    };
    let mut out = g.clone();
    if r == 0 {
        out.base_inputs[id.slot()] ^= 1;
    } else if g.label(r - 1).is_some() && !out.edges.remove(&(r, id)) {
        out.edges.insert((r, id));
    }
    out.checked("switch")
}
