//! Identities, payloads, envelopes and inboxes shared by every layer.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Input values, decisions, names and phases are all naturals.
pub type Value = u64;

/// Synchronous round number, starting at 1.
pub type Round = u32;

/// A processor identity `p_i` with `i` in `1..=n`.
///
/// Protocols may only test identities for equality; the ordering exists so
/// that the engine can keep inboxes and sets canonical.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessorId(u32);

impl ProcessorId {
    /// Builds `p_index`. Panics on `index == 0`.
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "processor ids are 1-based");
        ProcessorId(index)
    }

    /// Id for the zero-based slot `slot`.
    pub fn from_slot(slot: usize) -> Self {
        ProcessorId(slot as u32 + 1)
    }

    /// The 1-based index `i` of `p_i`.
    pub fn index(self) -> u32 {
        self.0
    }

    /// Zero-based slot, for indexing per-processor vectors.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    /// All ids `p_1..p_n`.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessorId> {
        (0..n).map(ProcessorId::from_slot)
    }
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p_{}", self.0)
    }
}

impl fmt::Debug for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ProcessorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let index = s
            .strip_prefix("p_")
            .and_then(|rest| rest.parse::<u32>().ok())
            .filter(|&i| i >= 1)
            .ok_or_else(|| format!("invalid processor id `{s}`, expected p_<i> with i >= 1"))?;
        Ok(ProcessorId(index))
    }
}

impl Serialize for ProcessorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProcessorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One tagged field group inside a payload.
///
/// The same vocabulary is used by every protocol so that adversaries can
/// replay or perturb whatever they observe without knowing which protocol
/// produced it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Item {
    Input {
        value: Value,
    },
    /// First-level echo of a round-1 value (`echo'` in the vector protocol).
    Echo1 {
        id: ProcessorId,
        value: Value,
    },
    Echo {
        id: ProcessorId,
        value: Value,
    },
    #[serde(rename = "SAVAL")]
    SaVal {
        value: Value,
    },
    #[serde(rename = "SAECHO")]
    SaEcho {
        value: Value,
    },
    BrReport {
        phase: Value,
        value: Value,
    },
    BrPropose {
        phase: Value,
        value: Option<Value>,
    },
    Decided {
        value: Value,
    },
    /// Complete local view of the sender (full-information protocol).
    FullInfo {
        view: Arc<FullView>,
    },
}

impl Item {
    /// Rewrites every processor id carried by the item.
    pub fn map_ids(&self, f: &impl Fn(ProcessorId) -> ProcessorId) -> Item {
        match self {
            Item::Echo1 { id, value } => Item::Echo1 { id: f(*id), value: *value },
            Item::Echo { id, value } => Item::Echo { id: f(*id), value: *value },
            Item::FullInfo { view } => Item::FullInfo { view: Arc::new(view.map_ids(f)) },
            other => other.clone(),
        }
    }
}

/// Local state of a full-information processor, which is also its message.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FullView {
    pub id: ProcessorId,
    pub input: Value,
    pub inboxes: Vec<Vec<(ProcessorId, Payload)>>,
}

impl FullView {
    pub fn map_ids(&self, f: &impl Fn(ProcessorId) -> ProcessorId) -> FullView {
        FullView {
            id: f(self.id),
            input: self.input,
            inboxes: self
                .inboxes
                .iter()
                .map(|inbox| {
                    let mut mapped: Vec<_> = inbox.iter().map(|(src, p)| (f(*src), p.map_ids(f))).collect();
                    mapped.sort();
                    mapped
                })
                .collect(),
        }
    }
}

/// What one processor broadcasts in one round: a canonical (sorted,
/// duplicate-free) bundle of items.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Payload(Arc<[Item]>);

impl Payload {
    pub fn new(mut items: Vec<Item>) -> Self {
        items.sort();
        items.dedup();
        Payload(items.into())
    }

    pub fn empty() -> Self {
        Payload::default()
    }

    pub fn single(item: Item) -> Self {
        Payload(Arc::from(vec![item]))
    }

    pub fn items(&self) -> &[Item] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map_ids(&self, f: &impl Fn(ProcessorId) -> ProcessorId) -> Payload {
        Payload::new(self.0.iter().map(|item| item.map_ids(f)).collect())
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Where an envelope really came from. Visible to the harness only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Genuine,
    Forged,
}

/// A message as delivered: claimed sender, receiver and content.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Envelope {
    pub claimed_sender: ProcessorId,
    pub receiver: ProcessorId,
    pub payload: Payload,
    pub origin: Origin,
    pub round: Round,
}

impl Envelope {
    /// Canonical delivery order: claimed sender, then payload, forged last.
    pub(crate) fn delivery_key(&self) -> (ProcessorId, &Payload, Origin) {
        (self.claimed_sender, &self.payload, self.origin)
    }
}

/// The multiset of `(claimed_sender, payload)` pairs one processor sees in
/// one round. Origin marks are erased; the same sender may appear twice.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RoundInbox {
    entries: Vec<(ProcessorId, Payload)>,
}

impl RoundInbox {
    pub fn new(entries: Vec<(ProcessorId, Payload)>) -> Self {
        RoundInbox { entries }
    }

    /// Same multiset, sorted canonically.
    pub fn canonical(mut entries: Vec<(ProcessorId, Payload)>) -> Self {
        entries.sort();
        RoundInbox { entries }
    }

    pub fn entries(&self) -> &[(ProcessorId, Payload)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<(ProcessorId, Payload)> {
        self.entries
    }

    /// Every `(claimed_sender, item)` pair in the inbox.
    pub fn items(&self) -> impl Iterator<Item = (ProcessorId, &Item)> {
        self.entries.iter().flat_map(|(src, payload)| payload.items().iter().map(move |item| (*src, item)))
    }

    /// Removes one entry equal to `entry`; returns whether one was found.
    pub fn remove_one(&mut self, entry: &(ProcessorId, Payload)) -> bool {
        match self.entries.iter().position(|e| e == entry) {
            Some(pos) => {
                self.entries.remove(pos);
                true
            }
            None => false,
        }
    }

    pub fn push(&mut self, entry: (ProcessorId, Payload)) {
        self.entries.push(entry);
        self.entries.sort();
    }
}
