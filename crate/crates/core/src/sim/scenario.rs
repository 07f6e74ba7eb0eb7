use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::adversary::{PayloadMode, TwinSpec};
use crate::chain::CommGraph;
use crate::engine::{splitmix64, validate_config, EngineConfig, ProtocolKind};
use crate::error::ConfigError;
use crate::protocols::{BenOr, Fault, Renaming, SetAgreement};
use crate::types::{ProcessorId, Round, Value};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

const INPUT_SALT: u64 = 0x494e_5055_5453_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolChoice {
    Renaming,
    SetAgreement,
    BenOr,
}

impl fmt::Display for ProtocolChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolChoice::Renaming => "renaming",
            ProtocolChoice::SetAgreement => "set_agreement",
            ProtocolChoice::BenOr => "ben_or",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputSpec {
    Explicit(Vec<Value>),
    /// Uniform over `min..=max`, redrawn for every seed. Renaming draws
    /// distinct values.
    Uniform {
        min: Value,
        max: Value,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversarySpec {
    Null,
    SybilTwin(Vec<TwinSpec>),
    RandomForger(PayloadMode),
    DuplicateSpammer { per_receiver: usize },
    Graph { path: PathBuf, graph: CommGraph },
}

/// A validated run description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub protocol: ProtocolChoice,
    pub n: usize,
    pub k: usize,
    pub inputs: InputSpec,
    pub value_domain: BTreeSet<Value>,
    pub adversary: AdversarySpec,
    pub seed: u64,
    pub max_rounds: Round,
    pub test_hook: Option<Fault>,
    pub allow_weak_bound: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: Option<u32>,
    protocol: Option<String>,
    n: Option<usize>,
    k: Option<usize>,
    inputs: Option<Vec<Value>>,
    input_dist: Option<RawInputDist>,
    value_domain: Option<Vec<Value>>,
    adversary: Option<RawAdversary>,
    seed: Option<u64>,
    max_rounds: Option<Round>,
    max_phases: Option<u32>,
    test_hook: Option<Fault>,
    #[serde(default)]
    allow_weak_bound: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputDist {
    min: Value,
    max: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdversary {
    kind: String,
    twins: Option<Vec<TwinSpec>>,
    mode: Option<PayloadMode>,
    per_receiver: Option<usize>,
    path: Option<PathBuf>,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::field(field, "required"))
}

/// Reads, parses and validates a scenario file. Relative graph paths are
/// resolved against the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::field("scenario", format!("{}: {e}", path.display())))?;
    parse_scenario(&text, path.parent())
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::field("scenario", e.message().to_string()))?;
    let schema = required(raw.schema, "schema")?;
    if schema != SCENARIO_SCHEMA_VERSION {
        return Err(ConfigError::field(
            "schema",
            format!("unsupported version {schema} (expected {SCENARIO_SCHEMA_VERSION})"),
        ));
    }
    let protocol = match required(raw.protocol, "protocol")?.as_str() {
        "renaming" => ProtocolChoice::Renaming,
        "set_agreement" => ProtocolChoice::SetAgreement,
        "ben_or" => ProtocolChoice::BenOr,
        other => {
            return Err(ConfigError::field(
                "protocol",
                format!("unknown protocol `{other}` (expected renaming, set_agreement or ben_or)"),
            ))
        }
    };
    let n = required(raw.n, "n")?;
    let k = required(raw.k, "k")?;
    let seed = raw.seed.unwrap_or(0);

    let inputs = match (raw.inputs, raw.input_dist) {
        (Some(_), Some(_)) => return Err(ConfigError::field("inputs", "give either inputs or input_dist, not both")),
        (Some(v), None) => InputSpec::Explicit(v),
        (None, Some(d)) => {
            if d.min > d.max {
                return Err(ConfigError::field("input_dist", "min exceeds max"));
            }
            InputSpec::Uniform { min: d.min, max: d.max }
        }
        (None, None) => {
            return Err(ConfigError::field("inputs", "required (or input_dist)"));
        }
    };

    let value_domain: BTreeSet<Value> = match (protocol, raw.value_domain) {
        (ProtocolChoice::SetAgreement, Some(d)) => d.into_iter().collect(),
        (ProtocolChoice::SetAgreement, None) => return Err(ConfigError::field("value_domain", "required")),
        (_, Some(_)) => return Err(ConfigError::field("value_domain", "only meaningful for set_agreement")),
        (_, None) => BTreeSet::new(),
    };

    let max_rounds = match protocol {
        ProtocolChoice::BenOr => {
            if raw.max_rounds.is_some() {
                return Err(ConfigError::field("max_rounds", "ben_or takes max_phases"));
            }
            BenOr::rounds_for(required(raw.max_phases, "max_phases")?)
        }
        _ if raw.max_phases.is_some() => {
            return Err(ConfigError::field("max_phases", "only meaningful for ben_or"));
        }
        ProtocolChoice::Renaming => raw.max_rounds.unwrap_or((n + k + 4) as Round),
        ProtocolChoice::SetAgreement => raw.max_rounds.unwrap_or(SetAgreement::HORIZON),
    };

    let adversary = match raw.adversary {
        None => AdversarySpec::Null,
        Some(a) => parse_adversary(a, base_dir)?,
    };

    let scenario = ScenarioConfig {
        protocol,
        n,
        k,
        inputs,
        value_domain,
        adversary,
        seed,
        max_rounds,
        test_hook: raw.test_hook,
        allow_weak_bound: raw.allow_weak_bound,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn parse_adversary(a: RawAdversary, base_dir: Option<&Path>) -> Result<AdversarySpec, ConfigError> {
    let unexpected = |field: &str, present: bool| {
        if present {
            Err(ConfigError::field(format!("adversary.{field}"), format!("not used by adversary kind `{}`", a.kind)))
        } else {
            Ok(())
        }
    };
    let spec = match a.kind.as_str() {
        "null" => AdversarySpec::Null,
        "sybil_twin" => AdversarySpec::SybilTwin(required(a.twins.clone(), "adversary.twins")?),
        "random_forger" => AdversarySpec::RandomForger(a.mode.unwrap_or(PayloadMode::Replay)),
        "duplicate_spammer" => {
            AdversarySpec::DuplicateSpammer { per_receiver: required(a.per_receiver, "adversary.per_receiver")? }
        }
        "graph" => {
            let rel = required(a.path.clone(), "adversary.path")?;
            let path = match base_dir {
                Some(dir) if rel.is_relative() => dir.join(&rel),
                _ => rel,
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ConfigError::field("adversary.path", format!("{}: {e}", path.display())))?;
            let graph = CommGraph::from_text(&text).map_err(|e| ConfigError::field("adversary.path", e.to_string()))?;
            AdversarySpec::Graph { path, graph }
        }
        other => {
            return Err(ConfigError::field(
                "adversary.kind",
                format!(
                    "unknown kind `{other}` (expected null, sybil_twin, random_forger, duplicate_spammer or graph)"
                ),
            ))
        }
    };
    unexpected("twins", a.twins.is_some() && !matches!(spec, AdversarySpec::SybilTwin(_)))?;
    unexpected("mode", a.mode.is_some() && !matches!(spec, AdversarySpec::RandomForger(_)))?;
    unexpected("per_receiver", a.per_receiver.is_some() && !matches!(spec, AdversarySpec::DuplicateSpammer { .. }))?;
    unexpected("path", a.path.is_some() && !matches!(spec, AdversarySpec::Graph { .. }))?;
    Ok(spec)
}

impl ScenarioConfig {
    pub fn kind(&self) -> ProtocolKind {
        match self.protocol {
            ProtocolChoice::Renaming => ProtocolKind::Renaming { allow_weak_bound: self.allow_weak_bound },
            ProtocolChoice::SetAgreement => ProtocolKind::SetAgreement { domain_size: self.value_domain.len() },
            ProtocolChoice::BenOr => ProtocolKind::BenOr,
        }
    }

    /// Shadows decide after the real processors, so twin runs go to the
    /// horizon.
    pub fn engine_config(&self, seed: u64) -> EngineConfig {
        let cfg = EngineConfig::new(self.n, self.k, self.max_rounds, seed);
        match self.adversary {
            AdversarySpec::SybilTwin(_) | AdversarySpec::Graph { .. } => cfg.with_full_horizon(),
            _ => cfg,
        }
    }

    pub fn with_seed(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig { seed, ..self.clone() }
    }

    pub fn renaming(&self) -> Renaming {
        Renaming { n: self.n, k: self.k, allow_weak_bound: self.allow_weak_bound, fault: self.test_hook }
    }

    pub fn set_agreement(&self) -> SetAgreement {
        SetAgreement { n: self.n, k: self.k, domain: self.value_domain.clone(), fault: self.test_hook }
    }

    pub fn ben_or(&self) -> BenOr {
        BenOr::new(self.n, self.k)
    }

    /// Inputs of the run with `seed`.
    pub fn inputs_for(&self, seed: u64) -> Vec<Value> {
        match &self.inputs {
            InputSpec::Explicit(v) => v.clone(),
            InputSpec::Uniform { min, max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ INPUT_SALT));
                if self.protocol == ProtocolChoice::Renaming {
                    let span = (max - min + 1) as usize;
                    index::sample(&mut rng, span, self.n).into_iter().map(|i| min + i as Value).collect()
                } else if self.protocol == ProtocolChoice::SetAgreement {
                    let domain: Vec<Value> =
                        self.value_domain.iter().copied().filter(|v| (min..=max).contains(&v)).collect();
                    (0..self.n).map(|_| domain[rng.gen_range(0..domain.len())]).collect()
                } else {
                    (0..self.n).map(|_| rng.gen_range(*min..=*max)).collect()
                }
            }
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        validate_config(&self.engine_config(self.seed), self.kind())?;
        if let InputSpec::Explicit(v) = &self.inputs {
            if v.len() != self.n {
                return Err(ConfigError::field("inputs", format!("expected {} values, got {}", self.n, v.len())));
            }
        }
        match (self.protocol, &self.inputs) {
            (ProtocolChoice::Renaming, InputSpec::Explicit(v)) => {
                if v.iter().collect::<BTreeSet<_>>().len() != v.len() {
                    return Err(ConfigError::field("inputs", "renaming inputs must be distinct"));
                }
            }
            (ProtocolChoice::Renaming, InputSpec::Uniform { min, max }) => {
                if ((max - min) as u128 + 1) < self.n as u128 {
                    return Err(ConfigError::field("input_dist", "range too small for distinct inputs"));
                }
            }
            (ProtocolChoice::SetAgreement, InputSpec::Explicit(v)) => {
                if let Some(bad) = v.iter().find(|x| !self.value_domain.contains(x)) {
                    return Err(ConfigError::field("inputs", format!("{bad} is outside value_domain")));
                }
            }
            (ProtocolChoice::SetAgreement, InputSpec::Uniform { min, max }) => {
                if !self.value_domain.iter().any(|v| (min..=max).contains(&v)) {
                    return Err(ConfigError::field("input_dist", "no value_domain value in range"));
                }
            }
            (ProtocolChoice::BenOr, InputSpec::Explicit(v)) => {
                if v.iter().any(|&x| x > 1) {
                    return Err(ConfigError::field("inputs", "ben_or inputs must be binary"));
                }
            }
            (ProtocolChoice::BenOr, InputSpec::Uniform { max, .. }) => {
                if *max > 1 {
                    return Err(ConfigError::field("input_dist", "ben_or inputs must be binary"));
                }
            }
        }
        match &self.adversary {
            AdversarySpec::SybilTwin(twins) => {
                if twins.len() > self.k {
                    return Err(ConfigError::field(
                        "adversary.twins",
                        format!("{} twins exceed the budget k = {}", twins.len(), self.k),
                    ));
                }
                let targets: BTreeSet<ProcessorId> = twins.iter().map(|t| t.target).collect();
                if targets.len() != twins.len() {
                    return Err(ConfigError::field("adversary.twins", "twin targets must be distinct"));
                }
                if let Some(t) = twins.iter().find(|t| t.target.slot() >= self.n) {
                    return Err(ConfigError::field("adversary.twins", format!("{} is not a processor", t.target)));
                }
            }
            AdversarySpec::Graph { graph, .. } => {
                if graph.n != self.n || graph.rounds != self.max_rounds {
                    return Err(ConfigError::field(
                        "adversary.path",
                        format!(
                            "graph has n={}, R={} but scenario has n={}, max_rounds={}",
                            graph.n, graph.rounds, self.n, self.max_rounds
                        ),
                    ));
                }
                if self.k == 0 {
                    return Err(ConfigError::field("k", "graph adversary needs k >= 1"));
                }
                if self.inputs != InputSpec::Explicit(graph.base_inputs.clone()) {
                    return Err(ConfigError::field("inputs", "must equal the graph's base_inputs"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
