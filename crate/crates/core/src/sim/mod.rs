//! Scenario files, single runs with property checks, Monte Carlo campaigns
//! and chain generation: everything the `simctl` binary drives.

mod campaign;
mod chain_cmd;
mod run;
mod scenario;

pub use campaign::{aggregate, run_campaign, CampaignReport, RunFailure, Spread, VerdictTally};
pub use chain_cmd::{
    fingerprint, graph_file_name, parse_limits, run_chain, ChainCmdError, ChainOptions, ChainSummary,
    ChainVerification, CHAIN_INDEX, CHAIN_SUMMARY, GRAPH_DIR,
};
pub use run::{adversary_seed, replay_trace, run_scenario, ReplayReport, RunReport, ShadowOutcome, Verdict};
pub use scenario::{
    load_scenario, parse_scenario, AdversarySpec, InputSpec, ProtocolChoice, ScenarioConfig, SCENARIO_SCHEMA_VERSION,
};
