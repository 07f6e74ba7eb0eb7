use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::run::{run_scenario, RunReport};
use super::scenario::ScenarioConfig;
use crate::error::ConfigError;

#[derive(Clone, Debug, Serialize)]
pub struct VerdictTally {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub statistical: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunFailure {
    pub seed: u64,
    pub verdicts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_detail: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub max: u64,
}

impl Spread {
    fn of(values: &[u64]) -> Option<Spread> {
        let max = *values.iter().max()?;
        Some(Spread { mean: values.iter().sum::<u64>() as f64 / values.len() as f64, max })
    }
}

/// Aggregate of a Monte Carlo campaign. A pure function of the seed list.
#[derive(Clone, Debug, Serialize)]
pub struct CampaignReport {
    pub protocol: String,
    pub runs: u64,
    pub seed_base: u64,
    pub verdicts: Vec<VerdictTally>,
    /// Runs breaking a per-run property, by seed.
    pub failures: Vec<RunFailure>,
    pub terminated: u64,
    pub termination_rate: f64,
    /// How many processors decided each value, over all runs.
    pub decision_histogram: BTreeMap<String, u64>,
    pub max_decision_set_size: usize,
    pub rounds: Spread,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<Spread>,
    pub wall_time_ms: f64,
}

impl CampaignReport {
    pub fn safety_ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.safety_ok() {
            0
        } else {
            1
        }
    }
}

/// Runs seeds `seed_base..seed_base + runs` (in parallel) and aggregates.
pub fn run_campaign(scn: &ScenarioConfig, runs: u64, seed_base: u64) -> Result<CampaignReport, ConfigError> {
    if runs == 0 {
        return Err(ConfigError::field("runs", "must be at least 1"));
    }
    let end = seed_base.checked_add(runs).ok_or_else(|| ConfigError::field("seed_base", "seed range overflows"))?;
    let started = Instant::now();
    let reports: Vec<RunReport> =
        (seed_base..end).into_par_iter().map(|seed| run_scenario(&scn.with_seed(seed))).collect::<Result<_, _>>()?;
    Ok(aggregate(scn, seed_base, &reports, started))
}

/// Folds per-run reports, which must be sorted by seed.
pub fn aggregate(scn: &ScenarioConfig, seed_base: u64, reports: &[RunReport], started: Instant) -> CampaignReport {
    let mut verdicts: Vec<VerdictTally> = Vec::new();
    let mut failures = Vec::new();
    let mut histogram: BTreeMap<String, u64> = BTreeMap::new();
    let mut rounds = Vec::with_capacity(reports.len());
    let mut phases = Vec::new();
    let mut terminated = 0;
    let mut max_set = 0;
    for r in reports {
        for v in &r.verdicts {
            let tally = match verdicts.iter_mut().position(|t| t.name == v.name) {
                Some(i) => &mut verdicts[i],
                None => {
                    verdicts.push(VerdictTally { name: v.name, passed: 0, failed: 0, statistical: v.statistical });
                    verdicts.last_mut().expect("just pushed")
                }
            };
            if v.passed {
                tally.passed += 1;
            } else {
                tally.failed += 1;
            }
        }
        if !r.safety_ok() {
            let broken: Vec<_> = r.verdicts.iter().filter(|v| !v.passed && !v.statistical).collect();
            failures.push(RunFailure {
                seed: r.seed,
                verdicts: broken.iter().map(|v| v.name.to_string()).collect(),
                first_detail: broken.first().map(|v| v.detail.clone()),
            });
        }
        if !r.non_termination {
            terminated += 1;
        }
        for d in r.decisions.iter().flatten() {
            *histogram.entry(d.value.to_string()).or_default() += 1;
        }
        max_set = max_set.max(r.decision_set().len());
        rounds.push(r.rounds_run as u64);
        if let Some(p) = r.phases {
            phases.push(p as u64);
        }
    }
    let runs = reports.len() as u64;
    CampaignReport {
        protocol: scn.protocol.to_string(),
        runs,
        seed_base,
        verdicts,
        failures,
        terminated,
        termination_rate: terminated as f64 / runs.max(1) as f64,
        decision_histogram: histogram,
        max_decision_set_size: max_set,
        rounds: Spread::of(&rounds).unwrap_or(Spread { mean: 0.0, max: 0 }),
        phases: Spread::of(&phases),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}
