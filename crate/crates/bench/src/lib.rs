//! Benchmark workloads, shared by the criterion harness.

use impsim::adversary::{random_forger, sybil_twin_adversary, DuplicateSpammer, PayloadMode, TwinSpec};
use impsim::chain::{build_full_chain, verify_chain, Chain};
use impsim::protocols::{BenOr, FullInformation, Renaming, SetAgreement};
use impsim::{run_protocol, EngineConfig, ProcessorId, Value};

pub fn renaming_under_forgery(n: usize, k: usize, seed: u64) -> usize {
    let protocol = Renaming::new(n, k);
    let cfg = EngineConfig::new(n, k, protocol.horizon(), seed);
    let inputs: Vec<Value> = (1..=n as Value).map(|v| v * 3).collect();
    let outcome =
        run_protocol(&cfg, &protocol, &inputs, &mut random_forger(seed, PayloadMode::Mutate)).expect("renaming run");
    outcome.trace.len()
}

pub fn renaming_with_twins(seed: u64) -> usize {
    let (n, k) = (9, 2);
    let protocol = Renaming::new(n, k);
    let twins = vec![
        TwinSpec { target: ProcessorId::new(1), alt_input: 10 },
        TwinSpec { target: ProcessorId::new(2), alt_input: 11 },
    ];
    let mut adversary = sybil_twin_adversary(twins, protocol, k).expect("two twins fit k = 2");
    let cfg = EngineConfig::new(n, k, protocol.horizon(), seed).with_full_horizon();
    let inputs: Vec<Value> = (1..=n as Value).collect();
    run_protocol(&cfg, &protocol, &inputs, &mut adversary).expect("twin run").trace.len()
}

pub fn set_agreement_under_forgery(seed: u64) -> usize {
    let protocol = SetAgreement::new(7, 2, [0, 1, 2]);
    let cfg = EngineConfig::new(7, 2, SetAgreement::HORIZON, seed);
    let inputs: Vec<Value> = (0..7).map(|i| (i + seed) % 3).collect();
    run_protocol(&cfg, &protocol, &inputs, &mut random_forger(seed, PayloadMode::Mutate))
        .expect("set agreement run")
        .trace
        .len()
}

pub fn ben_or_spammed(seed: u64) -> u32 {
    let protocol = BenOr::new(5, 2);
    let cfg = EngineConfig::new(5, 2, BenOr::rounds_for(60), seed);
    let inputs = [0, 1, 0, 1, seed % 2];
    run_protocol(&cfg, &protocol, &inputs, &mut DuplicateSpammer::new(seed, 2)).expect("ben-or run").rounds_run
}

pub fn chain(n: usize, rounds: u32) -> Chain {
    build_full_chain(n, rounds).expect("chain within limits")
}

pub fn verify(chain: &Chain) -> bool {
    verify_chain(chain, &FullInformation).expect("chain executes").all_similar()
}
