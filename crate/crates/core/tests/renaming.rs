mod common;

use common::*;
use impsim::adversary::{null_adversary, random_forger, sybil_twin_adversary, PayloadMode, TwinSpec};
use impsim::protocols::Renaming;
use impsim::{Engine, EngineConfig, Value};
use proptest::prelude::*;

#[test]
fn failure_free_names_are_input_ranks() {
    let mut r = rng(11);
    for _ in 0..20 {
        let inputs = distinct_inputs(&mut r, 9, 50);
        let run = renaming_run(9, 2, inputs.clone(), 0, &mut null_adversary()).unwrap();
        check_renaming_run(&run, 9, 2).unwrap();
        for (slot, d) in run.outcome.decisions.iter().enumerate() {
            let d = d.unwrap();
            let rank = 1 + inputs.iter().filter(|&&v| v < inputs[slot]).count() as Value;
            assert_eq!(d.value, rank);
            assert_eq!(d.round as Value, rank + 3);
        }
    }
}

#[test]
fn random_forger_campaign_keeps_every_invariant() {
    for seed in 0..40 {
        let inputs = distinct_inputs(&mut rng(seed), 9, 1000);
        let mode = if seed % 2 == 0 { PayloadMode::Mutate } else { PayloadMode::Replay };
        let run = renaming_run(9, 2, inputs, seed, &mut random_forger(seed ^ 0xabc, mode)).unwrap();
        check_renaming_run(&run, 9, 2).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn twins_fill_the_namespace_in_input_order() {
    let (n, k) = (9, 2);
    let protocol = Renaming::new(n, k);
    let inputs: Vec<Value> = (1..=9).collect();
    let twins = vec![TwinSpec { target: pid(1), alt_input: 10 }, TwinSpec { target: pid(2), alt_input: 11 }];
    let mut adversary = sybil_twin_adversary(twins, protocol, k).unwrap();
    let cfg = EngineConfig::new(n, k, protocol.horizon(), 0).with_full_horizon();
    let mut engine = Engine::new(cfg, &protocol, inputs.clone()).unwrap();
    engine.run_with(&mut adversary, |_| {}).unwrap();
    let outcome = engine.finish();
    let mut named: Vec<(Value, Value)> =
        outcome.decisions.iter().enumerate().map(|(s, d)| (inputs[s], d.unwrap().value)).collect();
    named.extend(adversary.shadow_decisions().iter().map(|(t, d)| (t.alt_input, d.unwrap().value)));
    check_instances(&named, n + k).unwrap();
    let mut names: Vec<Value> = named.iter().map(|&(_, name)| name).collect();
    names.sort();
    assert_eq!(names, (1..=11).collect::<Vec<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn renaming_is_safe_under_random_forgery(seed in any::<u64>(), k in 1usize..=2, extra in 1usize..=3) {
        let n = k * k + 2 * k + extra;
        let inputs = distinct_inputs(&mut rng(seed), n, 10 * n as Value);
        let run = renaming_run(n, k, inputs, seed, &mut random_forger(seed, PayloadMode::Mutate)).unwrap();
        prop_assert!(check_renaming_run(&run, n, k).is_ok(), "{:?}", check_renaming_run(&run, n, k));
    }
}
