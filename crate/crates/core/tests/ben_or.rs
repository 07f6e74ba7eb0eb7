mod common;

use common::*;
use impsim::adversary::{null_adversary, DuplicateSpammer};
use impsim::protocols::{async_filter, BenOr};
use impsim::{run_protocol, Item, Payload, ProcessorId, RoundInbox, Value};
use proptest::prelude::*;

#[test]
fn every_binary_input_vector_without_adversary() {
    let protocol = BenOr::new(5, 0);
    for mask in 0u32..32 {
        let inputs: Vec<Value> = (0..5).map(|s| Value::from(mask >> s & 1)).collect();
        for seed in 0..8 {
            let outcome = run_protocol(&ben_or_cfg(5, 0, 60, seed), &protocol, &inputs, &mut null_adversary()).unwrap();
            check_ben_or(&inputs, &outcome, 60).unwrap_or_else(|e| panic!("{inputs:?} seed {seed}: {e}"));
        }
    }
}

#[test]
fn duplicate_spammer_campaign() {
    let protocol = BenOr::new(5, 2);
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let inputs: Vec<Value> = (0..5).map(|_| rand::Rng::gen_range(&mut r, 0..2)).collect();
        let outcome =
            run_protocol(&ben_or_cfg(5, 2, 60, seed), &protocol, &inputs, &mut DuplicateSpammer::new(seed, 2)).unwrap();
        check_ben_or(&inputs, &outcome, 60).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

fn inbox_strategy() -> impl Strategy<Value = Vec<(u32, Value)>> {
    proptest::collection::vec((1u32..=5, 0u64..2), 0..12)
}

proptest! {
    #[test]
    fn filter_keeps_exactly_singleton_tags(entries in inbox_strategy()) {
        let inbox = RoundInbox::canonical(
            entries.iter().map(|&(id, v)| (ProcessorId::new(id), Payload::single(Item::BrReport { phase: 1, value: v }))).collect(),
        );
        let filtered = async_filter(&inbox);
        for id in 1..=5u32 {
            let count = entries.iter().filter(|e| e.0 == id).count();
            let kept = filtered.entries().iter().filter(|e| e.0 == ProcessorId::new(id)).count();
            prop_assert_eq!(kept, usize::from(count == 1));
        }
        prop_assert_eq!(async_filter(&filtered), filtered);
    }

    #[test]
    fn spammed_runs_agree(seed in any::<u64>(), inputs in proptest::collection::vec(0u64..2, 5)) {
        let protocol = BenOr::new(5, 2);
        let outcome =
            run_protocol(&ben_or_cfg(5, 2, 60, seed), &protocol, &inputs, &mut DuplicateSpammer::new(seed, 2)).unwrap();
        prop_assert!(check_ben_or(&inputs, &outcome, 60).is_ok());
    }
}
