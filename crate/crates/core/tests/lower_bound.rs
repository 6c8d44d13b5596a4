use mmreg_core::checker::PropertyId;
use mmreg_core::fuzz::adversarial_one;
use mmreg_core::history::EventKind;
use mmreg_core::lower_bound::{demo, find_witness, LowerBoundError, READ_OP, WRITE_OP};
use mmreg_core::model::example_graph;
use mmreg_core::tolerance::t_bridge;
use mmreg_core::{Bag, OpKind, ProcSet, ProcessId, SystemSpec, TaggedValue};
use proptest::prelude::*;

fn set(ids: &[u32]) -> ProcSet {
    ids.iter().map(|&i| ProcessId::new(i)).collect()
}

#[test]
fn seven_singletons_break_at_four() {
    let spec = SystemSpec::new(&Bag::singletons(7).unwrap(), 1).unwrap();
    let report = demo(&spec, 4).unwrap();
    assert_eq!(report.t_l, 3);
    assert_eq!(report.witness.p, set(&[1, 2, 3]));
    assert_eq!(report.witness.p_prime, set(&[4, 5, 6]));
    assert!(report.certified());
}

#[test]
fn eight_processes_break_at_every_level_above_the_threshold() {
    let ring: Vec<(u32, u32)> = (1..=8).map(|i| (i, i % 8 + 1)).collect();
    for spec in [
        SystemSpec::new(&Bag::singletons(8).unwrap(), 1).unwrap(),
        SystemSpec::uniform(&mmreg_core::Graph::new(8, &ring).unwrap(), 1).unwrap(),
    ] {
        let t_l = t_bridge(spec.bag()).unwrap().t;
        assert!(t_l < 7);
        for t in t_l + 1..8 {
            assert!(demo(&spec, t).unwrap().certified(), "t = {t}");
        }
    }
}

#[test]
fn five_singletons_break_at_three() {
    let spec = SystemSpec::new(&Bag::singletons(5).unwrap(), 1).unwrap();
    let report = demo(&spec, 3).unwrap();
    assert_eq!((report.witness.p, report.witness.p_prime, report.witness.q), (set(&[1, 2]), set(&[3, 4]), set(&[5])));
    assert!(report.certified());
}

#[test]
fn example_system_keeps_reader_registers_initial() {
    let spec = SystemSpec::uniform(&example_graph(), 1).unwrap();
    let report = demo(&spec, 4).unwrap();
    assert!(report.certified());
    let h = &report.outcome.history;
    let write = h.op(WRITE_OP, OpKind::Write).unwrap();
    let read = h.op(READ_OP, OpKind::Read).unwrap();
    assert_eq!(write.value, Some(TaggedValue::new(1, "v")));
    assert_eq!(read.value, Some(TaggedValue::initial()));
    // every register p4 read during its read still held the initial value
    let until = read.response_step.unwrap();
    for e in &report.outcome.trace.events {
        if e.step > until {
            break;
        }
        if let EventKind::RegRead { process, value, .. } = &e.kind {
            if *process == ProcessId::new(4) {
                assert!(value.is_initial(), "{e:?}");
            }
        }
    }
    assert!(report.outcome.trace.crashed().is_empty());
    assert!(report.outcome.trace.is_quiescent());
}

#[test]
fn writer_outside_every_witness_is_reassigned() {
    // p3 shares a set with every other process
    let spec = SystemSpec::uniform(&example_graph(), 3).unwrap();
    let report = demo(&spec, 4).unwrap();
    assert!(report.writer_reassigned);
    assert_eq!(report.writer, ProcessId::new(1));
    assert!(report.certified());
}

#[test]
fn refusals() {
    let full = SystemSpec::new(&Bag::full_sharing(4).unwrap(), 1).unwrap();
    assert_eq!(find_witness(full.bag(), 3).unwrap_err(), LowerBoundError::NotAboveThreshold { t: 3, t_l: 3 });
    assert!(matches!(demo(&full, 2), Err(LowerBoundError::NotAboveThreshold { .. })));
    assert!(matches!(demo(&full, 4), Err(LowerBoundError::TooManyCrashes { .. })));
}

fn bag(max_n: usize) -> impl Strategy<Value = Bag> {
    (2..=max_n).prop_flat_map(|n| {
        let full = (1u64 << n) - 1;
        prop::collection::vec(1..=full, 0..=n)
            .prop_map(move |sets| Bag::from_sets(n, sets.into_iter().map(ProcSet::from_bits).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every level above the threshold is broken without a crash.
    #[test]
    fn every_level_above_the_threshold_breaks(bag in bag(7), w in 1u32..=7) {
        prop_assume!(w as usize <= bag.n());
        let spec = SystemSpec::new(&bag, w).unwrap();
        let t_l = t_bridge(spec.bag()).unwrap().t;
        for t in t_l + 1..spec.n() {
            let report = demo(&spec, t).unwrap();
            prop_assert!(report.certified(), "t = {}: {:?}", t, report.verdict);
            prop_assert!(report.isolation_held);
        }
    }

    /// Random witnesses and writers all lead to the same violation.
    #[test]
    fn adversarial_runs_always_violate(bag in bag(6), seed in any::<u64>()) {
        let spec = SystemSpec::new(&bag, 1).unwrap();
        let t_l = t_bridge(spec.bag()).unwrap().t;
        prop_assume!(t_l + 1 < spec.n());
        let r = adversarial_one(&spec, t_l + 1, seed).unwrap();
        prop_assert!(r.verdict.has(PropertyId::ReadsFromLatest));
        prop_assert_eq!(r.crashes, 0);
    }
}
