use std::io::BufReader;
use std::net::TcpListener;

use proptest::prelude::*;

use cyclotest_core::dsl::{extract_predicates, parse_model, Value};
use cyclotest_core::interp::{eval_model, initial_state, Valuation};
use cyclotest_core::iron::{
    desk_scale, iron_model, iron_reduction, iron_scenario, iron_specification, make_mutant, IronSut,
    IronTiming, MutantId,
};
use cyclotest_core::kernel::KernelConfig;
use cyclotest_core::mediator::{serve, ControlSubsystem, InProcessLink, Link, RemoteLink, SutHost, DEFAULT_TIMEOUT};
use cyclotest_core::temporal::{HeldSemantics, PredicateTracker};
use cyclotest_core::traversal::{run_scenario, TestLog, TraversalConfig};

const PERIOD: u64 = 1000;

fn inputs(m: bool, p: bool) -> Valuation {
    [("move".to_string(), m as Value), ("position".to_string(), p as Value)].into()
}

/// Walks every input sequence up to `depth` and returns the first
/// (sequence, expected, actual) where the SUT and the model disagree.
fn first_disagreement(sut: IronSut, depth: usize) -> Option<(Vec<(bool, bool)>, Value, Value)> {
    let model = iron_model(&desk_scale());
    let state = initial_state(&model);
    let tracker = PredicateTracker::new(&model.predicates, HeldSemantics::Inclusive);
    let mut stack = vec![(Vec::new(), tracker, sut)];
    while let Some((seq, tracker, sut)) = stack.pop() {
        if seq.len() == depth {
            continue;
        }
        let now = seq.len() as u64 * PERIOD;
        for (m, p) in [(false, false), (false, true), (true, false), (true, true)] {
            let i = inputs(m, p);
            let mut t = tracker.clone();
            t.step(|v| i.get(v).copied(), now).unwrap();
            let expected = eval_model(&model, &i, &state, &t.flags()).unwrap().outputs["heating"];
            let mut s = sut.clone();
            let actual = s.step_at(m, p, now);
            let mut next = seq.clone();
            next.push((m, p));
            if expected != actual {
                return Some((next, expected, actual));
            }
            stack.push((next, t, s));
        }
    }
    None
}

#[test]
fn correct_sut_agrees_with_the_model_on_all_short_sequences() {
    assert_eq!(first_disagreement(IronSut::new(IronTiming::desk()), 9), None);
}

#[test]
fn every_mutant_disagrees_with_the_model() {
    for m in MutantId::ALL {
        let d = first_disagreement(make_mutant(Some(m), IronTiming::desk()), 9);
        assert!(d.is_some(), "{m} agrees with the model");
    }
}

const CONJ: &str = "model c { input a: bool; input b: bool; input c: bool; output o: bool;
    logic { if (held(a && !b && c, 3s)) { o = 1; } else { o = 0; } } }";

/// Reference: the whole conjunction holds on every cycle of the window.
fn window_holds(seq: &[(bool, bool, bool)], n: usize, cycles: usize) -> bool {
    n >= cycles && seq[n - cycles..=n].iter().all(|&(a, b, c)| a && !b && c)
}

proptest! {
    #[test]
    fn held_conjunction_equals_conjunction_of_held_literals(
        seq in proptest::collection::vec(any::<(bool, bool, bool)>(), 1..30)
    ) {
        let ex = extract_predicates(&parse_model(CONJ).unwrap()).unwrap();
        prop_assert_eq!(ex.model.predicates.len(), 3);
        let mut t = PredicateTracker::new(&ex.model.predicates, HeldSemantics::Inclusive);
        for (n, &(a, b, c)) in seq.iter().enumerate() {
            let v: Valuation = [("a".into(), a as Value), ("b".into(), b as Value), ("c".into(), c as Value)].into();
            t.step(|x| v.get(x).copied(), n as u64 * PERIOD).unwrap();
            let all = t.flags().0.values().all(|&f| f);
            prop_assert_eq!(all, window_holds(&seq, n, 3), "cycle {}", n);
        }
    }
}

fn run_over(link: &mut dyn Link) -> TestLog {
    let r = iron_reduction(&desk_scale());
    let mut spec = iron_specification(r.model.clone(), HeldSemantics::Inclusive);
    let out = run_scenario(&iron_scenario(&r, PERIOD), &mut spec, link, &TraversalConfig::default());
    assert!(out.error().is_none());
    out.log
}

#[test]
fn tcp_and_in_process_runs_log_identically() {
    let sut = || Box::new(make_mutant(Some(MutantId::M3), IronTiming::desk()));
    let mut local = InProcessLink::new(SutHost::new(sut(), KernelConfig::deterministic(PERIOD)));
    let expected = run_over(&mut local);
    assert!(!expected.all_pass());

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        serve(sut(), KernelConfig::deterministic(1), reader, stream)
    });
    let sig = IronSut::new(IronTiming::desk()).signature();
    let mut remote = RemoteLink::connect_tcp(addr, &sig, PERIOD, DEFAULT_TIMEOUT).unwrap();
    let got = run_over(&mut remote);
    remote.shutdown().unwrap();
    let cycles = server.join().unwrap().unwrap();
    assert_eq!(got.to_json_lines(), expected.to_json_lines());
    assert_eq!(cycles.len(), got.0.len());
}
