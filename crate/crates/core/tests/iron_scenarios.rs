use std::sync::Arc;

use cyclotest_core::contracts::VerdictKind;
use cyclotest_core::coverage::{CoverageReport, Criterion};
use cyclotest_core::dsl::{Signature, Value};
use cyclotest_core::interp::Valuation;
use cyclotest_core::iron::{
    add_standing_still_invariant, desk_scale, iron_piecemeal_scenarios, iron_reduction, iron_scenario,
    iron_specification, make_mutant, IronSut, IronTiming, MutantId,
};
use cyclotest_core::kernel::{CycleContext, KernelConfig};
use cyclotest_core::reduction::{coverage_scenario, ScenarioOptions};
use cyclotest_core::mediator::{ControlSubsystem, InProcessLink, SutHost};
use cyclotest_core::temporal::HeldSemantics;
use cyclotest_core::traversal::{run_scenario, AbstractState, Scenario, ScenarioRun, TraversalConfig, TraversalError};

const PERIOD: u64 = 1000;

fn run_with(sut: Box<dyn ControlSubsystem>, scenario: &Scenario, semantics: HeldSemantics) -> ScenarioRun {
    let r = iron_reduction(&desk_scale());
    let mut spec = iron_specification(r.model.clone(), semantics);
    let mut link = InProcessLink::new(SutHost::new(sut, KernelConfig::deterministic(PERIOD)));
    run_scenario(scenario, &mut spec, &mut link, &TraversalConfig::default())
}

fn run(mutant: Option<MutantId>) -> ScenarioRun {
    let r = iron_reduction(&desk_scale());
    run_with(
        Box::new(make_mutant(mutant, IronTiming::desk())),
        &iron_scenario(&r, PERIOD),
        HeldSemantics::Inclusive,
    )
}

#[test]
fn correct_sut_passes_with_full_branch_coverage() {
    let out = run(None);
    assert!(out.error().is_none(), "{:?}", out.error());
    assert!(out.log.all_pass(), "{}", out.log.to_json_lines());
    let r = iron_reduction(&desk_scale());
    let mut cov = CoverageReport::new(&r.model);
    cov.accumulate_all(&out.traces).unwrap();
    assert_eq!(cov.ratio(Criterion::Branch), 1.0);
    assert_eq!(cov.ratio(Criterion::Decision), 1.0);
    let states: Vec<String> = out.automaton().states.iter().map(|s| s.to_string()).collect();
    assert_eq!(states, ["(0,1,0,1)", "(0,1,1,0)", "(1,0,0,1)"]);
    assert!(out.automaton().pending().is_empty());
}

#[test]
fn every_mutant_is_killed_by_a_postcondition_failure() {
    for m in MutantId::ALL {
        let out = run(Some(m));
        assert!(
            out.log.failures().any(|e| e.verdict == VerdictKind::PostconditionFailure),
            "{m} survived"
        );
    }
}

#[test]
fn inverted_heating_fails_on_the_standing_still_case() {
    let out = run(Some(MutantId::M1));
    let e = out
        .log
        .failures()
        .find(|e| e.case == Some(1))
        .expect("case 1 exercised");
    assert_eq!(e.verdict, VerdictKind::PostconditionFailure);
    assert_eq!(e.mismatches[0].name, "heating");
    assert_eq!(e.mismatches[0].expected, 0);
    assert_eq!(e.mismatches[0].actual, Some(1));
}

/// Replays the logged inputs on a fresh correct SUT and returns the cycles
/// at which heating first switches off after being on.
fn switch_off_cycles(log: &[cyclotest_core::traversal::LogEntry]) -> Vec<u64> {
    let mut sut = IronSut::new(IronTiming::desk());
    let mut prev = 1;
    let mut out = Vec::new();
    for e in log {
        let h = sut.step_at(e.inputs["move"] != 0, e.inputs["position"] != 0, e.cycle * PERIOD);
        if prev == 1 && h == 0 {
            out.push(e.cycle);
        }
        prev = h;
    }
    out
}

#[test]
fn wrong_duration_fails_only_on_boundary_cycles() {
    let out = run(Some(MutantId::M3));
    let boundaries = switch_off_cycles(&out.log.0);
    let failed: Vec<u64> = out.log.failures().map(|e| e.cycle).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|c| boundaries.contains(c)), "{failed:?} vs {boundaries:?}");
}

#[test]
fn strict_semantics_accepts_the_off_by_one_mutant() {
    let r = iron_reduction(&desk_scale());
    let out = run_with(
        Box::new(make_mutant(Some(MutantId::M2), IronTiming::desk())),
        &coverage_scenario(
            "iron",
            &r,
            PERIOD,
            ScenarioOptions {
                semantics: HeldSemantics::Strict,
                ..Default::default()
            },
        ),
        HeldSemantics::Strict,
    );
    assert!(out.error().is_none(), "{:?}", out.error());
    assert!(out.log.all_pass(), "{}", out.log.to_json_lines());
    assert_eq!(out.traversal.automaton.states.len(), 3);
}

#[test]
fn standing_still_invariant_holds_for_the_correct_sut() {
    let r = iron_reduction(&desk_scale());
    let mut spec = iron_specification(r.model.clone(), HeldSemantics::Inclusive);
    add_standing_still_invariant(&mut spec).unwrap();
    let sut = Box::new(IronSut::new(IronTiming::desk()));
    let mut link = InProcessLink::new(SutHost::new(sut, KernelConfig::deterministic(PERIOD)));
    let out = run_scenario(&iron_scenario(&r, PERIOD), &mut spec, &mut link, &TraversalConfig::default());
    assert!(out.log.all_pass());

    let mut spec = iron_specification(r.model.clone(), HeldSemantics::Inclusive);
    add_standing_still_invariant(&mut spec).unwrap();
    let sut = Box::new(make_mutant(Some(MutantId::M1), IronTiming::desk()));
    let mut link = InProcessLink::new(SutHost::new(sut, KernelConfig::deterministic(PERIOD)));
    let out = run_scenario(&iron_scenario(&r, PERIOD), &mut spec, &mut link, &TraversalConfig::default());
    assert!(out.log.failures().any(|e| e.verdict == VerdictKind::InvariantViolation));
}

#[test]
fn piecemeal_runs_merge_to_full_branch_coverage() {
    let r = iron_reduction(&desk_scale());
    let mut total = CoverageReport::new(&r.model);
    let scenarios = iron_piecemeal_scenarios(&r, PERIOD);
    assert_eq!(scenarios.len(), 2);
    for s in &scenarios {
        let out = run_with(Box::new(IronSut::new(IronTiming::desk())), s, HeldSemantics::Inclusive);
        assert!(out.log.all_pass());
        let mut part = CoverageReport::new(&r.model);
        part.accumulate_all(&out.traces).unwrap();
        assert!(part.ratio(Criterion::Branch) < 1.0);
        total.merge(&part).unwrap();
    }
    assert_eq!(total.ratio(Criterion::Branch), 1.0);
}

/// Seeded nondeterministic mutant: whenever the correct output is 0 it
/// reports the parity of the number of times the iron was picked up, a
/// quantity the abstract state does not capture.
struct ParityIron {
    inner: IronSut,
    last_move: bool,
    pickups: u32,
    heating: Value,
}

impl ControlSubsystem for ParityIron {
    fn signature(&self) -> Signature {
        self.inner.signature()
    }

    fn step(&mut self, inputs: &Valuation, ctx: &CycleContext) -> Result<(), String> {
        let moved = inputs["move"] != 0;
        if moved && !self.last_move {
            self.pickups += 1;
        }
        self.last_move = moved;
        let h = self.inner.step_at(moved, inputs["position"] != 0, ctx.sys_time_ms);
        self.heating = if h == 0 { Value::from(self.pickups % 2) } else { h };
        Ok(())
    }

    fn outputs(&self) -> Valuation {
        [("heating".to_string(), self.heating)].into()
    }
}

#[test]
fn nondeterministic_mutant_is_detected() {
    let r = iron_reduction(&desk_scale());
    let mut scenario = iron_scenario(&r, PERIOD);
    let base = scenario.state_fn.clone();
    scenario.state_fn = Arc::new(move |s| {
        let mut v = base(s).0;
        v.push(s.last_observation.as_ref().map_or(1, |o| o.outputs["heating"]));
        AbstractState(v)
    });
    let sut = ParityIron {
        inner: IronSut::new(IronTiming::desk()),
        last_move: false,
        pickups: 0,
        heating: 1,
    };
    let out = run_with(Box::new(sut), &scenario, HeldSemantics::Inclusive);
    assert!(
        matches!(out.error(), Some(TraversalError::NondeterminismDetected { .. })),
        "{:?}",
        out.error()
    );

    // The correct SUT under the same extended state function stays deterministic.
    let out = run_with(Box::new(IronSut::new(IronTiming::desk())), &scenario, HeldSemantics::Inclusive);
    assert!(out.error().is_none(), "{:?}", out.error());
}
