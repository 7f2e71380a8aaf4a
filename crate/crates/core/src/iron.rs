//! Iron automatic shut-off: the reference control subsystem, seeded mutants,
//! its model, specification and scenarios.
//!
//! The SUT keeps its own timers and shares no code with the interpreter or
//! the predicate trackers, so agreement with the model is a real check.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::contracts::{ContractError, Specification};
use crate::dsl::{extract_predicates, parse_model, ModelAst, Signature, Value};
use crate::interp::Valuation;
use crate::kernel::CycleContext;
use crate::mediator::ControlSubsystem;
use crate::reduction::{coverage_scenario, make_piecemeal, reduce, Reduction, ScenarioOptions, Target};
use crate::temporal::{HeldSemantics, TimeScale};
use crate::traversal::Scenario;

pub const IRON_MODEL: &str = include_str!("../models/iron.ctl");

pub const SHORT_MS: u64 = 60_000;
pub const LONG_MS: u64 = 900_000;

/// Durations used for exhaustive checks: 3 and 5 cycles at a 1 s period.
pub fn desk_scale() -> TimeScale {
    TimeScale::identity()
        .with_override(SHORT_MS, 3_000)
        .with_override(LONG_MS, 5_000)
}

/// Parsed iron model, before predicate extraction.
pub fn iron_source() -> ModelAst {
    parse_model(IRON_MODEL).expect("shipped iron model parses")
}

/// Predicate-extracted iron model with durations scaled.
pub fn iron_model(scale: &TimeScale) -> ModelAst {
    let mut m = extract_predicates(&iron_source())
        .expect("shipped iron model extracts")
        .model;
    scale.apply_to_model(&mut m);
    m
}

/// The reduction of the iron model with durations scaled.
pub fn iron_reduction(scale: &TimeScale) -> Reduction {
    let mut r = reduce(&iron_source()).expect("shipped iron model reduces");
    scale.apply_to_model(&mut r.model);
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IronTiming {
    /// Still time before switching off when lying flat.
    pub short_ms: u64,
    /// Still time before switching off when standing.
    pub long_ms: u64,
}

impl Default for IronTiming {
    fn default() -> Self {
        Self {
            short_ms: SHORT_MS,
            long_ms: LONG_MS,
        }
    }
}

impl IronTiming {
    pub fn scaled(scale: &TimeScale) -> Self {
        Self {
            short_ms: scale.duration(SHORT_MS),
            long_ms: scale.duration(LONG_MS),
        }
    }

    pub fn desk() -> Self {
        Self::scaled(&desk_scale())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MutantId {
    /// Heating complemented.
    M1,
    /// Thresholds compared with `>` instead of `>=`.
    M2,
    /// Short duration one second too long.
    M3,
    /// Still timer not reset when the iron moves.
    M4,
    /// Position test inverted.
    M5,
}

impl MutantId {
    pub const ALL: [MutantId; 5] = [Self::M1, Self::M2, Self::M3, Self::M4, Self::M5];

    pub fn description(self) -> &'static str {
        match self {
            Self::M1 => "invert-heating",
            Self::M2 => "threshold-off-by-one-cycle",
            Self::M3 => "wrong-duration",
            Self::M4 => "missing-timer-reset",
            Self::M5 => "swapped-branch",
        }
    }
}

impl fmt::Display for MutantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mutant `{0}` (expected one of M1..M5)")]
pub struct UnknownMutant(pub String);

impl FromStr for MutantId {
    type Err = UnknownMutant;

    fn from_str(s: &str) -> Result<Self, UnknownMutant> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(t) || m.description() == t)
            .ok_or_else(|| UnknownMutant(s.to_string()))
    }
}

/// The iron shut-off logic: heating is off once the iron has been still for
/// 60 s lying flat or 15 min standing.
#[derive(Clone, Debug)]
pub struct IronSut {
    timing: IronTiming,
    mutant: Option<MutantId>,
    still_since: Option<u64>,
    standing_since: Option<u64>,
    flat_since: Option<u64>,
    heating: Value,
}

impl IronSut {
    pub fn new(timing: IronTiming) -> Self {
        Self {
            timing,
            mutant: None,
            still_since: None,
            standing_since: None,
            flat_since: None,
            heating: 1,
        }
    }

    pub fn mutant(&self) -> Option<MutantId> {
        self.mutant
    }

    pub fn heating(&self) -> Value {
        self.heating
    }

    fn lasted(&self, since: Option<u64>, now: u64, need_ms: u64) -> bool {
        match since {
            None => false,
            Some(t) if self.mutant == Some(MutantId::M2) => now - t > need_ms,
            Some(t) => now - t >= need_ms,
        }
    }

    /// One cycle at system time `now_ms`; returns the new heating output.
    pub fn step_at(&mut self, moved: bool, standing: bool, now_ms: u64) -> Value {
        if moved {
            if self.mutant != Some(MutantId::M4) {
                self.still_since = None;
            }
        } else if self.still_since.is_none() {
            self.still_since = Some(now_ms);
        }
        if standing {
            self.flat_since = None;
            self.standing_since.get_or_insert(now_ms);
        } else {
            self.standing_since = None;
            self.flat_since.get_or_insert(now_ms);
        }

        let short = match self.mutant {
            Some(MutantId::M3) => self.timing.short_ms + 1_000,
            _ => self.timing.short_ms,
        };
        let branch = match self.mutant {
            Some(MutantId::M5) => !standing,
            _ => standing,
        };
        // M4 keeps a stale still timer, so it must not see `moved` here.
        let still = |s: &Self, need| {
            (s.mutant == Some(MutantId::M4) || !moved) && s.lasted(s.still_since, now_ms, need)
        };
        let off = if branch {
            still(self, self.timing.long_ms)
                && self.lasted(self.standing_since, now_ms, self.timing.long_ms)
        } else {
            still(self, short) && self.lasted(self.flat_since, now_ms, short)
        };
        let mut heating = Value::from(!off);
        if self.mutant == Some(MutantId::M1) {
            heating = 1 - heating;
        }
        self.heating = heating;
        heating
    }
}

/// The correct SUT when `id` is `None`, otherwise the given mutant.
pub fn make_mutant(id: Option<MutantId>, timing: IronTiming) -> IronSut {
    IronSut {
        mutant: id,
        ..IronSut::new(timing)
    }
}

impl ControlSubsystem for IronSut {
    fn signature(&self) -> Signature {
        Signature {
            model: "iron".into(),
            inputs: vec!["move".into(), "position".into()],
            outputs: vec!["heating".into()],
            state: Vec::new(),
        }
    }

    fn step(&mut self, inputs: &Valuation, ctx: &CycleContext) -> Result<(), String> {
        let get = |n: &str| {
            inputs
                .get(n)
                .copied()
                .ok_or_else(|| format!("missing input `{n}`"))
        };
        let moved = get("move")? != 0;
        let standing = get("position")? != 0;
        self.step_at(moved, standing, ctx.sys_time_ms);
        Ok(())
    }

    fn outputs(&self) -> Valuation {
        [("heating".to_string(), self.heating)].into()
    }
}

/// Specification of the iron against the predicate-extracted `model`.
pub fn iron_specification(model: ModelAst, semantics: HeldSemantics) -> Specification {
    Specification::new(model, semantics)
}

/// Adds the high-level requirement "standing still for 15 min means no
/// heating" as an invariant over the last observation.
pub fn add_standing_still_invariant(spec: &mut Specification) -> Result<(), ContractError> {
    spec.register_invariant(
        "standing_still_no_heating",
        &["heating", "move_eq_f_t2", "position_eq_t_t2"],
        |s| {
            let held = s.time_flags.get("move_eq_f_t2") == Some(true)
                && s.time_flags.get("position_eq_t_t2") == Some(true);
            let heating = s.last_observation.as_ref().and_then(|o| o.outputs.get("heating"));
            !held || heating == Some(&0)
        },
    )
}

/// The shipped iron scenario: generalized states from the reduction, one
/// `hold` action per input valuation.
pub fn iron_scenario(reduction: &Reduction, period_ms: u64) -> Scenario {
    coverage_scenario("iron", reduction, period_ms, ScenarioOptions::default())
}

/// Piecemeal scenarios, one per position branch.
pub fn iron_piecemeal_scenarios(reduction: &Reduction, period_ms: u64) -> Vec<Scenario> {
    use crate::dsl::NodeId;
    let parts = [NodeId(vec![true]), NodeId(vec![false])];
    let split = make_piecemeal(&reduction.model, &parts, &[Target::Measured(crate::coverage::Criterion::Branch)])
        .expect("iron branches are disjoint");
    split
        .parts
        .into_iter()
        .map(|p| {
            let name = format!("iron-{}", if p.root.0[0] { "standing" } else { "flat" });
            coverage_scenario(
                &name,
                reduction,
                period_ms,
                ScenarioOptions {
                    allowed_inputs: Some(p.allowed_inputs),
                    ..Default::default()
                },
            )
        })
        .collect()
}
