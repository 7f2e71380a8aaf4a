//! Cycle-synchronous evaluation of temporal predicates.
//!
//! A predicate `(literal, T)` is satisfied at system time `t` when the literal
//! has held on every cycle since some cycle with system time `s` and
//! `t - s >= T` (or `> T` under [`HeldSemantics::Strict`]). The duration of the
//! first holding cycle itself is not counted: only start timestamps are kept.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Literal, ModelAst, TemporalPredicateDecl, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemporalError {
    #[error("system time went backwards for `{id}`: {previous} ms -> {now} ms")]
    TimeRegression { id: String, previous: u64, now: u64 },
    #[error("no value for `{0}` while stepping temporal predicates")]
    MissingValue(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldSemantics {
    /// `elapsed >= duration`
    #[default]
    Inclusive,
    /// `elapsed > duration`
    Strict,
}

impl HeldSemantics {
    pub fn reached(self, elapsed_ms: u64, duration_ms: u64) -> bool {
        match self {
            HeldSemantics::Inclusive => elapsed_ms >= duration_ms,
            HeldSemantics::Strict => elapsed_ms > duration_ms,
        }
    }
}

/// Tracking record of one temporal predicate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateState {
    pub id: String,
    pub literal: Literal,
    pub duration_ms: u64,
    /// System time since which the literal has held; `None` if it did not
    /// hold at the last update.
    since_ms: Option<u64>,
    last_update_ms: Option<u64>,
}

impl PredicateState {
    pub fn new(decl: &TemporalPredicateDecl) -> Self {
        Self {
            id: decl.id.clone(),
            literal: decl.literal.clone(),
            duration_ms: decl.duration_ms,
            since_ms: None,
            last_update_ms: None,
        }
    }

    pub fn since_ms(&self) -> Option<u64> {
        self.since_ms
    }

    pub fn last_update_ms(&self) -> Option<u64> {
        self.last_update_ms
    }

    /// Restores a state with a known start timestamp (used by reachability
    /// search and tests).
    pub fn with_since(mut self, since_ms: Option<u64>, at_ms: u64) -> Self {
        debug_assert!(since_ms.map_or(true, |s| s <= at_ms));
        self.since_ms = since_ms;
        self.last_update_ms = Some(at_ms);
        self
    }

    /// Records whether the literal holds on the cycle with system time
    /// `sys_time_ms`.
    pub fn step(&mut self, holds: bool, sys_time_ms: u64) -> Result<(), TemporalError> {
        if let Some(prev) = self.last_update_ms {
            if sys_time_ms < prev {
                return Err(TemporalError::TimeRegression {
                    id: self.id.clone(),
                    previous: prev,
                    now: sys_time_ms,
                });
            }
        }
        self.last_update_ms = Some(sys_time_ms);
        if !holds {
            self.since_ms = None;
        } else if self.since_ms.is_none() {
            self.since_ms = Some(sys_time_ms);
        }
        Ok(())
    }

    pub fn elapsed_ms(&self, sys_time_ms: u64) -> Option<u64> {
        self.since_ms.map(|s| sys_time_ms.saturating_sub(s))
    }

    pub fn is_satisfied(&self, sys_time_ms: u64, semantics: HeldSemantics) -> bool {
        self.elapsed_ms(sys_time_ms)
            .is_some_and(|e| semantics.reached(e, self.duration_ms))
    }
}

/// Satisfaction of every temporal predicate on one cycle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeFlags(pub BTreeMap<String, bool>);

impl TimeFlags {
    pub fn all_false<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        TimeFlags(ids.into_iter().map(|id| (id.to_string(), false)).collect())
    }

    pub fn get(&self, id: &str) -> Option<bool> {
        self.0.get(id).copied()
    }

    pub fn set(&mut self, id: &str, value: bool) {
        self.0.insert(id.to_string(), value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Flag values in the given id order as 0/1.
    pub fn vector(&self, order: &[TemporalPredicateDecl]) -> Vec<u8> {
        order
            .iter()
            .map(|p| u8::from(self.get(&p.id).unwrap_or(false)))
            .collect()
    }
}

impl fmt::Display for TimeFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {}", u8::from(*v))?;
        }
        f.write_str("}")
    }
}

pub fn compute_time_flags(
    states: &[PredicateState],
    sys_time_ms: u64,
    semantics: HeldSemantics,
) -> TimeFlags {
    TimeFlags(
        states
            .iter()
            .map(|s| (s.id.clone(), s.is_satisfied(sys_time_ms, semantics)))
            .collect(),
    )
}

/// The set of predicate states evolving together over the cycles of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateTracker {
    states: Vec<PredicateState>,
    semantics: HeldSemantics,
}

impl PredicateTracker {
    pub fn new(decls: &[TemporalPredicateDecl], semantics: HeldSemantics) -> Self {
        Self {
            states: decls.iter().map(PredicateState::new).collect(),
            semantics,
        }
    }

    pub fn from_states(states: Vec<PredicateState>, semantics: HeldSemantics) -> Self {
        Self { states, semantics }
    }

    pub fn states(&self) -> &[PredicateState] {
        &self.states
    }

    pub fn semantics(&self) -> HeldSemantics {
        self.semantics
    }

    /// Steps every predicate with the current value of its literal's variable.
    pub fn step(
        &mut self,
        value_of: impl Fn(&str) -> Option<Value>,
        sys_time_ms: u64,
    ) -> Result<(), TemporalError> {
        for s in &mut self.states {
            let v = value_of(&s.literal.var)
                .ok_or_else(|| TemporalError::MissingValue(s.literal.var.clone()))?;
            s.step(s.literal.holds(v), sys_time_ms)?;
        }
        Ok(())
    }

    /// Flags as of the most recent step (all false before the first step).
    pub fn flags(&self) -> TimeFlags {
        TimeFlags(
            self.states
                .iter()
                .map(|s| {
                    let sat = s
                        .last_update_ms
                        .is_some_and(|t| s.is_satisfied(t, self.semantics));
                    (s.id.clone(), sat)
                })
                .collect(),
        )
    }

    pub fn flags_at(&self, sys_time_ms: u64) -> TimeFlags {
        compute_time_flags(&self.states, sys_time_ms, self.semantics)
    }
}

/// Rescales durations (and cycle periods) so desk-scale runs keep the same
/// cycle-count semantics.
///
/// Explicit overrides win; otherwise `ms * num / den`, rounded to the nearest
/// millisecond and at least 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeScale {
    pub num: u64,
    pub den: u64,
    pub overrides: BTreeMap<u64, u64>,
}

impl Default for TimeScale {
    fn default() -> Self {
        Self::identity()
    }
}

impl TimeScale {
    pub fn identity() -> Self {
        Self {
            num: 1,
            den: 1,
            overrides: BTreeMap::new(),
        }
    }

    pub fn ratio(num: u64, den: u64) -> Self {
        assert!(num > 0 && den > 0, "time scale must be positive");
        Self {
            num,
            den,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, from_ms: u64, to_ms: u64) -> Self {
        self.overrides.insert(from_ms, to_ms);
        self
    }

    pub fn is_identity(&self) -> bool {
        self.num == self.den && self.overrides.is_empty()
    }

    /// Scales a predicate duration.
    pub fn duration(&self, ms: u64) -> u64 {
        if let Some(&to) = self.overrides.get(&ms) {
            return to;
        }
        self.ratio_only(ms)
    }

    /// Scales a cycle period; overrides do not apply.
    pub fn period(&self, ms: u64) -> u64 {
        self.ratio_only(ms)
    }

    fn ratio_only(&self, ms: u64) -> u64 {
        let scaled = (ms as u128 * self.num as u128 + self.den as u128 / 2) / self.den as u128;
        (scaled as u64).max(1)
    }

    pub fn apply_to_predicates(&self, preds: &mut [TemporalPredicateDecl]) {
        for p in preds {
            p.duration_ms = self.duration(p.duration_ms);
        }
    }

    pub fn apply_to_model(&self, model: &mut ModelAst) {
        self.apply_to_predicates(&mut model.predicates);
    }
}

impl FromStr for TimeScale {
    type Err = String;

    /// `"1/20"`, `"0.5"`, or `"1"`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (
                n.trim().parse::<u64>().map_err(|e| format!("bad numerator: {e}"))?,
                d.trim().parse::<u64>().map_err(|e| format!("bad denominator: {e}"))?,
            ),
            None => match s.split_once('.') {
                Some((int, frac)) => {
                    let den = 10u64
                        .checked_pow(frac.len() as u32)
                        .ok_or("too many decimals")?;
                    let joined = format!("{int}{frac}");
                    (joined.parse::<u64>().map_err(|e| format!("bad scale: {e}"))?, den)
                }
                None => (s.parse::<u64>().map_err(|e| format!("bad scale: {e}"))?, 1),
            },
        };
        if num == 0 || den == 0 {
            return Err("time scale must be positive".into());
        }
        Ok(Self::ratio(num, den))
    }
}

/// Parses `"60=3,900=5"` (seconds) or `"60s=3s,900s=5000ms"` into overrides.
pub fn parse_duration_overrides(s: &str) -> Result<BTreeMap<u64, u64>, String> {
    fn ms(part: &str) -> Result<u64, String> {
        let part = part.trim();
        let (digits, factor) = if let Some(d) = part.strip_suffix("ms") {
            (d, 1)
        } else if let Some(d) = part.strip_suffix('s') {
            (d, 1000)
        } else {
            (part, 1000)
        };
        let v: u64 = digits
            .trim()
            .parse()
            .map_err(|e| format!("bad duration {part:?}: {e}"))?;
        if v == 0 {
            return Err(format!("duration {part:?} must be positive"));
        }
        Ok(v * factor)
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (from, to) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected FROM=TO, got {pair:?}"))?;
            Ok((ms(from)?, ms(to)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Span;

    fn decl(id: &str, var: &str, value: Value, duration_ms: u64) -> TemporalPredicateDecl {
        TemporalPredicateDecl {
            id: id.into(),
            literal: Literal::new(var, value),
            duration_ms,
            span: Span::default(),
        }
    }

    fn iron_decls() -> Vec<TemporalPredicateDecl> {
        vec![
            decl("move_eq_f_t1", "move", 0, 60_000),
            decl("position_eq_f_t1", "position", 0, 60_000),
            decl("move_eq_f_t2", "move", 0, 900_000),
            decl("position_eq_t_t2", "position", 1, 900_000),
        ]
    }

    #[test]
    fn step_cases() {
        let mut ps = PredicateState::new(&decl("p", "move", 0, 60_000));
        ps.step(false, 5000).unwrap();
        assert_eq!(ps.since_ms(), None);
        ps.step(true, 5000).unwrap();
        assert_eq!(ps.since_ms(), Some(5000));
        ps.step(true, 6000).unwrap();
        assert_eq!(ps.since_ms(), Some(5000));
        ps.step(false, 7000).unwrap();
        assert_eq!(ps.since_ms(), None);
    }

    #[test]
    fn time_regression_is_an_error() {
        let mut ps = PredicateState::new(&decl("p", "move", 0, 60_000));
        ps.step(true, 5000).unwrap();
        assert_eq!(
            ps.step(true, 4999),
            Err(TemporalError::TimeRegression {
                id: "p".into(),
                previous: 5000,
                now: 4999
            })
        );
    }

    // Oracle: simulate one holding cycle per second from t = 0 and report
    // the first cycle at which the predicate reads satisfied.
    fn first_satisfied_cycle(duration_ms: u64, semantics: HeldSemantics) -> u64 {
        let mut ps = PredicateState::new(&decl("p", "move", 0, duration_ms));
        (0..)
            .map(|n| n * 1000)
            .find(|&t| {
                ps.step(true, t).unwrap();
                ps.is_satisfied(t, semantics)
            })
            .unwrap()
    }

    #[test]
    fn satisfaction_boundary() {
        assert_eq!(first_satisfied_cycle(60_000, HeldSemantics::Inclusive), 60_000);
        assert_eq!(first_satisfied_cycle(60_000, HeldSemantics::Strict), 61_000);

        let ps = PredicateState::new(&decl("p", "move", 0, 60_000)).with_since(Some(0), 0);
        assert!(ps.is_satisfied(60_000, HeldSemantics::Inclusive));
        assert!(!ps.is_satisfied(59_999, HeldSemantics::Inclusive));
        let idle = PredicateState::new(&decl("p", "move", 0, 60_000));
        assert!(!idle.is_satisfied(u64::MAX, HeldSemantics::Inclusive));
    }

    #[test]
    fn iron_flags() {
        let mut t = PredicateTracker::new(&iron_decls(), HeldSemantics::Inclusive);
        t.step(|v| Some(if v == "move" { 0 } else { 1 }), 0).unwrap();
        assert!(t.flags().0.values().all(|f| !f));

        // !move and position for 900 s at one cycle per second.
        let mut t = PredicateTracker::new(&iron_decls(), HeldSemantics::Inclusive);
        for n in 0..=900 {
            t.step(|v| Some(if v == "move" { 0 } else { 1 }), n * 1000).unwrap();
        }
        let flags = t.flags();
        assert_eq!(flags.get("move_eq_f_t1"), Some(true));
        assert_eq!(flags.get("move_eq_f_t2"), Some(true));
        assert_eq!(flags.get("position_eq_f_t1"), Some(false));
        assert_eq!(flags.get("position_eq_t_t2"), Some(true));
        assert_eq!(flags, t.flags_at(900_000));

        t.step(|v| Some(if v == "move" { 1 } else { 1 }), 901_000).unwrap();
        assert_eq!(t.flags().get("move_eq_f_t1"), Some(false));
        assert_eq!(t.flags().get("move_eq_f_t2"), Some(false));
    }

    #[test]
    fn missing_value() {
        let mut t = PredicateTracker::new(&iron_decls(), HeldSemantics::Inclusive);
        let err = t.step(|v| (v == "move").then_some(0), 0).unwrap_err();
        assert_eq!(err, TemporalError::MissingValue("position".into()));
    }

    #[test]
    fn time_scale_parsing_and_application() {
        let s: TimeScale = "1/20".parse().unwrap();
        assert_eq!(s.duration(60_000), 3000);
        assert_eq!(s.period(1000), 50);
        let s: TimeScale = "0.5".parse().unwrap();
        assert_eq!(s.duration(60_000), 30_000);
        assert!("0".parse::<TimeScale>().is_err());

        let o = parse_duration_overrides("60=3,900s=5000ms").unwrap();
        assert_eq!(o.get(&60_000), Some(&3000));
        assert_eq!(o.get(&900_000), Some(&5000));
        let mut s = TimeScale::identity();
        s.overrides = o;
        let mut preds = iron_decls();
        s.apply_to_predicates(&mut preds);
        assert_eq!(
            preds.iter().map(|p| p.duration_ms).collect::<Vec<_>>(),
            [3000, 3000, 5000, 5000]
        );
    }

    proptest::proptest! {
        // Holding continuously: satisfaction flips once and stays.
        #[test]
        fn monotone_accumulation(duration in 1u64..20_000, period in 1u64..3000, cycles in 1usize..60) {
            let mut ps = PredicateState::new(&decl("p", "a", 1, duration));
            let mut flips = 0;
            let mut prev = false;
            for n in 0..cycles {
                let t = n as u64 * period;
                ps.step(true, t).unwrap();
                let sat = ps.is_satisfied(t, HeldSemantics::Inclusive);
                proptest::prop_assert!(!prev || sat);
                flips += usize::from(sat != prev);
                prev = sat;
            }
            proptest::prop_assert!(flips <= 1);
        }

        // One non-holding cycle resets accumulation.
        #[test]
        fn reset_restarts(duration in 1u64..5000, before in 0u64..20, after in 1u64..20) {
            let mut ps = PredicateState::new(&decl("p", "a", 1, duration));
            let mut t = 0;
            for _ in 0..before { ps.step(true, t).unwrap(); t += 1000; }
            ps.step(false, t).unwrap();
            proptest::prop_assert!(!ps.is_satisfied(t, HeldSemantics::Inclusive));
            t += 1000;
            let start = t;
            for _ in 0..after { ps.step(true, t).unwrap(); t += 1000; }
            let last = t - 1000;
            proptest::prop_assert_eq!(ps.since_ms(), Some(start));
            proptest::prop_assert_eq!(
                ps.is_satisfied(last, HeldSemantics::Inclusive),
                last - start >= duration
            );
        }

        // Same literal: satisfied for T implies satisfied for every T' <= T.
        #[test]
        fn implication_lattice(short in 1u64..10_000, extra in 0u64..10_000, pattern in proptest::collection::vec(proptest::bool::ANY, 1..40)) {
            let long = short + extra;
            let mut a = PredicateState::new(&decl("a", "x", 1, short));
            let mut b = PredicateState::new(&decl("b", "x", 1, long));
            for (n, holds) in pattern.into_iter().enumerate() {
                let t = n as u64 * 700;
                a.step(holds, t).unwrap();
                b.step(holds, t).unwrap();
                if b.is_satisfied(t, HeldSemantics::Inclusive) {
                    proptest::prop_assert!(a.is_satisfied(t, HeldSemantics::Inclusive));
                }
            }
        }
    }
}
