//! The test oracle: one specification function per CSUT, checking a
//! precondition, state invariants and a postcondition against the model on
//! every stimulus.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ModelAst, Symbol, Value};
use crate::interp::{DecisionTrace, Valuation};
use crate::mediator::{sync_state, CycleObservation, Link, SpecificationState};
use crate::temporal::{HeldSemantics, PredicateTracker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Pass,
    PreconditionViolation,
    InvariantViolation,
    PostconditionFailure,
    MediatorFailure,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub name: String,
    pub expected: Value,
    /// `None` when the SUT did not report the value at all.
    pub actual: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub detail: String,
    pub cycle_index: u64,
    pub mismatches: Vec<Mismatch>,
}

impl Verdict {
    fn pass(cycle_index: u64) -> Self {
        Self {
            kind: VerdictKind::Pass,
            detail: String::new(),
            cycle_index,
            mismatches: Vec::new(),
        }
    }

    fn fail(kind: VerdictKind, cycle_index: u64, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
            cycle_index,
            mismatches: Vec::new(),
        }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == VerdictKind::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cycle {}: {}", self.cycle_index, self.kind)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        for m in &self.mismatches {
            match m.actual {
                Some(a) => write!(f, "; {}: expected {}, actual {}", m.name, m.expected, a)?,
                None => write!(f, "; {}: expected {}, missing", m.name, m.expected)?,
            }
        }
        Ok(())
    }
}

/// Result of one call of the specification function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub verdict: Verdict,
    pub observation: Option<CycleObservation>,
    /// Decision path of the reference computation; absent when the call
    /// stopped before the model was evaluated.
    pub trace: Option<DecisionTrace>,
    pub expected_outputs: Option<Valuation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("an invariant named `{0}` is already registered")]
    DuplicateName(String),
    #[error("invariant `{invariant}` reads undeclared `{name}`")]
    UnknownVariable { invariant: String, name: String },
}

pub type InvariantFn = Arc<dyn Fn(&SpecificationState) -> bool + Send + Sync>;
pub type PreconditionFn = Arc<dyn Fn(&SpecificationState, &Valuation) -> Result<(), String> + Send + Sync>;

#[derive(Clone)]
struct Invariant {
    name: String,
    check: InvariantFn,
}

/// Specification of one CSUT: its predicate-rewritten model plus the
/// specification state kept in sync with the SUT.
#[derive(Clone)]
pub struct Specification {
    model: ModelAst,
    state: SpecificationState,
    invariants: Vec<Invariant>,
    precondition: Option<PreconditionFn>,
}

impl fmt::Debug for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Specification")
            .field("model", &self.model.name)
            .field("state", &self.state)
            .field(
                "invariants",
                &self.invariants.iter().map(|i| &i.name).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl Specification {
    /// `model` must be the output of predicate extraction.
    pub fn new(model: ModelAst, semantics: HeldSemantics) -> Self {
        let tracker = PredicateTracker::new(&model.predicates, semantics);
        let state = SpecificationState::initial(&model, tracker);
        Self {
            model,
            state,
            invariants: Vec::new(),
            precondition: None,
        }
    }

    pub fn model(&self) -> &ModelAst {
        &self.model
    }

    pub fn state(&self) -> &SpecificationState {
        &self.state
    }

    /// Strengthens the default precondition (the declared input domains).
    pub fn set_precondition(
        &mut self,
        pre: impl Fn(&SpecificationState, &Valuation) -> Result<(), String> + Send + Sync + 'static,
    ) {
        self.precondition = Some(Arc::new(pre));
    }

    /// Adds a state invariant checked after every stimulus. `reads` lists the
    /// names the check looks at (inputs, outputs, state variables or
    /// predicate ids); all must be declared.
    pub fn register_invariant(
        &mut self,
        name: &str,
        reads: &[&str],
        check: impl Fn(&SpecificationState) -> bool + Send + Sync + 'static,
    ) -> Result<(), ContractError> {
        if self.invariants.iter().any(|i| i.name == name) {
            return Err(ContractError::DuplicateName(name.to_string()));
        }
        if let Some(bad) = reads.iter().find(|r| self.model.lookup(r).is_none()) {
            return Err(ContractError::UnknownVariable {
                invariant: name.to_string(),
                name: bad.to_string(),
            });
        }
        self.invariants.push(Invariant {
            name: name.to_string(),
            check: Arc::new(check),
        });
        Ok(())
    }

    fn check_domain(&self, inputs: &Valuation) -> Result<(), String> {
        for d in &self.model.inputs {
            match inputs.get(&d.name) {
                None => return Err(format!("input `{}` not supplied", d.name)),
                Some(v) if !d.ty.contains(*v) => {
                    return Err(format!("input `{}` = {} outside {}", d.name, v, d.ty))
                }
                Some(_) => {}
            }
        }
        match inputs
            .keys()
            .find(|k| !matches!(self.model.lookup(k), Some(Symbol::Input(_))))
        {
            Some(k) => Err(format!("`{k}` is not an input")),
            None => Ok(()),
        }
    }

    /// The specification function: one stimulus, one SUT cycle, one verdict.
    ///
    /// Steps, in order: precondition; save the pre-state; mediator exchange;
    /// update predicate states and time flags; evaluate the model on the
    /// pre-state and the new flags; state invariants; compare outputs and
    /// readable state with the observation.
    pub fn apply_stimulus(&mut self, link: &mut dyn Link, inputs: &Valuation) -> StepOutcome {
        let cycle = link.next_cycle();
        let stop = |verdict| StepOutcome {
            verdict,
            observation: None,
            trace: None,
            expected_outputs: None,
        };

        let pre_ok = self.check_domain(inputs).and_then(|()| match &self.precondition {
            Some(p) => p(&self.state, inputs),
            None => Ok(()),
        });
        if let Err(msg) = pre_ok {
            return stop(Verdict::fail(VerdictKind::PreconditionViolation, cycle, msg));
        }

        let pre = self.state.clone();

        let obs = match link.exchange(inputs) {
            Ok(o) => o,
            Err(e) => return stop(Verdict::fail(VerdictKind::MediatorFailure, cycle, e.to_string())),
        };
        let cycle = obs.cycle;

        let (next, reference) = match sync_state(&pre, &obs, inputs, &self.model) {
            Ok(r) => r,
            Err(e) => {
                let mut out = stop(Verdict::fail(VerdictKind::MediatorFailure, cycle, e.to_string()));
                out.observation = Some(obs);
                return out;
            }
        };
        self.state = next;

        let mut outcome = StepOutcome {
            verdict: Verdict::pass(cycle),
            observation: Some(obs.clone()),
            trace: Some(reference.trace.clone()),
            expected_outputs: Some(reference.outputs.clone()),
        };

        let broken: Vec<&str> = self
            .invariants
            .iter()
            .filter(|i| !(i.check)(&self.state))
            .map(|i| i.name.as_str())
            .collect();
        if !broken.is_empty() {
            outcome.verdict = Verdict::fail(
                VerdictKind::InvariantViolation,
                cycle,
                format!("violated: {}", broken.join(", ")),
            );
            return outcome;
        }

        let mut mismatches = Vec::new();
        for o in &self.model.outputs {
            let expected = reference.outputs[&o.name];
            let actual = obs.outputs.get(&o.name).copied();
            if actual != Some(expected) {
                mismatches.push(Mismatch {
                    name: o.name.clone(),
                    expected,
                    actual,
                });
            }
        }
        for s in self.model.readable_state() {
            let expected = reference.state_post[&s.name];
            let actual = obs.visible_state.get(&s.name).copied();
            if actual != Some(expected) {
                mismatches.push(Mismatch {
                    name: s.name.clone(),
                    expected,
                    actual,
                });
            }
        }
        if !mismatches.is_empty() {
            outcome.verdict = Verdict {
                kind: VerdictKind::PostconditionFailure,
                detail: String::new(),
                cycle_index: cycle,
                mismatches,
            };
        }
        outcome
    }
}
