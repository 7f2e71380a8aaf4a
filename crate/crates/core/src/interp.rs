//! Reference execution of a predicate-rewritten model: the interface
//! function of the model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::eval::{eval, eval_bool, eval_with_atoms, Env, EvalError};
use crate::dsl::{ModelAst, Node, NodeId, Value};
use crate::temporal::TimeFlags;

/// Variable name to value.
pub type Valuation = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("missing binding for `{0}`")]
    MissingBinding(String),
    #[error("undeclared binding `{0}`")]
    UnknownBinding(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("output `{0}` not assigned on the path taken")]
    UnassignedOutput(String),
    #[error("value {value} out of range for `{name}`")]
    OutOfRange { name: String, value: Value },
}

/// One decision evaluated on a run: its outcome and the value of every
/// atomic condition, left to right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub node: NodeId,
    pub outcome: bool,
    pub conditions: Vec<bool>,
}

/// Root-to-leaf decision path of one model evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub decisions: Vec<DecisionRecord>,
    pub leaf: NodeId,
}

/// 1-based index of a root-to-leaf path, leaves numbered left to right
/// (then-branch first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestCaseId(pub usize);

impl fmt::Display for TestCaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalResult {
    pub outputs: Valuation,
    pub state_post: Valuation,
    pub trace: DecisionTrace,
}

struct ModelEnv<'a> {
    inputs: &'a Valuation,
    state: &'a Valuation,
    flags: &'a TimeFlags,
}

impl Env for ModelEnv<'_> {
    fn var(&self, name: &str) -> Option<Value> {
        self.inputs
            .get(name)
            .or_else(|| self.state.get(name))
            .copied()
    }

    fn pred(&self, id: &str) -> Option<bool> {
        self.flags.get(id)
    }
}

/// Evaluates the model for one cycle. State variables take their pre-cycle
/// values; `time_flags` carry this cycle's predicate satisfaction.
pub fn eval_model(
    ast: &ModelAst,
    inputs: &Valuation,
    state_pre: &Valuation,
    time_flags: &TimeFlags,
) -> Result<EvalResult, InterpError> {
    for d in &ast.inputs {
        let v = *inputs
            .get(&d.name)
            .ok_or_else(|| InterpError::MissingBinding(d.name.clone()))?;
        if !d.ty.contains(v) {
            return Err(InterpError::OutOfRange {
                name: d.name.clone(),
                value: v,
            });
        }
    }
    if let Some(extra) = inputs.keys().find(|k| !ast.inputs.iter().any(|d| &d.name == *k)) {
        return Err(InterpError::UnknownBinding(extra.clone()));
    }
    for d in &ast.state_vars {
        if !state_pre.contains_key(&d.name) {
            return Err(InterpError::MissingBinding(d.name.clone()));
        }
    }
    for p in &ast.predicates {
        if time_flags.get(&p.id).is_none() {
            return Err(InterpError::MissingBinding(p.id.clone()));
        }
    }

    let env = ModelEnv {
        inputs,
        state: state_pre,
        flags: time_flags,
    };
    let mut decisions = Vec::new();
    let mut id = NodeId::root();
    let mut node = &ast.body;
    let assigns = loop {
        match node {
            Node::Decision {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let conditions = cond
                    .atoms()
                    .into_iter()
                    .map(|a| eval_bool(a, &env))
                    .collect::<Result<Vec<_>, _>>()?;
                let outcome = eval_bool(cond, &env)?;
                debug_assert_eq!(outcome, eval_with_atoms(cond, &conditions));
                decisions.push(DecisionRecord {
                    node: id.clone(),
                    outcome,
                    conditions,
                });
                id = id.child(outcome);
                node = if outcome { then_branch } else { else_branch };
            }
            Node::Leaf { assigns, .. } => break assigns,
        }
    };

    let mut outputs = Valuation::new();
    let mut state_post = state_pre.clone();
    for a in assigns {
        let v = eval(&a.value, &env)?;
        let ty = ast
            .var_type(&a.target)
            .ok_or_else(|| InterpError::UnknownBinding(a.target.clone()))?;
        if !ty.contains(v) {
            return Err(InterpError::OutOfRange {
                name: a.target.clone(),
                value: v,
            });
        }
        if ast.outputs.iter().any(|o| o.name == a.target) {
            outputs.insert(a.target.clone(), v);
        } else {
            state_post.insert(a.target.clone(), v);
        }
    }
    for o in &ast.outputs {
        if !outputs.contains_key(&o.name) {
            return Err(InterpError::UnassignedOutput(o.name.clone()));
        }
    }
    Ok(EvalResult {
        outputs,
        state_post,
        trace: DecisionTrace {
            decisions,
            leaf: id,
        },
    })
}

/// Which root-to-leaf path (test case) a trace took.
pub fn covered_test_case(trace: &DecisionTrace, ast: &ModelAst) -> Option<TestCaseId> {
    ast.leaves()
        .iter()
        .position(|(id, _)| *id == trace.leaf)
        .map(|i| TestCaseId(i + 1))
}

/// Initial values of all state variables.
pub fn initial_state(ast: &ModelAst) -> Valuation {
    ast.state_vars
        .iter()
        .map(|s| (s.name.clone(), s.initial_value()))
        .collect()
}

/// Every valuation of the declared inputs, in lexicographic order of the
/// declaration list.
pub fn input_valuations(ast: &ModelAst) -> Vec<Valuation> {
    let vars: Vec<(&str, Vec<Value>)> = ast
        .inputs
        .iter()
        .map(|d| (d.name.as_str(), d.ty.domain()))
        .collect();
    cartesian(&vars)
}

pub fn cartesian(vars: &[(&str, Vec<Value>)]) -> Vec<Valuation> {
    let mut out = vec![Valuation::new()];
    for (name, dom) in vars {
        out = out
            .into_iter()
            .flat_map(|v| {
                dom.iter().map(move |x| {
                    let mut next = v.clone();
                    next.insert(name.to_string(), *x);
                    next
                })
            })
            .collect();
    }
    out
}
