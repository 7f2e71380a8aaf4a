//! Coverage-targeted reduction of the model to a small abstract state space,
//! and the test-sequence reduction toolkit: piecemeal testing, input
//! filtering and state enlargement.
//!
//! The reduction proceeds in four steps: one test case per root-to-leaf
//! path; temporal conditions rewritten into predicate conjunctions; each case
//! projected onto the state space by eliminating inputs; the generalized
//! state is the vector of projection memberships.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::Criterion;
use crate::dsl::eval::{eval, eval_bool, truthy, Env};
use crate::dsl::{
    expr_to_string, extract_predicates, rewrite_expr, BinOp, ExtractError, Expr, ModelAst, Node, NodeId,
    Symbol, TemporalPredicateDecl, Value,
};
use crate::interp::{covered_test_case, eval_model, initial_state, input_valuations, TestCaseId, Valuation};
use crate::temporal::{HeldSemantics, TimeFlags};
use crate::traversal::AbstractState;

/// One decision on a root-to-leaf path and the branch taken.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: NodeId,
    pub cond: Expr,
    pub outcome: bool,
}

/// Conjunction of branch conditions leading to one leaf: one test case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCondition {
    pub case: TestCaseId,
    pub leaf: NodeId,
    pub steps: Vec<PathStep>,
}

impl PathCondition {
    /// Flattened conjunction; positive conjunctive conditions are spliced in.
    pub fn to_expr(&self) -> Expr {
        let mut parts = Vec::new();
        for s in &self.steps {
            if s.outcome {
                parts.extend(s.cond.conjuncts().into_iter().cloned());
            } else {
                parts.push(Expr::not(s.cond.clone()));
            }
        }
        Expr::and_all(parts)
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&expr_to_string(&self.to_expr()))
    }
}

/// Step 1: one path condition per leaf, numbered left to right.
pub fn enumerate_test_cases(ast: &ModelAst) -> Vec<PathCondition> {
    ast.leaves()
        .into_iter()
        .enumerate()
        .map(|(i, (leaf, _))| {
            let mut steps = Vec::new();
            let mut node = &ast.body;
            let mut id = NodeId::root();
            for &branch in &leaf.0 {
                let Node::Decision {
                    cond,
                    then_branch,
                    else_branch,
                    ..
                } = node
                else {
                    unreachable!("leaf path runs through decisions")
                };
                steps.push(PathStep {
                    node: id.clone(),
                    cond: cond.clone(),
                    outcome: branch,
                });
                id = id.child(branch);
                node = if branch { then_branch } else { else_branch };
            }
            PathCondition {
                case: TestCaseId(i + 1),
                leaf,
                steps,
            }
        })
        .collect()
}

/// Step 2: temporal conditions replaced by conjunctions of predicate ids.
/// `model` is the model the condition came from and `predicates` the result
/// of extraction on it.
pub fn rewrite_to_predicates(
    pc: &PathCondition,
    model: &ModelAst,
    predicates: &[TemporalPredicateDecl],
) -> PathCondition {
    let name_of = |lit: &crate::dsl::Literal, d: u64| {
        predicates
            .iter()
            .find(|p| &p.literal == lit && p.duration_ms == d)
            .map(|p| p.id.clone())
            .unwrap_or_else(|| format!("<{}:{}>", lit.var, d))
    };
    PathCondition {
        case: pc.case,
        leaf: pc.leaf.clone(),
        steps: pc
            .steps
            .iter()
            .map(|s| PathStep {
                node: s.node.clone(),
                cond: rewrite_expr(&s.cond, &name_of, model),
                outcome: s.outcome,
            })
            .collect(),
    }
}

/// Condition over the state space (predicates and state variables) under
/// which a test case can be covered by some input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub case: TestCaseId,
    pub cond: Expr,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&expr_to_string(&self.cond))
    }
}

fn as_const(e: &Expr) -> Option<Value> {
    match e {
        Expr::Const(v) => Some(*v),
        Expr::Bool(b) => Some(Value::from(*b)),
        _ => None,
    }
}

fn as_bool_const(e: &Expr) -> Option<bool> {
    as_const(e).map(truthy)
}

struct NoEnv;

impl Env for NoEnv {
    fn var(&self, _: &str) -> Option<Value> {
        None
    }
    fn pred(&self, _: &str) -> Option<bool> {
        None
    }
}

/// Substitutes the given variables and folds constants.
pub fn partial_eval(e: &Expr, known: &Valuation) -> Expr {
    match e {
        Expr::Var(v) => known.get(v).map_or_else(|| e.clone(), |c| Expr::Const(*c)),
        Expr::Not(a) => {
            let pa = partial_eval(a, known);
            match (&pa, as_bool_const(&pa)) {
                (_, Some(b)) => Expr::Bool(!b),
                (Expr::Not(inner), _) => (**inner).clone(),
                _ => Expr::Not(Box::new(pa)),
            }
        }
        Expr::Neg(a) => {
            let pa = partial_eval(a, known);
            match as_const(&pa).and_then(|c| c.checked_neg()) {
                Some(c) => Expr::Const(c),
                None => Expr::Neg(Box::new(pa)),
            }
        }
        Expr::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
            let (pa, pb) = (partial_eval(a, known), partial_eval(b, known));
            let absorbing = *op == BinOp::Or;
            match (as_bool_const(&pa), as_bool_const(&pb)) {
                (Some(x), _) if x == absorbing => Expr::Bool(absorbing),
                (_, Some(y)) if y == absorbing => Expr::Bool(absorbing),
                (Some(_), Some(_)) => Expr::Bool(!absorbing),
                (Some(_), None) => pb,
                (None, Some(_)) => pa,
                (None, None) => Expr::Binary(*op, Box::new(pa), Box::new(pb)),
            }
        }
        Expr::Binary(op, a, b) => {
            let folded = Expr::Binary(*op, Box::new(partial_eval(a, known)), Box::new(partial_eval(b, known)));
            if let Expr::Binary(_, x, y) = &folded {
                if as_const(x).is_some() && as_const(y).is_some() {
                    if let Ok(v) = eval(&folded, &NoEnv) {
                        return if op.is_comparison() {
                            Expr::Bool(truthy(v))
                        } else {
                            Expr::Const(v)
                        };
                    }
                }
            }
            folded
        }
        _ => e.clone(),
    }
}

/// Step 3: existentially eliminates input variables by enumerating their
/// valuations, leaving a condition over predicates and state variables.
pub fn project_to_state(pc: &PathCondition, model: &ModelAst) -> Projection {
    let full = pc.to_expr();
    let mut disjuncts: Vec<Expr> = Vec::new();
    for v in input_valuations(model) {
        let p = partial_eval(&full, &v);
        match as_bool_const(&p) {
            Some(true) => {
                return Projection {
                    case: pc.case,
                    cond: Expr::Bool(true),
                }
            }
            Some(false) => {}
            None => {
                if !disjuncts.contains(&p) {
                    disjuncts.push(p);
                }
            }
        }
    }
    let cond = if disjuncts.is_empty() {
        Expr::Bool(false)
    } else {
        Expr::or_all(disjuncts)
    };
    Projection { case: pc.case, cond }
}

/// A point of the state space the projections are evaluated on.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConcreteState {
    pub flags: TimeFlags,
    pub state_vars: Valuation,
}

struct StateEnv<'a> {
    flags: &'a TimeFlags,
    state: &'a Valuation,
}

impl Env for StateEnv<'_> {
    fn var(&self, name: &str) -> Option<Value> {
        self.state.get(name).copied()
    }
    fn pred(&self, id: &str) -> Option<bool> {
        self.flags.get(id)
    }
}

/// Step 4: bit `i` is 1 iff the state satisfies projection `i`.
pub fn generalized_state(
    flags: &TimeFlags,
    state_vars: &Valuation,
    projections: &[Projection],
) -> AbstractState {
    let env = StateEnv {
        flags,
        state: state_vars,
    };
    AbstractState(
        projections
            .iter()
            .map(|p| Value::from(eval_bool(&p.cond, &env).unwrap_or(false)))
            .collect(),
    )
}

/// Output of the four reduction steps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reduction {
    /// Model with temporal conditions rewritten into predicates.
    pub model: ModelAst,
    pub test_cases: Vec<PathCondition>,
    pub rewritten: Vec<PathCondition>,
    pub projections: Vec<Projection>,
}

impl Reduction {
    pub fn state_of(&self, flags: &TimeFlags, state_vars: &Valuation) -> AbstractState {
        generalized_state(flags, state_vars, &self.projections)
    }
}

/// Runs all four steps on a parsed model.
pub fn reduce(source_model: &ModelAst) -> Result<Reduction, ExtractError> {
    let ex = extract_predicates(source_model)?;
    let test_cases = enumerate_test_cases(source_model);
    let rewritten: Vec<PathCondition> = test_cases
        .iter()
        .map(|pc| rewrite_to_predicates(pc, source_model, &ex.predicates))
        .collect();
    let projections = rewritten
        .iter()
        .map(|pc| project_to_state(pc, &ex.model))
        .collect();
    Ok(Reduction {
        model: ex.model,
        test_cases,
        rewritten,
        projections,
    })
}

/// A distinct flag vector reached, with the shortest input sequence
/// reaching it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachedFlags {
    pub flags: TimeFlags,
    pub vector: Vec<u8>,
    pub witness: Vec<Valuation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachableStates {
    pub predicates: Vec<String>,
    /// `2^k` for `k` predicates.
    pub upper_bound: u64,
    /// Distinct flag vectors in breadth-first discovery order.
    pub flag_states: Vec<ReachedFlags>,
    /// Distinct (flags, state variables) pairs.
    pub concrete: Vec<ConcreteState>,
    pub explored_nodes: usize,
}

impl ReachableStates {
    pub fn count(&self) -> usize {
        self.flag_states.len()
    }
}

/// Breadth-first search over the transition system formed by the predicate
/// trackers (and state variables) under all input sequences, one cycle of
/// `period_ms` per step. Elapsed times are capped just above each duration,
/// which keeps the search finite without changing any flag.
pub fn enumerate_reachable_flag_states(
    model: &ModelAst,
    period_ms: u64,
    semantics: HeldSemantics,
) -> ReachableStates {
    assert!(period_ms > 0, "period must be positive");
    let preds = &model.predicates;
    // Predicates on the same literal share one timer.
    let mut literals: Vec<&TemporalPredicateDecl> = Vec::new();
    let mut timer_of = Vec::with_capacity(preds.len());
    for p in preds {
        match literals.iter().position(|l| l.literal == p.literal) {
            Some(i) => {
                if p.duration_ms > literals[i].duration_ms {
                    literals[i] = p;
                }
                timer_of.push(i);
            }
            None => {
                timer_of.push(literals.len());
                literals.push(p);
            }
        }
    }
    let caps: Vec<u64> = literals.iter().map(|p| p.duration_ms + period_ms).collect();
    let inputs = input_valuations(model);

    // A node is the elapsed time of every timer (None while its literal is
    // broken) plus the state variables. Witnesses are rebuilt from parent
    // links rather than stored per node.
    type Node = (Vec<Option<u64>>, Valuation);
    let start: Node = (vec![None; literals.len()], initial_state(model));
    let mut nodes: Vec<Node> = vec![start.clone()];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None];
    let mut seen: HashMap<Node, usize> = HashMap::from([(start, 0)]);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);
    let mut flag_states: Vec<ReachedFlags> = Vec::new();
    let mut known_flags: HashSet<Vec<bool>> = HashSet::new();
    let mut concrete: BTreeSet<ConcreteState> = BTreeSet::new();
    let mut concrete_seen: HashSet<(Vec<bool>, Valuation)> = HashSet::new();

    let witness = |parent: &[Option<(usize, usize)>], mut at: usize, last: usize| {
        let mut seq = vec![inputs[last].clone()];
        while let Some((p, v)) = parent[at] {
            seq.push(inputs[v].clone());
            at = p;
        }
        seq.reverse();
        seq
    };
    let to_flags = |bits: &[bool]| {
        let mut f = TimeFlags::default();
        for (p, &b) in preds.iter().zip(bits) {
            f.set(&p.id, b);
        }
        f
    };

    while let Some(at) = queue.pop_front() {
        let (elapsed, state) = nodes[at].clone();
        for (vi, v) in inputs.iter().enumerate() {
            let next_elapsed: Vec<Option<u64>> = literals
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let value = v
                        .get(&l.literal.var)
                        .or_else(|| state.get(&l.literal.var))
                        .copied()
                        .unwrap_or(0);
                    l.literal
                        .holds(value)
                        .then(|| elapsed[i].map_or(0, |e| (e + period_ms).min(caps[i])))
                })
                .collect();
            let bits: Vec<bool> = preds
                .iter()
                .zip(&timer_of)
                .map(|(p, &t)| next_elapsed[t].is_some_and(|e| semantics.reached(e, p.duration_ms)))
                .collect();
            let next_state = if model.state_vars.is_empty() {
                state.clone()
            } else {
                match eval_model(model, v, &state, &to_flags(&bits)) {
                    Ok(r) => r.state_post,
                    Err(e) => {
                        log::warn!("model evaluation failed during reachability search: {e}");
                        continue;
                    }
                }
            };
            if known_flags.insert(bits.clone()) {
                let flags = to_flags(&bits);
                flag_states.push(ReachedFlags {
                    vector: flags.vector(preds),
                    flags,
                    witness: witness(&parent, at, vi),
                });
            }
            if concrete_seen.insert((bits.clone(), next_state.clone())) {
                concrete.insert(ConcreteState {
                    flags: to_flags(&bits),
                    state_vars: next_state.clone(),
                });
            }
            let node = (next_elapsed, next_state);
            if !seen.contains_key(&node) {
                seen.insert(node.clone(), nodes.len());
                queue.push_back(nodes.len());
                nodes.push(node);
                parent.push(Some((at, vi)));
            }
        }
    }

    ReachableStates {
        predicates: preds.iter().map(|p| p.id.clone()).collect(),
        upper_bound: 1u64 << preds.len().min(63),
        flag_states,
        concrete: concrete.into_iter().collect(),
        explored_nodes: nodes.len(),
    }
}

/// Test cases some input valuation covers in the given state.
pub fn coverable_cases(model: &ModelAst, state: &ConcreteState) -> BTreeSet<TestCaseId> {
    input_valuations(model)
        .iter()
        .filter_map(|v| eval_model(model, v, &state.state_vars, &state.flags).ok())
        .filter_map(|r| covered_test_case(&r.trace, model))
        .collect()
}

/// One cell of the membership-vector partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCell {
    pub state: AbstractState,
    pub members: Vec<ConcreteState>,
    /// Coverable cases of the first member.
    pub coverable: BTreeSet<TestCaseId>,
    /// Every member has the same coverable cases.
    pub sound: bool,
}

/// Groups concrete states by generalized state.
pub fn partition(
    model: &ModelAst,
    projections: &[Projection],
    states: &[ConcreteState],
) -> Vec<PartitionCell> {
    let mut cells: BTreeMap<AbstractState, Vec<ConcreteState>> = BTreeMap::new();
    for s in states {
        cells
            .entry(generalized_state(&s.flags, &s.state_vars, projections))
            .or_default()
            .push(s.clone());
    }
    cells
        .into_iter()
        .map(|(state, members)| {
            let sets: Vec<BTreeSet<TestCaseId>> =
                members.iter().map(|m| coverable_cases(model, m)).collect();
            let sound = sets.windows(2).all(|w| w[0] == w[1]);
            PartitionCell {
                state,
                coverable: sets.into_iter().next().unwrap_or_default(),
                members,
                sound,
            }
        })
        .collect()
}

/// A cell of the enlarged partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnlargedCell {
    /// Smallest merged generalized state, used as the new state.
    pub representative: AbstractState,
    pub merged: Vec<AbstractState>,
    pub coverable: BTreeSet<TestCaseId>,
}

/// A coarser state function obtained by merging generalized states.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enlargement {
    pub cells: Vec<EnlargedCell>,
    pub map: BTreeMap<AbstractState, AbstractState>,
}

impl Enlargement {
    /// States never seen during enlargement map to themselves.
    pub fn apply(&self, s: &AbstractState) -> AbstractState {
        self.map.get(s).cloned().unwrap_or_else(|| s.clone())
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().all(|(k, v)| k == v)
    }
}

/// Merges generalized states whose states cover the same test cases.
/// Cells with members disagreeing among themselves are never merged.
pub fn enlarge_states(cells: &[PartitionCell]) -> Enlargement {
    let mut groups: BTreeMap<BTreeSet<TestCaseId>, Vec<AbstractState>> = BTreeMap::new();
    let mut out = Enlargement::default();
    for c in cells {
        if c.sound {
            groups.entry(c.coverable.clone()).or_default().push(c.state.clone());
        } else {
            out.map.insert(c.state.clone(), c.state.clone());
            out.cells.push(EnlargedCell {
                representative: c.state.clone(),
                merged: vec![c.state.clone()],
                coverable: c.coverable.clone(),
            });
        }
    }
    for (coverable, mut merged) in groups {
        merged.sort();
        let representative = merged[0].clone();
        for m in &merged {
            out.map.insert(m.clone(), representative.clone());
        }
        out.cells.push(EnlargedCell {
            representative,
            merged,
            coverable,
        });
    }
    out.cells.sort_by(|a, b| a.representative.cmp(&b.representative));
    out
}

/// Coverage goal a piecemeal split is meant to achieve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Measured(Criterion),
    /// Multiple condition coverage: every combination of the conditions of a
    /// decision. Not measured by this tool.
    MultipleCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PiecemealError {
    #[error("parts {0} and {1} overlap")]
    OverlappingParts(NodeId, NodeId),
    #[error("{0} is not a node of the model")]
    NoSuchNode(NodeId),
}

/// Skeleton of a scenario testing one subtree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiecemealPart {
    pub root: NodeId,
    pub cases: Vec<TestCaseId>,
    /// Inputs fixed by the path into the subtree.
    pub pinned: Valuation,
    /// Inputs still iterated by the scenario.
    pub free_inputs: Vec<String>,
    /// Input valuations not contradicting the path into the subtree.
    pub allowed_inputs: Vec<Valuation>,
    /// Path conditions that inputs alone cannot force.
    pub steering: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piecemeal {
    pub parts: Vec<PiecemealPart>,
    pub warnings: Vec<String>,
}

/// Splits the model into separately tested subtrees.
pub fn make_piecemeal(
    ast: &ModelAst,
    parts: &[NodeId],
    targets: &[Target],
) -> Result<Piecemeal, PiecemealError> {
    for (i, a) in parts.iter().enumerate() {
        if ast.node(a).is_none() {
            return Err(PiecemealError::NoSuchNode(a.clone()));
        }
        for b in &parts[i + 1..] {
            if a.is_prefix_of(b) || b.is_prefix_of(a) {
                return Err(PiecemealError::OverlappingParts(a.clone(), b.clone()));
            }
        }
    }
    let mut warnings = Vec::new();
    if parts.len() > 1 && targets.contains(&Target::MultipleCondition) {
        warnings.push(
            "multiple condition coverage is not decomposable: combinations spanning parts are never exercised together"
                .to_string(),
        );
    }
    let leaves = ast.leaves();
    let out = parts
        .iter()
        .map(|root| {
            let cases = leaves
                .iter()
                .enumerate()
                .filter(|(_, (leaf, _))| root.is_prefix_of(leaf))
                .map(|(i, _)| TestCaseId(i + 1))
                .collect();
            // Path from the model root to the part root.
            let mut path = Vec::new();
            let mut node = &ast.body;
            for &branch in &root.0 {
                if let Node::Decision {
                    cond,
                    then_branch,
                    else_branch,
                    ..
                } = node
                {
                    path.push((cond, branch));
                    node = if branch { then_branch } else { else_branch };
                }
            }
            let mut steering = Vec::new();
            let allowed: Vec<Valuation> = input_valuations(ast)
                .into_iter()
                .filter(|v| {
                    path.iter().all(|(cond, branch)| {
                        as_bool_const(&partial_eval(cond, v)).map_or(true, |b| b == *branch)
                    })
                })
                .collect();
            for (cond, branch) in &path {
                let input_only = cond
                    .variables()
                    .iter()
                    .all(|v| matches!(ast.lookup(v), Some(Symbol::Input(_))))
                    && !cond.contains_held()
                    && !has_pred(cond);
                if !input_only {
                    let c = (*cond).clone();
                    steering.push(expr_to_string(&if *branch { c } else { Expr::not(c) }));
                }
            }
            let mut pinned = Valuation::new();
            let mut free = Vec::new();
            for d in &ast.inputs {
                let values: BTreeSet<Value> = allowed.iter().map(|v| v[&d.name]).collect();
                if values.len() == 1 && d.ty.domain_size() > 1 {
                    pinned.insert(d.name.clone(), *values.iter().next().unwrap());
                } else {
                    free.push(d.name.clone());
                }
            }
            PiecemealPart {
                root: root.clone(),
                cases,
                pinned,
                free_inputs: free,
                allowed_inputs: allowed,
                steering,
            }
        })
        .collect();
    Ok(Piecemeal {
        parts: out,
        warnings,
    })
}

/// Number of cycles a `hold` action keeps its inputs constant: long enough
/// for every predicate on a held literal to become satisfied, so the end
/// state depends on the inputs alone. Strict semantics needs one cycle more.
pub fn hold_cycles(model: &ModelAst, period_ms: u64, semantics: HeldSemantics) -> usize {
    let longest = model.predicates.iter().map(|p| p.duration_ms).max().unwrap_or(0);
    let extra = match semantics {
        HeldSemantics::Inclusive => 1,
        HeldSemantics::Strict => 2,
    };
    (longest.div_ceil(period_ms) + extra) as usize
}

/// Options for [`coverage_scenario`].
#[derive(Clone, Debug, Default)]
pub struct ScenarioOptions {
    /// Restricts the `hold` iteration domain (input filtering); all input
    /// valuations by default.
    pub allowed_inputs: Option<Vec<Valuation>>,
    /// Coarser state function applied on top of the membership vector.
    pub enlargement: Option<Enlargement>,
    /// Overrides [`hold_cycles`].
    pub hold_cycles: Option<usize>,
    /// Semantics the `hold` length is computed for.
    pub semantics: HeldSemantics,
}

/// The reduction-driven scenario: states are generalized states, and the
/// single scenario function `hold` iterates over the model inputs, applying
/// one valuation for a fixed number of cycles.
pub fn coverage_scenario(
    name: &str,
    reduction: &Reduction,
    period_ms: u64,
    options: ScenarioOptions,
) -> crate::traversal::Scenario {
    use crate::traversal::{Scenario, ScenarioFunction};
    use std::sync::Arc;

    let model = &reduction.model;
    let k = options.hold_cycles.unwrap_or_else(|| hold_cycles(model, period_ms, options.semantics));
    let iteration_vars: Vec<(String, Vec<Value>)> = model
        .inputs
        .iter()
        .map(|d| (d.name.clone(), d.ty.domain()))
        .collect();
    let mut hold = ScenarioFunction::new("hold", iteration_vars, move |v| vec![v.clone(); k]);
    if let Some(allowed) = options.allowed_inputs {
        hold = hold.with_filter(move |v, _| allowed.contains(v));
    }
    let projections = reduction.projections.clone();
    let enlargement = options.enlargement;
    Scenario {
        name: name.to_string(),
        init: Vec::new(),
        state_fn: Arc::new(move |s| {
            let g = generalized_state(&s.time_flags, &s.state_vars, &projections);
            match &enlargement {
                Some(e) => e.apply(&g),
                None => g,
            }
        }),
        functions: vec![hold],
        finalize: Vec::new(),
    }
}

fn has_pred(e: &Expr) -> bool {
    let mut found = false;
    e.visit(&mut |x| found |= matches!(x, Expr::Pred(_)));
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    const IRON: &str = include_str!("../models/iron.ctl");

    fn iron() -> ModelAst {
        parse_model(IRON).unwrap()
    }

    #[test]
    fn iron_test_cases() {
        let r = reduce(&iron()).unwrap();
        let cases: Vec<String> = r.test_cases.iter().map(|c| c.to_string()).collect();
        assert_eq!(
            cases,
            [
                "position && held(!move && position, 900s)",
                "position && !held(!move && position, 900s)",
                "!position && held(!move && !position, 60s)",
                "!position && !held(!move && !position, 60s)",
            ]
        );
        let rewritten: Vec<String> = r.rewritten.iter().map(|c| c.to_string()).collect();
        assert_eq!(
            rewritten,
            [
                "position && move_eq_f_t2 && position_eq_t_t2",
                "position && !(move_eq_f_t2 && position_eq_t_t2)",
                "!position && move_eq_f_t1 && position_eq_f_t1",
                "!position && !(move_eq_f_t1 && position_eq_f_t1)",
            ]
        );
        let projections: Vec<String> = r.projections.iter().map(|p| p.to_string()).collect();
        assert_eq!(
            projections,
            [
                "move_eq_f_t2 && position_eq_t_t2",
                "!(move_eq_f_t2 && position_eq_t_t2)",
                "move_eq_f_t1 && position_eq_f_t1",
                "!(move_eq_f_t1 && position_eq_f_t1)",
            ]
        );
    }

    #[test]
    fn single_decision_and_input_only_models() {
        let m = parse_model("model m { input a: bool; output o: bool; logic { if (a) { o = 1; } else { o = 0; } } }").unwrap();
        let r = reduce(&m).unwrap();
        assert_eq!(r.test_cases.len(), 2);
        assert_eq!(r.rewritten, r.test_cases);
        assert!(r.projections.iter().all(|p| p.cond == Expr::Bool(true)));
        let reach = enumerate_reachable_flag_states(&r.model, 1000, HeldSemantics::Inclusive);
        assert_eq!((reach.upper_bound, reach.count()), (1, 1));
        let cells = partition(&r.model, &r.projections, &reach.concrete);
        assert_eq!(cells.len(), 1);
        assert_eq!(generalized_state(&TimeFlags::default(), &Valuation::new(), &[]), AbstractState(vec![]));
    }

    #[test]
    fn one_predicate_model_has_two_flag_states() {
        let m = parse_model("model m { input a: bool; output o: bool; logic { if (held(a, 2s)) { o = 1; } else { o = 0; } } }").unwrap();
        let r = reduce(&m).unwrap();
        let reach = enumerate_reachable_flag_states(&r.model, 1000, HeldSemantics::Inclusive);
        assert_eq!((reach.upper_bound, reach.count()), (2, 2));
        assert_eq!(reach.flag_states[1].witness.len(), 3);
    }

    #[test]
    fn partial_eval_folds() {
        let v: Valuation = [("a".into(), 1), ("n".into(), 2)].into();
        let e = parse_model("model m { input a: bool; input n: int 0..3; input b: bool; output o: bool; logic { if (!a || n + 1 > 2 && b) { o = 1; } else { o = 0; } } }").unwrap();
        let cond = e.decisions()[0].1.clone();
        assert_eq!(partial_eval(&cond, &v), Expr::var("b"));
        let mut w = v.clone();
        w.insert("a".into(), 0);
        assert_eq!(partial_eval(&cond, &w), Expr::Bool(true));
        assert_eq!(partial_eval(&Expr::not(Expr::not(Expr::var("b"))), &v), Expr::var("b"));
    }

    fn desk_scale(r: &mut Reduction) {
        crate::temporal::TimeScale::identity()
            .with_override(60_000, 3000)
            .with_override(900_000, 5000)
            .apply_to_model(&mut r.model);
    }

    #[test]
    fn projection_soundness_on_iron() {
        let mut r = reduce(&iron()).unwrap();
        desk_scale(&mut r);
        let reach = enumerate_reachable_flag_states(&r.model, 1000, HeldSemantics::Inclusive);
        for (pc, proj) in r.rewritten.iter().zip(&r.projections) {
            for s in &reach.concrete {
                let in_proj = generalized_state(&s.flags, &s.state_vars, std::slice::from_ref(proj)).0[0] == 1;
                let coverable = coverable_cases(&r.model, s).contains(&pc.case);
                assert_eq!(in_proj, coverable, "{pc} in {s:?}");
            }
        }
    }

    #[test]
    fn enlargement_merges_only_equal_case_sets() {
        let cells = vec![
            PartitionCell {
                state: AbstractState(vec![1, 0]),
                members: vec![],
                coverable: [TestCaseId(1)].into(),
                sound: true,
            },
            PartitionCell {
                state: AbstractState(vec![0, 1]),
                members: vec![],
                coverable: [TestCaseId(1)].into(),
                sound: true,
            },
            PartitionCell {
                state: AbstractState(vec![0, 0]),
                members: vec![],
                coverable: [TestCaseId(2)].into(),
                sound: true,
            },
        ];
        let e = enlarge_states(&cells);
        assert_eq!(e.cells.len(), 2);
        assert_eq!(e.apply(&AbstractState(vec![1, 0])), AbstractState(vec![0, 1]));
        assert_eq!(e.apply(&AbstractState(vec![0, 0])), AbstractState(vec![0, 0]));
        assert!(!e.is_identity());
        assert!(enlarge_states(&cells[2..]).is_identity());
    }

    #[test]
    fn piecemeal_split_of_iron() {
        let m = reduce(&iron()).unwrap().model;
        let parts = ["nt".parse().unwrap(), "ne".parse().unwrap()];
        let p = make_piecemeal(&m, &parts, &[Target::Measured(Criterion::Branch)]).unwrap();
        assert!(p.warnings.is_empty());
        assert_eq!(p.parts[0].pinned, [("position".to_string(), 1)].into());
        assert_eq!(p.parts[0].free_inputs, ["move"]);
        assert_eq!(p.parts[0].cases, [TestCaseId(1), TestCaseId(2)]);
        assert_eq!(p.parts[1].pinned, [("position".to_string(), 0)].into());
        assert!(p.parts[0].steering.is_empty());

        let whole = make_piecemeal(&m, &[NodeId::root()], &[]).unwrap();
        assert!(whole.parts[0].pinned.is_empty());
        assert_eq!(whole.parts[0].allowed_inputs, input_valuations(&m));
        assert_eq!(whole.parts[0].cases.len(), 4);

        let mcc = make_piecemeal(&m, &parts, &[Target::MultipleCondition]).unwrap();
        assert_eq!(mcc.warnings.len(), 1);

        assert_eq!(
            make_piecemeal(&m, &[NodeId::root(), "nt".parse().unwrap()], &[]),
            Err(PiecemealError::OverlappingParts(NodeId::root(), "nt".parse().unwrap()))
        );
        assert!(make_piecemeal(&m, &["ntt".parse().unwrap()], &[]).is_ok());
        assert!(make_piecemeal(&m, &["nttt".parse().unwrap()], &[]).is_err());
    }

    #[test]
    fn piecemeal_reports_temporal_steering() {
        let m = reduce(&iron()).unwrap().model;
        let p = make_piecemeal(&m, &["nte".parse().unwrap()], &[]).unwrap();
        assert_eq!(p.parts[0].steering, ["!(move_eq_f_t2 && position_eq_t_t2)"]);
        assert_eq!(p.parts[0].pinned, [("position".to_string(), 1)].into());
    }
}
