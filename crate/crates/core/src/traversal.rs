//! On-the-fly exploration of an implicitly defined automaton: every action is
//! applied in every reached state, moving between states along the shortest
//! known paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{Mismatch, Specification, VerdictKind};
use crate::dsl::Value;
use crate::interp::{covered_test_case, cartesian, DecisionTrace, Valuation};
use crate::mediator::{Link, SpecificationState};

/// A system whose states and transitions are discovered by applying actions.
pub trait Explorable {
    type State: Clone + Ord + fmt::Debug;

    /// Current abstract state.
    fn state(&mut self) -> Self::State;

    /// Actions enabled in `state`, in declaration order.
    fn actions(&mut self, state: &Self::State) -> Vec<String>;

    /// Applies one action. An error aborts the traversal.
    fn apply(&mut self, action: &str) -> Result<(), String>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalConfig {
    /// Upper bound on applied actions, replays included.
    pub max_actions: u64,
    pub max_states: Option<usize>,
    /// Apply every transition at least twice so that nondeterminism hidden
    /// behind a single application shows up.
    pub confirm_transitions: bool,
    /// Abort the scenario on the first failing verdict.
    pub stop_on_failure: bool,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self {
            max_actions: 100_000,
            max_states: None,
            confirm_transitions: true,
            stop_on_failure: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraversalError<S: fmt::Debug> {
    #[error("nondeterminism: `{action}` from {from:?} led to {recorded:?} before and to {observed:?} now")]
    NondeterminismDetected {
        from: S,
        action: String,
        recorded: S,
        observed: S,
    },
    #[error("{} pending action(s) unreachable from {current:?}: automaton is not strongly connected", stranded.len())]
    StrandedPendingActions {
        current: S,
        stranded: Vec<(S, String)>,
    },
    #[error("budget exceeded ({limit}) after {applied} actions and {states} states")]
    BudgetExceeded {
        limit: String,
        applied: u64,
        states: usize,
    },
    #[error("aborted: {0}")]
    Aborted(String),
}

/// The part of the automaton discovered so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploredAutomaton<S: Ord> {
    pub initial: Option<S>,
    pub states: BTreeSet<S>,
    pub transitions: BTreeMap<(S, String), S>,
    /// Per state: enabled actions and how many more applications each still
    /// needs (2 for never applied under confirmation, 1 otherwise).
    remaining: BTreeMap<S, Vec<(String, u8)>>,
}

impl<S: Ord + Clone> Default for ExploredAutomaton<S> {
    fn default() -> Self {
        Self {
            initial: None,
            states: BTreeSet::new(),
            transitions: BTreeMap::new(),
            remaining: BTreeMap::new(),
        }
    }
}

impl<S: Ord + Clone> ExploredAutomaton<S> {
    /// Actions never applied, per state.
    pub fn pending(&self) -> BTreeMap<S, Vec<String>> {
        self.remaining
            .iter()
            .map(|(s, acts)| {
                let never: Vec<String> = acts
                    .iter()
                    .filter(|(a, _)| !self.transitions.contains_key(&(s.clone(), a.clone())))
                    .map(|(a, _)| a.clone())
                    .collect();
                (s.clone(), never)
            })
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }

    fn has_work(&self, s: &S) -> bool {
        self.remaining.get(s).is_some_and(|v| !v.is_empty())
    }

    fn outgoing<'a>(&'a self, s: &'a S) -> impl Iterator<Item = (&'a String, &'a S)> + 'a {
        self.transitions
            .range((s.clone(), String::new())..)
            .take_while(move |((from, _), _)| from == s)
            .map(|((_, a), to)| (a, to))
    }

    /// Shortest path over known transitions from `from` to the nearest state
    /// with outstanding actions; ties go to the smallest state, and edges
    /// are tried in label order.
    fn path_to_work(&self, from: &S) -> Option<Vec<(String, S)>> {
        let mut parent: BTreeMap<S, (S, String)> = BTreeMap::new();
        let mut seen = BTreeSet::from([from.clone()]);
        let mut layer = vec![from.clone()];
        while !layer.is_empty() {
            let mut next = Vec::new();
            for s in &layer {
                for (a, t) in self.outgoing(s) {
                    if seen.insert(t.clone()) {
                        parent.insert(t.clone(), (s.clone(), a.clone()));
                        next.push(t.clone());
                    }
                }
            }
            if let Some(target) = next.iter().filter(|s| self.has_work(s)).min() {
                let mut path = Vec::new();
                let mut cur = target.clone();
                while &cur != from {
                    let (p, a) = parent[&cur].clone();
                    path.push((a, cur));
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            layer = next;
        }
        None
    }
}

/// One applied action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step<S> {
    pub from: S,
    pub action: String,
    pub to: S,
    /// Applied while moving to a state with outstanding actions.
    pub replay: bool,
}

#[derive(Clone, Debug)]
pub struct Traversal<S: Ord + fmt::Debug> {
    pub automaton: ExploredAutomaton<S>,
    pub steps: Vec<Step<S>>,
    pub error: Option<TraversalError<S>>,
}

struct Engine<'a, E: Explorable> {
    sys: &'a mut E,
    config: &'a TraversalConfig,
    aut: ExploredAutomaton<E::State>,
    steps: Vec<Step<E::State>>,
    applied: u64,
}

impl<E: Explorable> Engine<'_, E> {
    fn visit(&mut self, s: &E::State) -> Result<(), TraversalError<E::State>> {
        if self.aut.states.insert(s.clone()) {
            if let Some(max) = self.config.max_states {
                if self.aut.states.len() > max {
                    return Err(TraversalError::BudgetExceeded {
                        limit: format!("max_states={max}"),
                        applied: self.applied,
                        states: self.aut.states.len(),
                    });
                }
            }
            let times = if self.config.confirm_transitions { 2 } else { 1 };
            let mut acts: Vec<(String, u8)> = Vec::new();
            for a in self.sys.actions(s) {
                if !acts.iter().any(|(x, _)| *x == a) {
                    acts.push((a, times));
                }
            }
            self.aut.remaining.insert(s.clone(), acts);
        }
        Ok(())
    }

    fn apply(
        &mut self,
        from: &E::State,
        action: &str,
        replay: bool,
    ) -> Result<E::State, TraversalError<E::State>> {
        if self.applied >= self.config.max_actions {
            return Err(TraversalError::BudgetExceeded {
                limit: format!("max_actions={}", self.config.max_actions),
                applied: self.applied,
                states: self.aut.states.len(),
            });
        }
        self.applied += 1;
        self.sys.apply(action).map_err(TraversalError::Aborted)?;
        let to = self.sys.state();
        self.steps.push(Step {
            from: from.clone(),
            action: action.to_string(),
            to: to.clone(),
            replay,
        });
        let key = (from.clone(), action.to_string());
        if let Some(recorded) = self.aut.transitions.get(&key) {
            if *recorded != to {
                return Err(TraversalError::NondeterminismDetected {
                    from: from.clone(),
                    action: action.to_string(),
                    recorded: recorded.clone(),
                    observed: to,
                });
            }
        }
        self.aut.transitions.insert(key, to.clone());
        if let Some(acts) = self.aut.remaining.get_mut(from) {
            if let Some(i) = acts.iter().position(|(a, _)| a == action) {
                acts[i].1 -= 1;
                if acts[i].1 == 0 {
                    acts.remove(i);
                }
            }
        }
        self.visit(&to)?;
        Ok(to)
    }

    /// Next action to apply in `s`: never-applied ones first, in declaration
    /// order, then those awaiting confirmation.
    fn next_action(&self, s: &E::State) -> Option<String> {
        let acts = self.aut.remaining.get(s)?;
        let fresh = acts
            .iter()
            .find(|(a, _)| !self.aut.transitions.contains_key(&(s.clone(), a.clone())));
        fresh.or_else(|| acts.first()).map(|(a, _)| a.clone())
    }

    fn run(&mut self) -> Result<(), TraversalError<E::State>> {
        let mut cur = self.sys.state();
        self.aut.initial = Some(cur.clone());
        self.visit(&cur)?;
        loop {
            if let Some(a) = self.next_action(&cur) {
                cur = self.apply(&cur.clone(), &a, false)?;
                continue;
            }
            if self.aut.remaining.values().all(|v| v.is_empty()) {
                return Ok(());
            }
            let Some(path) = self.aut.path_to_work(&cur) else {
                let stranded = self
                    .aut
                    .remaining
                    .iter()
                    .flat_map(|(s, acts)| acts.iter().map(move |(a, _)| (s.clone(), a.clone())))
                    .collect();
                return Err(TraversalError::StrandedPendingActions {
                    current: cur,
                    stranded,
                });
            };
            for (action, _expected) in path {
                // Nondeterminism on a replayed edge is caught inside apply.
                cur = self.apply(&cur.clone(), &action, true)?;
            }
        }
    }
}

/// Explores `sys` until every reached state has had each of its actions
/// applied (twice, under confirmation), or an error stops the run.
pub fn traverse<E: Explorable>(sys: &mut E, config: &TraversalConfig) -> Traversal<E::State> {
    let mut engine = Engine {
        sys,
        config,
        aut: ExploredAutomaton::default(),
        steps: Vec::new(),
        applied: 0,
    };
    let error = engine.run().err();
    Traversal {
        automaton: engine.aut,
        steps: engine.steps,
        error,
    }
}

/// Renders the automaton as a DOT digraph with deterministic node order.
pub fn export_dot<S: Ord + Clone + fmt::Display>(aut: &ExploredAutomaton<S>) -> String {
    fn esc(s: &str) -> String {
        s.replace('\\', "\\\\").replace('"', "\\\"")
    }
    let index: BTreeMap<&S, usize> = aut.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut out = String::from("digraph automaton {\n");
    for (s, i) in &index {
        let extra = if aut.initial.as_ref() == Some(*s) {
            ", peripheries=2"
        } else {
            ""
        };
        out.push_str(&format!("  s{i} [label=\"{}\"{extra}];\n", esc(&s.to_string())));
    }
    for ((from, a), to) in &aut.transitions {
        out.push_str(&format!(
            "  s{} -> s{} [label=\"{}\"];\n",
            index[from],
            index[to],
            esc(a)
        ));
    }
    out.push_str("}\n");
    out
}

/// Generalized state: typically the projection-membership vector, possibly
/// extended with observed values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AbstractState(pub Vec<Value>);

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

pub type StateFn = Arc<dyn Fn(&SpecificationState) -> AbstractState + Send + Sync>;
pub type FilterFn = Arc<dyn Fn(&Valuation, &AbstractState) -> bool + Send + Sync>;
/// Maps an iteration valuation to the stimuli applied, one per cycle.
pub type BodyFn = Arc<dyn Fn(&Valuation) -> Vec<Valuation> + Send + Sync>;

/// A parameterized test action. Each valuation of its iteration variables
/// that passes the filter is one action of the automaton.
#[derive(Clone)]
pub struct ScenarioFunction {
    pub name: String,
    pub iteration_vars: Vec<(String, Vec<Value>)>,
    pub filter: Option<FilterFn>,
    pub body: BodyFn,
}

impl ScenarioFunction {
    pub fn new(
        name: impl Into<String>,
        iteration_vars: Vec<(String, Vec<Value>)>,
        body: impl Fn(&Valuation) -> Vec<Valuation> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            iteration_vars,
            filter: None,
            body: Arc::new(body),
        }
    }

    pub fn with_filter(
        mut self,
        filter: impl Fn(&Valuation, &AbstractState) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.filter = Some(Arc::new(filter));
        self
    }

    pub fn label(&self, iteration: &Valuation) -> String {
        if self.iteration_vars.is_empty() {
            return self.name.clone();
        }
        let args: Vec<String> = self
            .iteration_vars
            .iter()
            .map(|(v, _)| format!("{v}={}", iteration[v]))
            .collect();
        format!("{}({})", self.name, args.join(","))
    }

    /// Enabled (label, iteration valuation) pairs in `state`.
    pub fn actions(&self, state: &AbstractState) -> Vec<(String, Valuation)> {
        let vars: Vec<(&str, Vec<Value>)> = self
            .iteration_vars
            .iter()
            .map(|(n, d)| (n.as_str(), d.clone()))
            .collect();
        cartesian(&vars)
            .into_iter()
            .filter(|v| self.filter.as_ref().map_or(true, |f| f(v, state)))
            .map(|v| (self.label(&v), v))
            .collect()
    }
}

impl fmt::Debug for ScenarioFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioFunction")
            .field("name", &self.name)
            .field("iteration_vars", &self.iteration_vars)
            .field("filtered", &self.filter.is_some())
            .finish()
    }
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    /// Stimuli establishing the initial state, applied before exploration.
    pub init: Vec<Valuation>,
    pub state_fn: StateFn,
    pub functions: Vec<ScenarioFunction>,
    /// Stimuli applied after exploration.
    pub finalize: Vec<Valuation>,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("init", &self.init)
            .field("functions", &self.functions)
            .field("finalize", &self.finalize)
            .finish()
    }
}

/// One stimulus as recorded in the test log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub cycle: u64,
    pub state: AbstractState,
    pub action: String,
    pub verdict: VerdictKind,
    pub inputs: Valuation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sys_time_ms: Option<u64>,
    /// Test case (model path) covered by the reference computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mismatches: Vec<Mismatch>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestLog(pub Vec<LogEntry>);

impl TestLog {
    pub fn to_json_lines(&self) -> String {
        self.0
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entries serialize") + "\n")
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &LogEntry> {
        self.0.iter().filter(|e| e.verdict != VerdictKind::Pass)
    }

    pub fn all_pass(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Result of running a scenario against a SUT.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub log: TestLog,
    pub traversal: Traversal<AbstractState>,
    pub traces: Vec<DecisionTrace>,
}

impl ScenarioRun {
    pub fn automaton(&self) -> &ExploredAutomaton<AbstractState> {
        &self.traversal.automaton
    }

    pub fn error(&self) -> Option<&TraversalError<AbstractState>> {
        self.traversal.error.as_ref()
    }
}

struct ScenarioSystem<'a> {
    scenario: &'a Scenario,
    spec: &'a mut Specification,
    link: &'a mut dyn Link,
    stop_on_failure: bool,
    log: TestLog,
    traces: Vec<DecisionTrace>,
    actions: BTreeMap<String, (usize, Valuation)>,
}

impl ScenarioSystem<'_> {
    fn abstract_state(&self) -> AbstractState {
        (self.scenario.state_fn)(self.spec.state())
    }

    fn stimulate(&mut self, action: &str, inputs: &[Valuation]) -> Result<(), String> {
        for stimulus in inputs {
            let state = self.abstract_state();
            let out = self.spec.apply_stimulus(self.link, stimulus);
            let case = out
                .trace
                .as_ref()
                .and_then(|t| covered_test_case(t, self.spec.model()))
                .map(|c| c.0);
            if let Some(t) = out.trace {
                self.traces.push(t);
            }
            let kind = out.verdict.kind;
            let failed = kind != VerdictKind::Pass;
            if failed {
                log::info!("{action}: {}", out.verdict);
            }
            self.log.0.push(LogEntry {
                cycle: out.verdict.cycle_index,
                state,
                action: action.to_string(),
                verdict: kind,
                inputs: stimulus.clone(),
                sys_time_ms: out.observation.map(|o| o.sys_time_ms),
                case,
                mismatches: out.verdict.mismatches,
                detail: out.verdict.detail,
            });
            if kind == VerdictKind::MediatorFailure || (failed && self.stop_on_failure) {
                return Err(format!("{kind} on cycle {}", out.verdict.cycle_index));
            }
        }
        Ok(())
    }
}

impl Explorable for ScenarioSystem<'_> {
    type State = AbstractState;

    fn state(&mut self) -> AbstractState {
        self.abstract_state()
    }

    fn actions(&mut self, state: &AbstractState) -> Vec<String> {
        let mut labels = Vec::new();
        for (i, f) in self.scenario.functions.iter().enumerate() {
            for (label, v) in f.actions(state) {
                self.actions.entry(label.clone()).or_insert((i, v));
                labels.push(label);
            }
        }
        labels
    }

    fn apply(&mut self, action: &str) -> Result<(), String> {
        let (i, v) = self
            .actions
            .get(action)
            .cloned()
            .ok_or_else(|| format!("unknown action `{action}`"))?;
        let stimuli = (self.scenario.functions[i].body)(&v);
        self.stimulate(action, &stimuli)
    }
}

/// Runs init, explores the scenario's automaton, then runs finalize.
pub fn run_scenario(
    scenario: &Scenario,
    spec: &mut Specification,
    link: &mut dyn Link,
    config: &TraversalConfig,
) -> ScenarioRun {
    let mut sys = ScenarioSystem {
        scenario,
        spec,
        link,
        stop_on_failure: config.stop_on_failure,
        log: TestLog::default(),
        traces: Vec::new(),
        actions: BTreeMap::new(),
    };
    let traversal = match sys.stimulate("init", &scenario.init) {
        Ok(()) => {
            let mut t = traverse(&mut sys, config);
            if t.error.is_none() {
                if let Err(e) = sys.stimulate("finalize", &scenario.finalize) {
                    t.error = Some(TraversalError::Aborted(e));
                }
            }
            t
        }
        Err(e) => Traversal {
            automaton: ExploredAutomaton::default(),
            steps: Vec::new(),
            error: Some(TraversalError::Aborted(e)),
        },
    };
    ScenarioRun {
        log: sys.log,
        traversal,
        traces: sys.traces,
    }
}

/// An explicit automaton over `0..n` wrapped as an [`Explorable`], with
/// optional toggling transitions that alternate between two targets.
#[derive(Clone, Debug)]
pub struct ExplicitAutomaton {
    pub initial: u32,
    /// `delta[s][a]` is the target of action `a` in state `s`.
    pub delta: Vec<Vec<u32>>,
    /// `(state, action) -> alternative target`, used on every second
    /// application.
    pub toggles: BTreeMap<(u32, usize), u32>,
    current: u32,
    applications: BTreeMap<(u32, usize), u64>,
}

impl ExplicitAutomaton {
    pub fn new(initial: u32, delta: Vec<Vec<u32>>) -> Self {
        Self {
            initial,
            delta,
            toggles: BTreeMap::new(),
            current: initial,
            applications: BTreeMap::new(),
        }
    }

    pub fn action_label(a: usize) -> String {
        format!("a{a}")
    }
}

impl Explorable for ExplicitAutomaton {
    type State = u32;

    fn state(&mut self) -> u32 {
        self.current
    }

    fn actions(&mut self, s: &u32) -> Vec<String> {
        (0..self.delta[*s as usize].len()).map(Self::action_label).collect()
    }

    fn apply(&mut self, action: &str) -> Result<(), String> {
        let a: usize = action
            .strip_prefix('a')
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("bad action `{action}`"))?;
        let s = self.current;
        let n = self.applications.entry((s, a)).or_insert(0);
        *n += 1;
        self.current = match self.toggles.get(&(s, a)) {
            Some(alt) if *n % 2 == 0 => *alt,
            _ => self.delta[s as usize][a],
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: u32) -> ExplicitAutomaton {
        // a0: next, a1: stay
        ExplicitAutomaton::new(0, (0..n).map(|s| vec![(s + 1) % n, s]).collect())
    }

    #[test]
    fn ring_is_fully_explored() {
        let mut sys = ring(4);
        let t = traverse(&mut sys, &TraversalConfig::default());
        assert!(t.error.is_none(), "{:?}", t.error);
        assert_eq!(t.automaton.states.len(), 4);
        assert_eq!(t.automaton.transitions.len(), 8);
        assert!(t.automaton.pending().is_empty());
    }

    #[test]
    fn without_confirmation_each_pair_once_on_a_ring() {
        let mut sys = ring(3);
        let cfg = TraversalConfig {
            confirm_transitions: false,
            ..TraversalConfig::default()
        };
        let t = traverse(&mut sys, &cfg);
        assert!(t.error.is_none());
        let fresh: Vec<(u32, &str)> = t
            .steps
            .iter()
            .filter(|s| !s.replay)
            .map(|s| (s.from, s.action.as_str()))
            .collect();
        assert_eq!(fresh, [(0, "a0"), (1, "a0"), (2, "a0"), (0, "a1"), (1, "a1"), (2, "a1")]);
        assert_eq!(t.steps.iter().filter(|s| s.replay).count(), 2);
    }

    #[test]
    fn stranded_actions_reported() {
        // 0 -a0-> 1, 1 is a sink.
        let mut sys = ExplicitAutomaton::new(0, vec![vec![1, 0], vec![1, 1]]);
        let cfg = TraversalConfig {
            confirm_transitions: false,
            ..TraversalConfig::default()
        };
        let t = traverse(&mut sys, &cfg);
        match t.error {
            Some(TraversalError::StrandedPendingActions { current, stranded }) => {
                assert_eq!(current, 1);
                assert_eq!(stranded, [(0, "a1".to_string())]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toggling_transition_is_nondeterministic() {
        let mut sys = ring(3);
        sys.toggles.insert((1, 1), 2);
        let t = traverse(&mut sys, &TraversalConfig::default());
        assert!(
            matches!(
                t.error,
                Some(TraversalError::NondeterminismDetected { from: 1, recorded: 1, observed: 2, .. })
            ),
            "{:?}",
            t.error
        );
    }

    struct Fresh(u32);
    impl Explorable for Fresh {
        type State = u32;
        fn state(&mut self) -> u32 {
            self.0
        }
        fn actions(&mut self, _: &u32) -> Vec<String> {
            vec!["go".into()]
        }
        fn apply(&mut self, _: &str) -> Result<(), String> {
            self.0 += 1;
            Ok(())
        }
    }

    #[test]
    fn infinite_state_space_hits_the_budget() {
        let cfg = TraversalConfig {
            max_actions: 50,
            ..TraversalConfig::default()
        };
        let t = traverse(&mut Fresh(0), &cfg);
        assert!(matches!(t.error, Some(TraversalError::BudgetExceeded { applied: 50, .. })));
        let cfg = TraversalConfig {
            max_states: Some(10),
            ..TraversalConfig::default()
        };
        let t = traverse(&mut Fresh(0), &cfg);
        assert!(matches!(t.error, Some(TraversalError::BudgetExceeded { states: 11, .. })));
    }

    #[test]
    fn dot_output() {
        assert_eq!(export_dot(&ExploredAutomaton::<u32>::default()), "digraph automaton {\n}\n");
        let mut aut = ExploredAutomaton::default();
        let s = AbstractState(vec![0, 1]);
        aut.initial = Some(s.clone());
        aut.states.insert(s.clone());
        aut.transitions.insert((s.clone(), "say(\"hi\")".into()), s);
        assert_eq!(
            export_dot(&aut),
            "digraph automaton {\n  s0 [label=\"(0,1)\", peripheries=2];\n  s0 -> s0 [label=\"say(\\\"hi\\\")\"];\n}\n"
        );
    }

    #[test]
    fn labels_and_filters() {
        let f = ScenarioFunction::new("hold", vec![("move".into(), vec![0, 1]), ("position".into(), vec![0, 1])], |v| {
            vec![v.clone()]
        })
        .with_filter(|v, s| !(s.0[0] == 1 && v["move"] == 1));
        let labels: Vec<String> = f.actions(&AbstractState(vec![0])).into_iter().map(|(l, _)| l).collect();
        assert_eq!(
            labels,
            ["hold(move=0,position=0)", "hold(move=0,position=1)", "hold(move=1,position=0)", "hold(move=1,position=1)"]
        );
        assert_eq!(f.actions(&AbstractState(vec![1])).len(), 2);
        assert_eq!(ScenarioFunction::new("tick", vec![], |_| vec![]).label(&Valuation::new()), "tick");
    }
}
