//! The `run` pipeline: parse, extract predicates, reduce, traverse, report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::{json, Value as Json};

use cyclotest_core::contracts::VerdictKind;
use cyclotest_core::coverage::{CoverageReport, Criterion};
use cyclotest_core::dsl::{ModelAst, Node, NodeId};
use cyclotest_core::interp::DecisionTrace;
use cyclotest_core::kernel::CycleRecord;
use cyclotest_core::mediator::{Link, DEFAULT_TIMEOUT};
use cyclotest_core::reduction::{
    coverage_scenario, enlarge_states, enumerate_reachable_flag_states, make_piecemeal, partition, reduce,
    Reduction, ScenarioOptions, Target,
};
use cyclotest_core::temporal::{HeldSemantics, TimeScale};
use cyclotest_core::traversal::{
    export_dot, run_scenario, AbstractState, ExploredAutomaton, Scenario, TestLog, TraversalConfig,
    TraversalError,
};

use crate::setup::{load_model, open_link, LinkOptions, SutSpec};
use crate::{exit, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// One `hold` action per input valuation over the generalized states.
    Coverage,
    /// One scenario per branch of the root decision.
    Piecemeal,
    /// Generalized states merged when they cover the same test cases.
    Enlarged,
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "coverage" => Ok(Self::Coverage),
            "piecemeal" => Ok(Self::Piecemeal),
            "enlarged" => Ok(Self::Enlarged),
            _ => Err(format!("unknown scenario `{s}` (coverage, piecemeal, enlarged)")),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Coverage => "coverage",
            Self::Piecemeal => "piecemeal",
            Self::Enlarged => "enlarged",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format `{s}` (text, json)")),
        }
    }
}

/// A `<criterion>=<ratio>` coverage requirement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Requirement {
    pub criterion: Criterion,
    pub ratio: f64,
}

impl FromStr for Requirement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (c, r) = s
            .split_once('=')
            .ok_or_else(|| format!("`{s}`: expected <criterion>=<ratio>"))?;
        let criterion: Criterion = c.parse().map_err(|e| format!("{e}"))?;
        let ratio: f64 = r.parse().map_err(|e| format!("`{r}`: {e}"))?;
        if !(0.0..=1.0).contains(&ratio) {
            return Err(format!("ratio {ratio} outside 0..1"));
        }
        Ok(Self { criterion, ratio })
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model_path: PathBuf,
    pub sut: SutSpec,
    pub scenario: ScenarioKind,
    /// Unscaled cycle period.
    pub cycle_period_ms: u64,
    /// Run cycles back to back instead of sleeping out each period.
    pub streaming: bool,
    pub time_scale: TimeScale,
    /// Maximum test actions per scenario, replays included.
    pub budget: u64,
    /// Shuffles the iteration order of scenario actions.
    pub seed: Option<u64>,
    pub report_format: ReportFormat,
    pub dot_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub required_coverage: Vec<Requirement>,
    /// Zeroes execution times and omits timestamps from reports.
    pub deterministic: bool,
    pub trace_cycles: bool,
    pub semantics: HeldSemantics,
    pub jobs: usize,
    pub timeout: Duration,
}

impl RunConfig {
    pub fn new(model_path: impl Into<PathBuf>, sut: SutSpec) -> Self {
        Self {
            model_path: model_path.into(),
            sut,
            scenario: ScenarioKind::Coverage,
            cycle_period_ms: 1000,
            streaming: true,
            time_scale: TimeScale::identity(),
            budget: 100_000,
            seed: None,
            report_format: ReportFormat::Text,
            dot_path: None,
            log_path: None,
            required_coverage: Vec::new(),
            deterministic: false,
            trace_cycles: false,
            semantics: HeldSemantics::Inclusive,
            jobs: 1,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.budget == 0 {
            return Err(CliError::Usage("budget must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        if self.cycle_period_ms == 0 {
            return Err(CliError::Usage("cycle period must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub name: String,
    pub log: TestLog,
    pub automaton: ExploredAutomaton<AbstractState>,
    pub actions_applied: usize,
    pub error: Option<TraversalError<AbstractState>>,
    pub cycle_log: Vec<CycleRecord>,
    pub traces: Vec<DecisionTrace>,
}

#[derive(Clone, Debug)]
pub struct CampaignResult {
    pub model: String,
    pub scenarios: Vec<ScenarioResult>,
    pub coverage: CoverageReport,
    pub unmet: Vec<(Requirement, f64)>,
    pub exit_code: i32,
    pub elapsed: Duration,
    pub started_at_ms: u128,
}

impl CampaignResult {
    pub fn log(&self) -> TestLog {
        TestLog(self.scenarios.iter().flat_map(|s| s.log.0.iter().cloned()).collect())
    }

    pub fn to_dot(&self) -> String {
        self.scenarios.iter().map(|s| export_dot(&s.automaton)).collect()
    }

    fn verdict_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.scenarios {
            for e in &s.log.0 {
                *counts.entry(e.verdict.to_string()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn to_json(&self, config: &RunConfig) -> Json {
        let scenarios: Vec<Json> = self
            .scenarios
            .iter()
            .map(|s| {
                json!({
                    "name": s.name,
                    "states": s.automaton.states.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                    "transitions": s.automaton.transitions.iter()
                        .map(|((from, a), to)| json!({"from": from.to_string(), "action": a, "to": to.to_string()}))
                        .collect::<Vec<_>>(),
                    "actions_applied": s.actions_applied,
                    "stimuli": s.log.0.len(),
                    "error": s.error.as_ref().map(|e| e.to_string()),
                })
            })
            .collect();
        let failures: Vec<Json> = self
            .scenarios
            .iter()
            .flat_map(|s| {
                s.log.failures().map(move |e| {
                    let mut v = serde_json::to_value(e).expect("log entries serialize");
                    v["scenario"] = json!(s.name);
                    v
                })
            })
            .collect();
        let requirements: Vec<Json> = config
            .required_coverage
            .iter()
            .map(|r| {
                let actual = self.coverage.ratio(r.criterion);
                json!({"criterion": r.criterion.to_string(), "required": r.ratio, "actual": actual, "met": actual >= r.ratio})
            })
            .collect();
        let mut out = json!({
            "model": self.model,
            "sut": config.sut.to_string(),
            "scenario": config.scenario.to_string(),
            "cycle_period_ms": config.time_scale.period(config.cycle_period_ms),
            "semantics": format!("{:?}", config.semantics),
            "seed": config.seed,
            "scenarios": scenarios,
            "verdicts": self.verdict_counts(),
            "failures": failures,
            "coverage": self.coverage.to_json(),
            "requirements": requirements,
            "exit_code": self.exit_code,
        });
        if !config.deterministic {
            out["started_at_ms"] = json!(self.started_at_ms as u64);
            out["elapsed_ms"] = json!(self.elapsed.as_millis() as u64);
        }
        out
    }

    pub fn to_text(&self, config: &RunConfig) -> String {
        let mut out = format!(
            "model {} | sut {} | scenario {}\n",
            self.model, config.sut, config.scenario
        );
        for s in &self.scenarios {
            out.push_str(&format!(
                "{}: {} states, {} transitions, {} actions, {} stimuli\n",
                s.name,
                s.automaton.states.len(),
                s.automaton.transitions.len(),
                s.actions_applied,
                s.log.0.len()
            ));
            if let Some(e) = &s.error {
                out.push_str(&format!("  error: {e}\n"));
            }
            for e in s.log.failures() {
                out.push_str(&format!("  cycle {} {} in {}: {}", e.cycle, e.action, e.state, e.verdict));
                for m in &e.mismatches {
                    match m.actual {
                        Some(a) => out.push_str(&format!(" {}: expected {}, actual {};", m.name, m.expected, a)),
                        None => out.push_str(&format!(" {}: expected {}, missing;", m.name, m.expected)),
                    }
                }
                if !e.detail.is_empty() {
                    out.push_str(&format!(" {}", e.detail));
                }
                out.push('\n');
            }
        }
        let counts: Vec<String> = self
            .verdict_counts()
            .iter()
            .map(|(k, v)| format!("{k} {v}"))
            .collect();
        out.push_str(&format!("verdicts: {}\n", counts.join(", ")));
        out.push_str(&self.coverage.to_text());
        for (r, actual) in &self.unmet {
            out.push_str(&format!(
                "requirement {}={} not met: {:.3}\n",
                r.criterion, r.ratio, actual
            ));
        }
        if !config.deterministic {
            out.push_str(&format!("elapsed {} ms\n", self.elapsed.as_millis()));
        }
        out.push_str(&format!(
            "result: {}\n",
            match self.exit_code {
                exit::OK => "PASS",
                exit::PROTOCOL => "PROTOCOL ERROR",
                exit::VERDICT => "FAIL",
                _ => "COVERAGE NOT MET",
            }
        ));
        out
    }
}

/// Scenarios to run for `kind`.
pub fn build_scenarios(
    kind: ScenarioKind,
    reduction: &Reduction,
    period_ms: u64,
    semantics: HeldSemantics,
    seed: Option<u64>,
) -> Vec<Scenario> {
    let name = reduction.model.name.clone();
    let base = ScenarioOptions {
        semantics,
        ..Default::default()
    };
    let mut scenarios = match kind {
        ScenarioKind::Coverage => vec![coverage_scenario(&name, reduction, period_ms, base)],
        ScenarioKind::Enlarged => {
            let reach = enumerate_reachable_flag_states(&reduction.model, period_ms, semantics);
            let cells = partition(&reduction.model, &reduction.projections, &reach.concrete);
            let enlargement = enlarge_states(&cells);
            log::info!(
                "enlargement: {} generalized states into {} cells",
                cells.len(),
                enlargement.cells.len()
            );
            vec![coverage_scenario(
                &format!("{name}-enlarged"),
                reduction,
                period_ms,
                ScenarioOptions {
                    enlargement: Some(enlargement),
                    ..base
                },
            )]
        }
        ScenarioKind::Piecemeal => piecemeal_scenarios(&reduction.model, reduction, period_ms, base),
    };
    if let Some(seed) = seed {
        let mut rng = StdRng::seed_from_u64(seed);
        for s in &mut scenarios {
            for f in &mut s.functions {
                for (_, domain) in &mut f.iteration_vars {
                    domain.shuffle(&mut rng);
                }
            }
        }
    }
    scenarios
}

fn piecemeal_scenarios(model: &ModelAst, reduction: &Reduction, period_ms: u64, base: ScenarioOptions) -> Vec<Scenario> {
    if !matches!(model.body, Node::Decision { .. }) {
        return vec![coverage_scenario(&model.name, reduction, period_ms, base)];
    }
    let parts = [NodeId(vec![true]), NodeId(vec![false])];
    let split = make_piecemeal(model, &parts, &[Target::Measured(Criterion::Branch)])
        .expect("sibling subtrees are disjoint");
    split
        .parts
        .into_iter()
        .map(|p| {
            coverage_scenario(
                &format!("{}-{}", model.name, p.root),
                reduction,
                period_ms,
                ScenarioOptions {
                    allowed_inputs: Some(p.allowed_inputs),
                    ..base.clone()
                },
            )
        })
        .collect()
}

fn run_one(
    scenario: &Scenario,
    reduction: &Reduction,
    config: &RunConfig,
    opts: &LinkOptions,
) -> Result<ScenarioResult, CliError> {
    let mut link = open_link(&config.sut, &reduction.model, opts)?;
    let mut spec = cyclotest_core::contracts::Specification::new(reduction.model.clone(), config.semantics);
    let tcfg = TraversalConfig {
        max_actions: config.budget,
        ..TraversalConfig::default()
    };
    log::debug!("scenario {}: starting against {}", scenario.name, config.sut);
    let run = run_scenario(scenario, &mut spec, &mut link, &tcfg);
    log::debug!(
        "scenario {}: {} actions, {} states",
        scenario.name,
        run.traversal.steps.len(),
        run.traversal.automaton.states.len()
    );
    if let Err(e) = link.shutdown() {
        log::warn!("{}: shutdown: {e}", config.sut);
    }
    Ok(ScenarioResult {
        name: scenario.name.clone(),
        actions_applied: run.traversal.steps.len(),
        automaton: run.traversal.automaton,
        error: run.traversal.error,
        log: run.log,
        traces: run.traces,
        cycle_log: link.cycle_log().to_vec(),
    })
}

/// Runs a full campaign. Parse and connection failures are errors; test
/// failures are reported through [`CampaignResult::exit_code`].
pub fn run_campaign(config: &RunConfig) -> Result<CampaignResult, CliError> {
    config.validate()?;
    let started = Instant::now();
    let started_at_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let (source, warnings) = load_model(&config.model_path)?;
    for w in warnings {
        log::warn!("{}", w.render(&config.model_path.display().to_string()));
    }
    let mut reduction = reduce(&source).map_err(|e| CliError::Parse(format!("{}: {e}", config.model_path.display())))?;
    config.time_scale.apply_to_model(&mut reduction.model);
    let period_ms = config.time_scale.period(config.cycle_period_ms);
    let opts = LinkOptions {
        period_ms,
        scale: config.time_scale.clone(),
        streaming: config.streaming,
        deterministic: config.deterministic,
        semantics: config.semantics,
        timeout: config.timeout,
        keep_cycle_log: config.trace_cycles,
    };

    let scenarios = build_scenarios(config.scenario, &reduction, period_ms, config.semantics, config.seed);
    if config.jobs > 1 && scenarios.len() == 1 {
        log::warn!("--jobs has no effect on a single scenario");
    }
    let results: Vec<Result<ScenarioResult, CliError>> = if config.jobs > 1 && scenarios.len() > 1 {
        let mut out = Vec::with_capacity(scenarios.len());
        for chunk in scenarios.chunks(config.jobs) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|sc| s.spawn(|| run_one(sc, &reduction, config, &opts)))
                    .collect();
                for h in handles {
                    out.push(h.join().expect("scenario thread panicked"));
                }
            });
        }
        out
    } else {
        scenarios.iter().map(|sc| run_one(sc, &reduction, config, &opts)).collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut coverage = CoverageReport::new(&reduction.model);
    for r in &results {
        coverage
            .accumulate_all(&r.traces)
            .map_err(|e| CliError::Protocol(e.to_string()))?;
    }

    let unmet: Vec<(Requirement, f64)> = config
        .required_coverage
        .iter()
        .map(|r| (*r, coverage.ratio(r.criterion)))
        .filter(|(r, actual)| actual < &r.ratio)
        .collect();

    let exit_code = exit_code_for(&results, !unmet.is_empty());
    let result = CampaignResult {
        model: source.name.clone(),
        scenarios: results,
        coverage,
        unmet,
        exit_code,
        elapsed: started.elapsed(),
        started_at_ms,
    };
    write_artifacts(&result, config)?;
    Ok(result)
}

fn exit_code_for(results: &[ScenarioResult], coverage_unmet: bool) -> i32 {
    let logs = || results.iter().flat_map(|r| r.log.0.iter());
    if logs().any(|e| e.verdict == VerdictKind::MediatorFailure) {
        return exit::PROTOCOL;
    }
    let nondeterministic = results
        .iter()
        .any(|r| matches!(r.error, Some(TraversalError::NondeterminismDetected { .. })));
    if nondeterministic || logs().any(|e| e.verdict != VerdictKind::Pass) {
        return exit::VERDICT;
    }
    if results
        .iter()
        .any(|r| matches!(r.error, Some(TraversalError::Aborted(_))))
    {
        return exit::PROTOCOL;
    }
    // An exploration cut short by the budget leaves coverage incomplete.
    if coverage_unmet || results.iter().any(|r| r.error.is_some()) {
        return exit::COVERAGE;
    }
    exit::OK
}

fn write_artifacts(result: &CampaignResult, config: &RunConfig) -> Result<(), CliError> {
    if let Some(p) = &config.dot_path {
        std::fs::write(p, result.to_dot())?;
    }
    if let Some(p) = &config.log_path {
        std::fs::write(p, result.log().to_json_lines())?;
    }
    Ok(())
}
