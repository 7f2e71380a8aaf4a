//! Browser bindings for the iron shut-off demo page.
//!
//! Each operation takes plain strings and returns a JSON document; the
//! native functions are the testable core, the `#[wasm_bindgen]` wrappers
//! only convert errors.

use std::collections::BTreeMap;

use serde_json::{json, Value as Json};
use wasm_bindgen::prelude::*;

use cyclotest_core::contracts::VerdictKind;
use cyclotest_core::coverage::CoverageReport;
use cyclotest_core::dsl::{check_model, parse_model, Severity};
use cyclotest_core::interp::Valuation;
use cyclotest_core::iron::{iron_reduction, iron_scenario, iron_specification, make_mutant, IronTiming, MutantId};
use cyclotest_core::kernel::KernelConfig;
use cyclotest_core::mediator::{InProcessLink, ModelSut, SutHost};
use cyclotest_core::reduction::{enlarge_states, enumerate_reachable_flag_states, partition, reduce};
use cyclotest_core::temporal::{parse_duration_overrides, HeldSemantics, TimeScale};
use cyclotest_core::traversal::{export_dot, run_scenario, TraversalConfig};

const PERIOD_MS: u64 = 1000;

fn scale(durations: &str) -> Result<TimeScale, String> {
    let mut scale = TimeScale::identity();
    if !durations.trim().is_empty() {
        scale.overrides.extend(parse_duration_overrides(durations)?);
    }
    Ok(scale)
}

fn mutant(name: &str) -> Result<Option<MutantId>, String> {
    match name.trim() {
        "" | "none" => Ok(None),
        m => m.parse().map(Some).map_err(|e| format!("{e}")),
    }
}

/// Parses stimuli written as `mp` digit pairs separated by whitespace,
/// with an optional `xN` repeat: `00x4 01 11`.
pub fn parse_stimuli(text: &str) -> Result<Vec<(bool, bool)>, String> {
    let mut out = Vec::new();
    for token in text.split_whitespace() {
        let (pair, count) = match token.split_once('x') {
            Some((p, n)) => (p, n.parse::<usize>().map_err(|_| format!("bad repeat in `{token}`"))?),
            None => (token, 1),
        };
        let bit = |c: char| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(format!("bad stimulus `{token}`: expected two of 0/1")),
        };
        let chars: Vec<char> = pair.chars().collect();
        if chars.len() != 2 {
            return Err(format!("bad stimulus `{token}`: expected two of 0/1"));
        }
        let v = (bit(chars[0])?, bit(chars[1])?);
        out.extend(std::iter::repeat(v).take(count));
    }
    Ok(out)
}

/// Cycle-by-cycle run of the iron model next to an iron implementation.
pub fn timeline_json(durations: &str, mutant_name: &str, stimuli: &str) -> Result<Json, String> {
    let scale = scale(durations)?;
    let seq = parse_stimuli(stimuli)?;
    let reduction = iron_reduction(&scale);
    let config = KernelConfig::deterministic(PERIOD_MS);
    let mut reference = SutHost::new(Box::new(ModelSut::new(reduction.model, HeldSemantics::Inclusive)), config.clone());
    let mut sut = SutHost::new(
        Box::new(make_mutant(mutant(mutant_name)?, IronTiming::scaled(&scale))),
        config,
    );
    let mut rows = Vec::new();
    for (mv, pos) in seq {
        let inputs: Valuation = [("move".to_string(), mv as i64), ("position".to_string(), pos as i64)].into();
        let expected = reference.cycle(&inputs).map_err(|e| e.to_string())?;
        let actual = sut.cycle(&inputs).map_err(|e| e.to_string())?;
        rows.push(json!({
            "cycle": actual.cycle,
            "t_ms": actual.sys_time_ms,
            "move": mv as u8,
            "position": pos as u8,
            "expected": expected.outputs["heating"],
            "actual": actual.outputs["heating"],
            "flags": expected.visible_state,
        }));
    }
    Ok(json!({ "rows": rows }))
}

/// Test cases, rewritten conditions, projections and the partition of a
/// model given as source text.
pub fn reduce_json(source: &str, durations: &str) -> Result<Json, String> {
    let model = parse_model(source).map_err(|e| e.render("model"))?;
    let errors: Vec<String> = check_model(&model)
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.render("model"))
        .collect();
    if !errors.is_empty() {
        return Err(errors.join("\n"));
    }
    let mut reduction = reduce(&model).map_err(|e| e.to_string())?;
    scale(durations)?.apply_to_model(&mut reduction.model);
    let reach = enumerate_reachable_flag_states(&reduction.model, PERIOD_MS, HeldSemantics::Inclusive);
    let cells = partition(&reduction.model, &reduction.projections, &reach.concrete);
    let enlargement = enlarge_states(&cells);
    let strings = |v: Vec<String>| Json::from(v);
    Ok(json!({
        "model": model.name,
        "test_cases": strings(reduction.test_cases.iter().map(|p| p.to_string()).collect()),
        "rewritten": strings(reduction.rewritten.iter().map(|p| p.to_string()).collect()),
        "projections": strings(reduction.projections.iter().map(|p| p.to_string()).collect()),
        "upper_bound": reach.upper_bound,
        "reachable": reach.count(),
        "cells": cells.iter().map(|c| json!({
            "state": c.state.to_string(),
            "members": c.members.len(),
            "coverable": c.coverable.iter().map(|t| t.0).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "enlarged_cells": enlargement.cells.len(),
    }))
}

/// Explores the iron implementation with the coverage scenario and returns
/// the automaton in DOT, verdict counts, the first failure and coverage.
pub fn explore_json(durations: &str, mutant_name: &str) -> Result<Json, String> {
    let scale = scale(durations)?;
    let reduction = iron_reduction(&scale);
    let mut spec = iron_specification(reduction.model.clone(), HeldSemantics::Inclusive);
    let sut = make_mutant(mutant(mutant_name)?, IronTiming::scaled(&scale));
    let mut link = InProcessLink::new(SutHost::new(Box::new(sut), KernelConfig::deterministic(PERIOD_MS)));
    let config = TraversalConfig {
        max_actions: 10_000,
        ..TraversalConfig::default()
    };
    let run = run_scenario(&iron_scenario(&reduction, PERIOD_MS), &mut spec, &mut link, &config);
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &run.log.0 {
        *verdicts.entry(e.verdict.to_string()).or_default() += 1;
    }
    let mut coverage = CoverageReport::new(&reduction.model);
    for t in &run.traces {
        coverage.accumulate(t).map_err(|e| e.to_string())?;
    }
    let first_failure = run.log.0.iter().find(|e| e.verdict != VerdictKind::Pass);
    Ok(json!({
        "dot": export_dot(run.automaton()),
        "stimuli": run.log.0.len(),
        "verdicts": verdicts,
        "first_failure": first_failure,
        "error": run.error().map(|e| e.to_string()),
        "coverage": coverage.to_json()["criteria"],
    }))
}

fn to_js(r: Result<Json, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn timeline(durations: &str, mutant: &str, stimuli: &str) -> Result<String, JsError> {
    to_js(timeline_json(durations, mutant, stimuli))
}

#[wasm_bindgen(js_name = reduceModel)]
pub fn reduce_model(source: &str, durations: &str) -> Result<String, JsError> {
    to_js(reduce_json(source, durations))
}

#[wasm_bindgen]
pub fn explore(durations: &str, mutant: &str) -> Result<String, JsError> {
    to_js(explore_json(durations, mutant))
}

#[wasm_bindgen(js_name = ironSource)]
pub fn iron_source() -> String {
    cyclotest_core::iron::IRON_MODEL.to_string()
}
