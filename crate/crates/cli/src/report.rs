//! The `enumerate-states` and `reduce` reports.

use std::path::Path;

use serde_json::{json, Value as Json};

use cyclotest_core::dsl::{describe_predicate, extract_predicates, ModelAst};
use cyclotest_core::interp::Valuation;
use cyclotest_core::reduction::{
    enlarge_states, enumerate_reachable_flag_states, partition, reduce, Enlargement, PartitionCell,
    ReachableStates, Reduction,
};
use cyclotest_core::temporal::{HeldSemantics, TimeScale};

use crate::setup::load_model;
use crate::CliError;

/// Options shared by the static subcommands.
#[derive(Clone, Debug)]
pub struct StaticConfig {
    pub time_scale: TimeScale,
    pub cycle_period_ms: u64,
    pub semantics: HeldSemantics,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self {
            time_scale: TimeScale::identity(),
            cycle_period_ms: 1000,
            semantics: HeldSemantics::Inclusive,
        }
    }
}

/// Compact rendering of a witness: runs of equal stimuli collapse into
/// `N x (...)`.
pub fn format_witness(seq: &[Valuation]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        let mut j = i;
        while j < seq.len() && seq[j] == seq[i] {
            j += 1;
        }
        let v: Vec<String> = seq[i].iter().map(|(k, v)| format!("{k}={v}")).collect();
        let v = v.join(",");
        parts.push(if j - i == 1 { format!("({v})") } else { format!("{} x ({v})", j - i) });
        i = j;
    }
    parts.join(" ")
}

pub struct StateEnumeration {
    pub model: ModelAst,
    pub reachable: ReachableStates,
}

pub fn enumerate_states(path: &Path, config: &StaticConfig) -> Result<StateEnumeration, CliError> {
    let (source, _) = load_model(path)?;
    let mut model = extract_predicates(&source)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?
        .model;
    config.time_scale.apply_to_model(&mut model);
    let period = config.time_scale.period(config.cycle_period_ms);
    let reachable = enumerate_reachable_flag_states(&model, period, config.semantics);
    Ok(StateEnumeration { model, reachable })
}

impl StateEnumeration {
    pub fn to_text(&self) -> String {
        let r = &self.reachable;
        let mut out = format!("model {}\npredicates ({}):\n", self.model.name, r.predicates.len());
        for p in &self.model.predicates {
            out.push_str(&format!("  {}\n", describe_predicate(&self.model, p)));
        }
        out.push_str(&format!("upper bound: {}\n", r.upper_bound));
        out.push_str(&format!("reachable: {}\n", r.count()));
        for s in &r.flag_states {
            let bits: String = s.vector.iter().map(|b| b.to_string()).collect();
            out.push_str(&format!("  {bits}  via {}\n", format_witness(&s.witness)));
        }
        out
    }

    pub fn to_json(&self) -> Json {
        let r = &self.reachable;
        json!({
            "model": self.model.name,
            "predicates": self.model.predicates.iter().map(|p| describe_predicate(&self.model, p)).collect::<Vec<_>>(),
            "upper_bound": r.upper_bound,
            "reachable": r.count(),
            "states": r.flag_states.iter().map(|s| json!({
                "vector": s.vector,
                "witness": s.witness,
            })).collect::<Vec<_>>(),
            "explored_nodes": r.explored_nodes,
        })
    }
}

pub struct ReductionReport {
    pub source: ModelAst,
    pub reduction: Reduction,
    pub reachable: ReachableStates,
    pub cells: Vec<PartitionCell>,
    pub enlargement: Enlargement,
}

pub fn reduce_model(path: &Path, config: &StaticConfig) -> Result<ReductionReport, CliError> {
    let (source, _) = load_model(path)?;
    let mut reduction = reduce(&source).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    config.time_scale.apply_to_model(&mut reduction.model);
    let period = config.time_scale.period(config.cycle_period_ms);
    let reachable = enumerate_reachable_flag_states(&reduction.model, period, config.semantics);
    let cells = partition(&reduction.model, &reduction.projections, &reachable.concrete);
    let enlargement = enlarge_states(&cells);
    Ok(ReductionReport {
        source,
        reduction,
        reachable,
        cells,
        enlargement,
    })
}

fn case_set(s: &std::collections::BTreeSet<cyclotest_core::interp::TestCaseId>) -> String {
    let v: Vec<String> = s.iter().map(|c| c.0.to_string()).collect();
    format!("{{{}}}", v.join(","))
}

impl ReductionReport {
    pub fn to_text(&self) -> String {
        let r = &self.reduction;
        let mut out = format!("model {}\n", self.source.name);
        out.push_str("predicates:\n");
        for p in &r.model.predicates {
            out.push_str(&format!("  {}\n", describe_predicate(&r.model, p)));
        }
        out.push_str("test cases:\n");
        for pc in &r.test_cases {
            out.push_str(&format!("  {}: {pc}\n", pc.case.0));
        }
        out.push_str("rewritten:\n");
        for pc in &r.rewritten {
            out.push_str(&format!("  {}: {pc}\n", pc.case.0));
        }
        out.push_str("projections:\n");
        for p in &r.projections {
            out.push_str(&format!("  {}: {p}\n", p.case.0));
        }
        out.push_str(&format!(
            "partition: {} reachable states in {} cells\n",
            self.reachable.concrete.len(),
            self.cells.len()
        ));
        for c in &self.cells {
            out.push_str(&format!(
                "  {}: {} state{}, coverable {}{}\n",
                c.state,
                c.members.len(),
                if c.members.len() == 1 { "" } else { "s" },
                case_set(&c.coverable),
                if c.sound { "" } else { " (members disagree)" }
            ));
        }
        if self.enlargement.is_identity() {
            out.push_str("enlargement: none (every cell covers a distinct case set)\n");
        } else {
            out.push_str("enlargement:\n");
            for c in &self.enlargement.cells {
                let merged: Vec<String> = c.merged.iter().map(|s| s.to_string()).collect();
                out.push_str(&format!(
                    "  {} <- {} coverable {}\n",
                    c.representative,
                    merged.join(" "),
                    case_set(&c.coverable)
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> Json {
        let r = &self.reduction;
        let list = |v: Vec<String>| Json::from(v);
        json!({
            "model": self.source.name,
            "predicates": r.model.predicates.iter().map(|p| describe_predicate(&r.model, p)).collect::<Vec<_>>(),
            "test_cases": list(r.test_cases.iter().map(|p| p.to_string()).collect()),
            "rewritten": list(r.rewritten.iter().map(|p| p.to_string()).collect()),
            "projections": list(r.projections.iter().map(|p| p.to_string()).collect()),
            "reachable_states": self.reachable.concrete.len(),
            "cells": self.cells.iter().map(|c| json!({
                "state": c.state.to_string(),
                "members": c.members.len(),
                "coverable": c.coverable.iter().map(|t| t.0).collect::<Vec<_>>(),
                "sound": c.sound,
            })).collect::<Vec<_>>(),
            "enlarged": self.enlargement.cells.iter().map(|c| json!({
                "representative": c.representative.to_string(),
                "merged": c.merged.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}
