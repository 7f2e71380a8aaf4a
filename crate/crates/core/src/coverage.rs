//! Structural coverage of the model measured from decision traces: branch,
//! decision, condition and unique-cause MC/DC.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{expr_to_string, ModelAst, NodeId};
use crate::interp::DecisionTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Branch,
    Decision,
    Condition,
    Mcdc,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Branch,
        Criterion::Decision,
        Criterion::Condition,
        Criterion::Mcdc,
    ];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Branch => "branch",
            Criterion::Decision => "decision",
            Criterion::Condition => "condition",
            Criterion::Mcdc => "mcdc",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "branch" => Ok(Criterion::Branch),
            "decision" => Ok(Criterion::Decision),
            "condition" => Ok(Criterion::Condition),
            "mcdc" | "mc/dc" => Ok(Criterion::Mcdc),
            other => Err(format!(
                "unknown criterion `{other}` (expected branch, decision, condition or mcdc)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("trace does not match model `{model}`: {reason}")]
    ModelMismatch { model: String, reason: String },
}

/// Observations of one decision node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCoverage {
    pub node: NodeId,
    pub condition: String,
    pub atoms: Vec<String>,
    /// Distinct (condition vector, outcome) pairs seen.
    pub vectors: BTreeSet<(Vec<bool>, bool)>,
}

impl DecisionCoverage {
    pub fn outcome_seen(&self, outcome: bool) -> bool {
        self.vectors.iter().any(|(_, o)| *o == outcome)
    }

    pub fn condition_seen(&self, atom: usize, value: bool) -> bool {
        self.vectors.iter().any(|(v, _)| v[atom] == value)
    }

    /// First pair (in vector order) that shows atom `i` independently
    /// affecting the outcome: vectors differing only at `i`, with different
    /// outcomes.
    pub fn mcdc_pair(&self, i: usize) -> Option<(Vec<bool>, Vec<bool>)> {
        let seen: Vec<&(Vec<bool>, bool)> = self.vectors.iter().collect();
        for (x, (u, ou)) in seen.iter().enumerate() {
            for (v, ov) in &seen[x + 1..] {
                let only_i = u
                    .iter()
                    .zip(v.iter())
                    .enumerate()
                    .all(|(j, (a, b))| (j == i) != (a == b));
                if only_i && ou != ov {
                    return Some((u.clone(), v.clone()));
                }
            }
        }
        None
    }
}

/// One atomic condition's MC/DC status.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McdcCondition {
    pub node: NodeId,
    pub index: usize,
    pub atom: String,
    pub pair: Option<(Vec<bool>, Vec<bool>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionSummary {
    pub criterion: Criterion,
    pub covered: usize,
    pub total: usize,
    pub ratio: f64,
    pub uncovered: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub model: String,
    pub decisions: Vec<DecisionCoverage>,
    pub leaves: Vec<NodeId>,
    pub leaves_reached: BTreeSet<NodeId>,
    /// Number of traces accumulated.
    pub traces: u64,
}

impl CoverageReport {
    /// Empty report; the item totals come from the model's structure.
    pub fn new(model: &ModelAst) -> Self {
        Self {
            model: model.name.clone(),
            decisions: model
                .decisions()
                .into_iter()
                .map(|(node, cond)| DecisionCoverage {
                    node,
                    condition: expr_to_string(cond),
                    atoms: cond.atoms().into_iter().map(expr_to_string).collect(),
                    vectors: BTreeSet::new(),
                })
                .collect(),
            leaves: model.leaves().into_iter().map(|(id, _)| id).collect(),
            leaves_reached: BTreeSet::new(),
            traces: 0,
        }
    }

    fn mismatch(&self, reason: impl Into<String>) -> CoverageError {
        CoverageError::ModelMismatch {
            model: self.model.clone(),
            reason: reason.into(),
        }
    }

    /// Adds one trace. The covered sets only grow.
    pub fn accumulate(&mut self, trace: &DecisionTrace) -> Result<(), CoverageError> {
        if !self.leaves.contains(&trace.leaf) {
            return Err(self.mismatch(format!("{} is not a leaf", trace.leaf)));
        }
        let mut idx = Vec::with_capacity(trace.decisions.len());
        for rec in &trace.decisions {
            let i = self
                .decisions
                .iter()
                .position(|d| d.node == rec.node)
                .ok_or_else(|| self.mismatch(format!("{} is not a decision", rec.node)))?;
            if self.decisions[i].atoms.len() != rec.conditions.len() {
                return Err(self.mismatch(format!(
                    "{} has {} conditions, trace has {}",
                    rec.node,
                    self.decisions[i].atoms.len(),
                    rec.conditions.len()
                )));
            }
            idx.push(i);
        }
        for (rec, i) in trace.decisions.iter().zip(idx) {
            self.decisions[i]
                .vectors
                .insert((rec.conditions.clone(), rec.outcome));
        }
        self.leaves_reached.insert(trace.leaf.clone());
        self.traces += 1;
        Ok(())
    }

    pub fn accumulate_all<'a>(
        &mut self,
        traces: impl IntoIterator<Item = &'a DecisionTrace>,
    ) -> Result<(), CoverageError> {
        traces.into_iter().try_for_each(|t| self.accumulate(t))
    }

    /// Union of two reports of the same model.
    pub fn merge(&mut self, other: &CoverageReport) -> Result<(), CoverageError> {
        let same_shape = self.model == other.model
            && self.leaves == other.leaves
            && self.decisions.len() == other.decisions.len()
            && self
                .decisions
                .iter()
                .zip(&other.decisions)
                .all(|(a, b)| a.node == b.node && a.atoms == b.atoms);
        if !same_shape {
            return Err(self.mismatch(format!("cannot merge with report of `{}`", other.model)));
        }
        for (a, b) in self.decisions.iter_mut().zip(&other.decisions) {
            a.vectors.extend(b.vectors.iter().cloned());
        }
        self.leaves_reached.extend(other.leaves_reached.iter().cloned());
        self.traces += other.traces;
        Ok(())
    }

    pub fn mcdc_pairs(&self) -> Vec<McdcCondition> {
        self.decisions
            .iter()
            .flat_map(|d| {
                d.atoms.iter().enumerate().map(move |(i, atom)| McdcCondition {
                    node: d.node.clone(),
                    index: i,
                    atom: atom.clone(),
                    pair: d.mcdc_pair(i),
                })
            })
            .collect()
    }

    /// Covered items per criterion, as (item name, covered).
    fn items(&self, criterion: Criterion) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        match criterion {
            Criterion::Branch => {
                for d in &self.decisions {
                    for outcome in [true, false] {
                        out.push((
                            format!("{}:{}", d.node, if outcome { "then" } else { "else" }),
                            d.outcome_seen(outcome),
                        ));
                    }
                }
            }
            Criterion::Decision => {
                for d in &self.decisions {
                    out.push((
                        d.node.to_string(),
                        d.outcome_seen(true) && d.outcome_seen(false),
                    ));
                }
            }
            Criterion::Condition => {
                for d in &self.decisions {
                    for (i, atom) in d.atoms.iter().enumerate() {
                        for value in [true, false] {
                            out.push((
                                format!("{}[{i}] {atom}={value}", d.node),
                                d.condition_seen(i, value),
                            ));
                        }
                    }
                }
            }
            Criterion::Mcdc => {
                for m in self.mcdc_pairs() {
                    out.push((format!("{}[{}] {}", m.node, m.index, m.atom), m.pair.is_some()));
                }
            }
        }
        out
    }

    pub fn summary(&self, criterion: Criterion) -> CriterionSummary {
        let items = self.items(criterion);
        let total = items.len();
        let covered = items.iter().filter(|(_, c)| *c).count();
        let ratio = if total == 0 {
            if self.traces > 0 { 1.0 } else { 0.0 }
        } else {
            covered as f64 / total as f64
        };
        CriterionSummary {
            criterion,
            covered,
            total,
            ratio,
            uncovered: items.into_iter().filter(|(_, c)| !c).map(|(n, _)| n).collect(),
        }
    }

    pub fn ratio(&self, criterion: Criterion) -> f64 {
        self.summary(criterion).ratio
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "traces": self.traces,
            "criteria": Criterion::ALL.iter().map(|c| self.summary(*c)).collect::<Vec<_>>(),
            "test_cases": {
                "total": self.leaves.len(),
                "reached": self.leaves.iter().enumerate()
                    .filter(|(_, l)| self.leaves_reached.contains(l))
                    .map(|(i, _)| i + 1)
                    .collect::<Vec<_>>(),
            },
            "mcdc_pairs": self.mcdc_pairs(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("coverage of model `{}` ({} traces)\n", self.model, self.traces);
        out.push_str(&format!("{:<10} {:>8} {:>6} {:>7}\n", "criterion", "covered", "total", "ratio"));
        for c in Criterion::ALL {
            let s = self.summary(c);
            out.push_str(&format!(
                "{:<10} {:>8} {:>6} {:>7.3}\n",
                c.to_string(),
                s.covered,
                s.total,
                s.ratio
            ));
        }
        for c in Criterion::ALL {
            let s = self.summary(c);
            for u in s.uncovered {
                out.push_str(&format!("  uncovered {c}: {u}\n"));
            }
        }
        out
    }
}
