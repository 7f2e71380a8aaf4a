use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::*;
use super::print::{expr_to_string, format_duration};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("unsupported temporal formula `{formula}`: held() takes a conjunction of literals over inputs or state variables")]
    UnsupportedTemporalFormula { formula: String },
}

/// Recognizes `v`, `!v` (boolean `v`) and `v == c` / `c == v`.
pub(crate) fn literal_of(model: &ModelAst, e: &Expr) -> Option<Literal> {
    let is_var = |name: &str| {
        matches!(
            model.lookup(name),
            Some(Symbol::Input(_)) | Some(Symbol::State(..))
        )
    };
    match e {
        Expr::Var(v) if is_var(v) && model.var_type(v)?.is_bool() => Some(Literal::new(v, 1)),
        Expr::Not(inner) => match inner.as_ref() {
            Expr::Var(v) if is_var(v) && model.var_type(v)?.is_bool() => Some(Literal::new(v, 0)),
            _ => None,
        },
        Expr::Binary(BinOp::Eq, a, b) => {
            let (v, c) = match (a.as_ref(), b.as_ref()) {
                (Expr::Var(v), other) | (other, Expr::Var(v)) => (v, const_value(other)?),
                _ => return None,
            };
            let ty = model.var_type(v)?;
            (is_var(v) && ty.contains(c)).then(|| Literal::new(v, c))
        }
        _ => None,
    }
}

fn const_value(e: &Expr) -> Option<Value> {
    match e {
        Expr::Const(v) => Some(*v),
        Expr::Bool(b) => Some(i64::from(*b)),
        Expr::Neg(inner) => const_value(inner).map(|v| -v),
        _ => None,
    }
}

/// Splits `held(l1 && .. && lk, T)` into `k` literals.
pub fn decompose_held(model: &ModelAst, formula: &Expr) -> Result<Vec<Literal>, ExtractError> {
    formula
        .conjuncts()
        .into_iter()
        .map(|c| {
            literal_of(model, c).ok_or_else(|| ExtractError::UnsupportedTemporalFormula {
                formula: expr_to_string(formula),
            })
        })
        .collect()
}

/// Result of predicate extraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extracted {
    /// Every temporal predicate, ordered by duration and then by first use.
    pub predicates: Vec<TemporalPredicateDecl>,
    /// The model with each `held()` replaced by a conjunction of predicate
    /// references; its `predicates` field equals the list above.
    pub model: ModelAst,
}

/// Replaces every `held(l1 && .. && lk, T)` with `p1 && .. && pk`, assigning
/// one identifier per distinct `(literal, duration)` pair.
pub fn extract_predicates(ast: &ModelAst) -> Result<Extracted, ExtractError> {
    // Collect (literal, duration) pairs in first-use order.
    let mut found: Vec<(Literal, u64)> = ast
        .predicates
        .iter()
        .map(|p| (p.literal.clone(), p.duration_ms))
        .collect();
    let mut held_exprs = Vec::new();
    ast.walk(|_, node| match node {
        Node::Decision { cond, .. } => held_exprs.push(cond),
        Node::Leaf { assigns, .. } => held_exprs.extend(assigns.iter().map(|a| &a.value)),
    });
    let mut error = None;
    for e in held_exprs {
        e.visit(&mut |sub| {
            if let Expr::Held {
                formula,
                duration_ms,
            } = sub
            {
                match decompose_held(ast, formula) {
                    Ok(lits) => {
                        for l in lits {
                            if !found.contains(&(l.clone(), *duration_ms)) {
                                found.push((l, *duration_ms));
                            }
                        }
                    }
                    Err(err) => {
                        error.get_or_insert(err);
                    }
                }
            }
        });
    }
    if let Some(err) = error {
        return Err(err);
    }

    let mut durations: Vec<u64> = found.iter().map(|(_, d)| *d).collect();
    durations.sort_unstable();
    durations.dedup();

    let mut names: BTreeMap<(Literal, u64), String> = ast
        .predicates
        .iter()
        .map(|p| ((p.literal.clone(), p.duration_ms), p.id.clone()))
        .collect();
    let mut taken: Vec<String> = ast
        .inputs
        .iter()
        .map(|d| d.name.clone())
        .chain(ast.outputs.iter().map(|d| d.name.clone()))
        .chain(ast.state_vars.iter().map(|d| d.name.clone()))
        .chain(ast.predicates.iter().map(|p| p.id.clone()))
        .collect();
    for (lit, d) in &found {
        if names.contains_key(&(lit.clone(), *d)) {
            continue;
        }
        let ty = ast.var_type(&lit.var).unwrap_or(VarType::Bool);
        let value = match (ty, lit.value) {
            (VarType::Bool, 0) => "f".to_string(),
            (VarType::Bool, _) => "t".to_string(),
            (_, v) if v < 0 => format!("m{}", -v),
            (_, v) => v.to_string(),
        };
        let rank = durations.binary_search(d).unwrap_or(0) + 1;
        let base = format!("{}_eq_{}_t{}", lit.var, value, rank);
        let mut id = base.clone();
        let mut n = 2;
        while taken.contains(&id) {
            id = format!("{base}_{n}");
            n += 1;
        }
        taken.push(id.clone());
        names.insert((lit.clone(), *d), id);
    }

    let mut order: Vec<(usize, &(Literal, u64))> = found.iter().enumerate().collect();
    order.sort_by_key(|(i, (_, d))| (*d, *i));
    let predicates: Vec<TemporalPredicateDecl> = order
        .into_iter()
        .map(|(_, (lit, d))| {
            let span = ast
                .predicates
                .iter()
                .find(|p| p.literal == *lit && p.duration_ms == *d)
                .map(|p| p.span)
                .unwrap_or_default();
            TemporalPredicateDecl {
                id: names[&(lit.clone(), *d)].clone(),
                literal: lit.clone(),
                duration_ms: *d,
                span,
            }
        })
        .collect();

    let rewrite = |e: &Expr| -> Expr {
        rewrite_expr(e, &|lit, d| names[&(lit.clone(), d)].clone(), ast)
    };
    let mut model = ast.clone();
    model.body = rewrite_node(&ast.body, &rewrite);
    model.predicates = predicates.clone();
    Ok(Extracted { predicates, model })
}

fn rewrite_node(node: &Node, f: &impl Fn(&Expr) -> Expr) -> Node {
    match node {
        Node::Decision {
            cond,
            then_branch,
            else_branch,
            span,
        } => Node::Decision {
            cond: f(cond),
            then_branch: Box::new(rewrite_node(then_branch, f)),
            else_branch: Box::new(rewrite_node(else_branch, f)),
            span: *span,
        },
        Node::Leaf { assigns, span } => Node::Leaf {
            assigns: assigns
                .iter()
                .map(|a| Assign {
                    target: a.target.clone(),
                    value: f(&a.value),
                    span: a.span,
                })
                .collect(),
            span: *span,
        },
    }
}

/// Rewrites `held()` sub-expressions using `name_of` to map each literal to
/// its predicate id. Formulas must already be known to decompose.
pub(crate) fn rewrite_expr(
    e: &Expr,
    name_of: &impl Fn(&Literal, u64) -> String,
    model: &ModelAst,
) -> Expr {
    match e {
        Expr::Held {
            formula,
            duration_ms,
        } => {
            let lits = decompose_held(model, formula).unwrap_or_default();
            Expr::and_all(
                lits.iter()
                    .map(|l| Expr::Pred(name_of(l, *duration_ms))),
            )
        }
        Expr::Not(a) => Expr::Not(Box::new(rewrite_expr(a, name_of, model))),
        Expr::Neg(a) => Expr::Neg(Box::new(rewrite_expr(a, name_of, model))),
        Expr::Binary(op, a, b) => Expr::Binary(
            *op,
            Box::new(rewrite_expr(a, name_of, model)),
            Box::new(rewrite_expr(b, name_of, model)),
        ),
        other => other.clone(),
    }
}

/// Human-readable `id = (literal, duration)` line.
pub fn describe_predicate(model: &ModelAst, p: &TemporalPredicateDecl) -> String {
    let ty = model.var_type(&p.literal.var).unwrap_or(VarType::Bool);
    format!(
        "{} = ({}, {})",
        p.id,
        expr_to_string(&p.literal.to_expr(ty)),
        format_duration(p.duration_ms)
    )
}
