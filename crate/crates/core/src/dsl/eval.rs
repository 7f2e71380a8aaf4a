use thiserror::Error;

use super::ast::{BinOp, Expr, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("missing binding for `{0}`")]
    MissingBinding(String),
    #[error("held() must be rewritten to predicates before evaluation")]
    UnrewrittenHeld,
    #[error("arithmetic overflow")]
    Overflow,
}

/// Supplies values for the leaves of an expression.
pub trait Env {
    fn var(&self, name: &str) -> Option<Value>;
    fn pred(&self, id: &str) -> Option<bool>;
    /// Direct evaluation of `held()`; unsupported by default.
    fn held(&self, _formula: &Expr, _duration_ms: u64) -> Option<bool> {
        None
    }
}

pub fn truthy(v: Value) -> bool {
    v != 0
}

/// Evaluates with full (non-short-circuit) evaluation of both operands.
pub fn eval<E: Env + ?Sized>(e: &Expr, env: &E) -> Result<Value, EvalError> {
    Ok(match e {
        Expr::Var(name) => env
            .var(name)
            .ok_or_else(|| EvalError::MissingBinding(name.clone()))?,
        Expr::Const(v) => *v,
        Expr::Bool(b) => Value::from(*b),
        Expr::Pred(id) => Value::from(
            env.pred(id)
                .ok_or_else(|| EvalError::MissingBinding(id.clone()))?,
        ),
        Expr::Held {
            formula,
            duration_ms,
        } => Value::from(
            env.held(formula, *duration_ms)
                .ok_or(EvalError::UnrewrittenHeld)?,
        ),
        Expr::Not(a) => Value::from(!truthy(eval(a, env)?)),
        Expr::Neg(a) => eval(a, env)?.checked_neg().ok_or(EvalError::Overflow)?,
        Expr::Binary(op, a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            match op {
                BinOp::And => Value::from(truthy(x) && truthy(y)),
                BinOp::Or => Value::from(truthy(x) || truthy(y)),
                BinOp::Eq => Value::from(x == y),
                BinOp::Ne => Value::from(x != y),
                BinOp::Lt => Value::from(x < y),
                BinOp::Le => Value::from(x <= y),
                BinOp::Gt => Value::from(x > y),
                BinOp::Ge => Value::from(x >= y),
                BinOp::Add => x.checked_add(y).ok_or(EvalError::Overflow)?,
                BinOp::Sub => x.checked_sub(y).ok_or(EvalError::Overflow)?,
            }
        }
    })
}

pub fn eval_bool<E: Env + ?Sized>(e: &Expr, env: &E) -> Result<bool, EvalError> {
    eval(e, env).map(truthy)
}

/// Evaluates a boolean structure given only the truth values of its atoms,
/// in the left-to-right order of [`Expr::atoms`].
pub fn eval_with_atoms(e: &Expr, atoms: &[bool]) -> bool {
    fn go(e: &Expr, atoms: &[bool], next: &mut usize) -> bool {
        match e {
            Expr::Not(a) => !go(a, atoms, next),
            Expr::Binary(BinOp::And, a, b) => {
                let x = go(a, atoms, next);
                let y = go(b, atoms, next);
                x && y
            }
            Expr::Binary(BinOp::Or, a, b) => {
                let x = go(a, atoms, next);
                let y = go(b, atoms, next);
                x || y
            }
            _ => {
                let v = atoms[*next];
                *next += 1;
                v
            }
        }
    }
    let mut next = 0;
    go(e, atoms, &mut next)
}
