use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::ast::*;
use super::eval::{eval_bool, Env};
use super::print::expr_to_string;

/// Enumeration cap for the reachability check.
const MAX_VALUATIONS: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    IncompleteOutput { output: String, path: NodeId },
    TypeError { message: String },
    UnreachableLeaf { path: NodeId },
    ReachabilityNotChecked { path: NodeId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    fn new(severity: Severity, span: Span, kind: DiagnosticKind) -> Self {
        Self {
            severity,
            line: span.line,
            col: span.col,
            kind,
        }
    }

    pub fn message(&self) -> String {
        match &self.kind {
            DiagnosticKind::IncompleteOutput { output, path } => {
                format!("output `{output}` is not assigned on path {path}")
            }
            DiagnosticKind::TypeError { message } => message.clone(),
            DiagnosticKind::UnreachableLeaf { path } => {
                format!("leaf {path} is unreachable: its path condition is unsatisfiable")
            }
            DiagnosticKind::ReachabilityNotChecked { path } => {
                format!("reachability of leaf {path} not checked: too many valuations")
            }
        }
    }

    /// `file:line:col: severity: message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{file}:{}:{}: {}: {}",
            self.line,
            self.col,
            self.severity,
            self.message()
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.line,
            self.col,
            self.severity,
            self.message()
        )
    }
}

/// Static checks: output completeness per path, typing, and leaf
/// reachability. An empty result means the model is clean.
pub fn check_model(ast: &ModelAst) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    check_types(ast, &mut diags);
    for (path, node, conds) in paths(ast) {
        let Node::Leaf { assigns, span } = node else {
            continue;
        };
        for out in &ast.outputs {
            if !assigns.iter().any(|a| a.target == out.name) {
                diags.push(Diagnostic::new(
                    Severity::Error,
                    *span,
                    DiagnosticKind::IncompleteOutput {
                        output: out.name.clone(),
                        path: path.clone(),
                    },
                ));
            }
        }
        match satisfiable(ast, &conds) {
            Some(true) => {}
            Some(false) => diags.push(Diagnostic::new(
                Severity::Warning,
                *span,
                DiagnosticKind::UnreachableLeaf { path },
            )),
            None => diags.push(Diagnostic::new(
                Severity::Warning,
                *span,
                DiagnosticKind::ReachabilityNotChecked { path },
            )),
        }
    }
    diags
}

/// Every node with the list of (condition, required outcome) leading to it.
fn paths(ast: &ModelAst) -> Vec<(NodeId, &Node, Vec<(&Expr, bool)>)> {
    fn go<'a>(
        id: NodeId,
        node: &'a Node,
        conds: &mut Vec<(&'a Expr, bool)>,
        out: &mut Vec<(NodeId, &'a Node, Vec<(&'a Expr, bool)>)>,
    ) {
        out.push((id.clone(), node, conds.clone()));
        if let Node::Decision {
            cond,
            then_branch,
            else_branch,
            ..
        } = node
        {
            for (branch, child) in [(true, then_branch), (false, else_branch)] {
                conds.push((cond, branch));
                go(id.child(branch), child, conds, out);
                conds.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(NodeId::root(), &ast.body, &mut Vec::new(), &mut out);
    out
}

struct EnumEnv<'a> {
    vars: &'a HashMap<&'a str, Value>,
    opaque: &'a HashMap<Expr, bool>,
}

impl Env for EnumEnv<'_> {
    fn var(&self, name: &str) -> Option<Value> {
        self.vars.get(name).copied()
    }

    fn pred(&self, id: &str) -> Option<bool> {
        self.opaque.get(&Expr::Pred(id.to_string())).copied()
    }

    fn held(&self, formula: &Expr, duration_ms: u64) -> Option<bool> {
        self.opaque
            .get(&Expr::Held {
                formula: Box::new(formula.clone()),
                duration_ms,
            })
            .copied()
    }
}

/// Exhaustive search over the variables and temporal atoms of `conds`.
/// Temporal atoms are treated as independent booleans. `None` when the
/// search space exceeds the cap.
fn satisfiable(ast: &ModelAst, conds: &[(&Expr, bool)]) -> Option<bool> {
    let mut vars: Vec<(&str, Vec<Value>)> = Vec::new();
    let mut opaque: Vec<Expr> = Vec::new();
    fn collect<'a>(
        ast: &ModelAst,
        e: &'a Expr,
        vars: &mut Vec<(&'a str, Vec<Value>)>,
        opaque: &mut Vec<Expr>,
    ) {
        match e {
            Expr::Var(v) => {
                if !vars.iter().any(|(n, _)| n == v) {
                    let dom = ast.var_type(v).map(|t| t.domain()).unwrap_or_default();
                    vars.push((v.as_str(), dom));
                }
            }
            Expr::Pred(_) | Expr::Held { .. } => {
                if !opaque.contains(e) {
                    opaque.push(e.clone());
                }
            }
            Expr::Not(a) | Expr::Neg(a) => collect(ast, a, vars, opaque),
            Expr::Binary(_, a, b) => {
                collect(ast, a, vars, opaque);
                collect(ast, b, vars, opaque);
            }
            Expr::Const(_) | Expr::Bool(_) => {}
        }
    }
    for (c, _) in conds {
        collect(ast, c, &mut vars, &mut opaque);
    }
    let total = vars
        .iter()
        .try_fold(1u64, |acc, (_, d)| acc.checked_mul(d.len() as u64))?
        .checked_mul(1u64.checked_shl(opaque.len() as u32)?)?;
    if total > MAX_VALUATIONS {
        return None;
    }
    let mut binding: HashMap<&str, Value> = HashMap::new();
    let mut flags: HashMap<Expr, bool> = HashMap::new();
    for i in 0..total {
        let mut rest = i;
        for (name, dom) in &vars {
            let n = dom.len() as u64;
            binding.insert(name, dom[(rest % n) as usize]);
            rest /= n;
        }
        for (k, atom) in opaque.iter().enumerate() {
            flags.insert(atom.clone(), (rest >> k) & 1 == 1);
        }
        let env = EnumEnv {
            vars: &binding,
            opaque: &flags,
        };
        let ok = conds
            .iter()
            .all(|(c, want)| eval_bool(c, &env).map(|v| v == *want).unwrap_or(false));
        if ok {
            return Some(true);
        }
    }
    Some(false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Bool,
    Int,
    /// The constants 0 and 1 fit either.
    Either,
}

impl Ty {
    fn fits_bool(self) -> bool {
        matches!(self, Ty::Bool | Ty::Either)
    }

    fn fits_int(self) -> bool {
        matches!(self, Ty::Int | Ty::Either)
    }
}

fn check_types(ast: &ModelAst, diags: &mut Vec<Diagnostic>) {
    let mut errs = Vec::new();
    ast.walk(|_, node| match node {
        Node::Decision { cond, span, .. } => {
            let mut msgs = Vec::new();
            let t = type_of(ast, cond, &mut msgs);
            if !t.fits_bool() {
                msgs.push(format!(
                    "condition `{}` is an integer, expected bool",
                    expr_to_string(cond)
                ));
            }
            errs.extend(msgs.into_iter().map(|m| (*span, m)));
        }
        Node::Leaf { assigns, .. } => {
            for a in assigns {
                let mut msgs = Vec::new();
                let t = type_of(ast, &a.value, &mut msgs);
                if let Some(target_ty) = ast.var_type(&a.target) {
                    let ok = if target_ty.is_bool() {
                        t.fits_bool()
                    } else {
                        t.fits_int()
                    };
                    if !ok {
                        msgs.push(format!(
                            "cannot assign `{}` to `{}` of type {}",
                            expr_to_string(&a.value),
                            a.target,
                            target_ty
                        ));
                    } else if let Some(v) = const_fold(&a.value) {
                        if !target_ty.contains(v) {
                            msgs.push(format!(
                                "value {v} is outside the type {target_ty} of `{}`",
                                a.target
                            ));
                        }
                    }
                }
                errs.extend(msgs.into_iter().map(|m| (a.span, m)));
            }
        }
    });
    for (span, message) in errs {
        diags.push(Diagnostic::new(
            Severity::Error,
            span,
            DiagnosticKind::TypeError { message },
        ));
    }
}

fn const_fold(e: &Expr) -> Option<Value> {
    struct NoVars;
    impl Env for NoVars {
        fn var(&self, _: &str) -> Option<Value> {
            None
        }
        fn pred(&self, _: &str) -> Option<bool> {
            None
        }
    }
    super::eval::eval(e, &NoVars).ok()
}

fn type_of(ast: &ModelAst, e: &Expr, msgs: &mut Vec<String>) -> Ty {
    let need = |want_bool: bool, t: Ty, sub: &Expr, msgs: &mut Vec<String>| {
        let ok = if want_bool { t.fits_bool() } else { t.fits_int() };
        if !ok {
            msgs.push(format!(
                "`{}` has type {}, expected {}",
                expr_to_string(sub),
                if want_bool { "int" } else { "bool" },
                if want_bool { "bool" } else { "int" }
            ));
        }
    };
    match e {
        Expr::Var(v) => match ast.var_type(v) {
            Some(VarType::Bool) => Ty::Bool,
            Some(_) => Ty::Int,
            None => {
                msgs.push(format!("`{v}` is not a variable"));
                Ty::Either
            }
        },
        Expr::Const(0) | Expr::Const(1) => Ty::Either,
        Expr::Const(_) => Ty::Int,
        Expr::Bool(_) | Expr::Pred(_) => Ty::Bool,
        Expr::Held { formula, .. } => {
            let t = type_of(ast, formula, msgs);
            need(true, t, formula, msgs);
            Ty::Bool
        }
        Expr::Not(a) => {
            let t = type_of(ast, a, msgs);
            need(true, t, a, msgs);
            Ty::Bool
        }
        Expr::Neg(a) => {
            let t = type_of(ast, a, msgs);
            need(false, t, a, msgs);
            Ty::Int
        }
        Expr::Binary(op, a, b) => {
            let (ta, tb) = (type_of(ast, a, msgs), type_of(ast, b, msgs));
            match op {
                BinOp::And | BinOp::Or => {
                    need(true, ta, a, msgs);
                    need(true, tb, b, msgs);
                    Ty::Bool
                }
                BinOp::Eq | BinOp::Ne => {
                    let compatible = ta == tb || ta == Ty::Either || tb == Ty::Either;
                    if !compatible {
                        msgs.push(format!(
                            "cannot compare bool with int in `{}`",
                            expr_to_string(e)
                        ));
                    }
                    Ty::Bool
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    need(false, ta, a, msgs);
                    need(false, tb, b, msgs);
                    Ty::Bool
                }
                BinOp::Add | BinOp::Sub => {
                    need(false, ta, a, msgs);
                    need(false, tb, b, msgs);
                    Ty::Int
                }
            }
        }
    }
}
