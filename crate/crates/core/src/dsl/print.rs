use std::fmt::Write;

use super::ast::*;

pub fn format_duration(ms: u64) -> String {
    if ms % 1000 == 0 {
        format!("{}s", ms / 1000)
    } else {
        format!("{ms}ms")
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    match e {
        Expr::Var(name) | Expr::Pred(name) => out.push_str(name),
        Expr::Const(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Not(inner) => {
            out.push('!');
            write_expr(out, inner, u8::MAX);
        }
        Expr::Neg(inner) => {
            out.push('-');
            write_expr(out, inner, u8::MAX);
        }
        Expr::Held {
            formula,
            duration_ms,
        } => {
            out.push_str("held(");
            write_expr(out, formula, 0);
            let _ = write!(out, ", {})", format_duration(*duration_ms));
        }
        Expr::Binary(op, a, b) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                out.push('(');
            }
            write_expr(out, a, prec);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, b, prec + 1);
            if paren {
                out.push(')');
            }
        }
    }
}

/// Renders a model in canonical concrete syntax; parsing the result yields
/// an equal AST.
pub fn print_model(m: &ModelAst) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {} {{", m.name);
    for d in &m.inputs {
        let _ = writeln!(s, "    input {}: {};", d.name, d.ty);
    }
    for d in &m.outputs {
        let _ = writeln!(s, "    output {}: {};", d.name, d.ty);
    }
    for d in &m.state_vars {
        let vis = match d.visibility {
            Visibility::Readable => "readable",
            Visibility::Hidden => "hidden",
        };
        let _ = write!(s, "    state {}: {} {}", d.name, d.ty, vis);
        if let Some(init) = d.init {
            let _ = write!(s, " = {init}");
        }
        s.push_str(";\n");
    }
    for p in &m.predicates {
        let ty = m.var_type(&p.literal.var).unwrap_or(VarType::Bool);
        let _ = writeln!(
            s,
            "    pred {} = held({}, {});",
            p.id,
            expr_to_string(&p.literal.to_expr(ty)),
            format_duration(p.duration_ms)
        );
    }
    s.push_str("    logic ");
    write_block(&mut s, &m.body, 1);
    s.push_str("\n}\n");
    s
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn write_block(out: &mut String, node: &Node, level: usize) {
    out.push_str("{\n");
    match node {
        Node::Leaf { assigns, .. } => {
            for a in assigns {
                indent(out, level + 1);
                let _ = writeln!(out, "{} = {};", a.target, expr_to_string(&a.value));
            }
        }
        Node::Decision { .. } => {
            indent(out, level + 1);
            write_if(out, node, level + 1);
            out.push('\n');
        }
    }
    indent(out, level);
    out.push('}');
}

fn write_if(out: &mut String, node: &Node, level: usize) {
    if let Node::Decision {
        cond,
        then_branch,
        else_branch,
        ..
    } = node
    {
        let _ = write!(out, "if ({}) ", expr_to_string(cond));
        write_block(out, then_branch, level);
        out.push_str(" else ");
        match else_branch.as_ref() {
            n @ Node::Decision { .. } => write_if(out, n, level),
            leaf => write_block(out, leaf, level),
        }
    }
}
