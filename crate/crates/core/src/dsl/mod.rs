//! The `.ctl` decision-logic language: low-level requirements written as a
//! binary decision tree whose conditions may contain temporal conditions
//! `held(formula, duration)`.
//!
//! ```text
//! model      = "model" IDENT "{" { decl } "logic" block "}" ;
//! decl       = ( "input" | "output" ) IDENT ":" type ";"
//!            | "state" IDENT ":" type [ "readable" | "hidden" ] [ "=" init ] ";"
//!            | "pred" IDENT "=" "held" "(" literal "," DURATION ")" ";" ;
//! type       = "bool" | "int" INT ".." INT ;
//! block      = "{" ( if_stmt | { assign } ) "}" ;
//! if_stmt    = "if" "(" expr ")" block "else" ( block | if_stmt ) ;
//! assign     = IDENT "=" expr ";" ;
//! expr       = and { "||" and } ;
//! and        = cmp { "&&" cmp } ;
//! cmp        = sum [ ( "==" | "!=" | "<" | "<=" | ">" | ">=" ) sum ] ;
//! sum        = unary { ( "+" | "-" ) unary } ;
//! unary      = ( "!" | "-" ) unary | primary ;
//! primary    = INT | "true" | "false" | IDENT
//!            | "held" "(" expr "," DURATION ")" | "(" expr ")" ;
//! literal    = [ "!" ] IDENT | IDENT "==" INT ;
//! DURATION   = INT ( "s" | "ms" ) ;
//! ```
//!
//! Comments use `//` and `/* */`.

mod ast;
mod check;
pub mod eval;
mod lexer;
mod parser;
mod predicates;
mod print;

use std::fmt;

use thiserror::Error;

pub use ast::*;
pub use check::{check_model, Diagnostic, DiagnosticKind, Severity};
pub use parser::parse_model;
pub(crate) use predicates::rewrite_expr;
pub use predicates::{decompose_held, describe_predicate, extract_predicates, ExtractError, Extracted};
pub use print::{expr_to_string, format_duration, print_model};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax { message: String, expected: Vec<String> },
    Duplicate(String),
    Undeclared(String),
    OutputNeverAssigned(String),
    ZeroDuration,
    InvalidLiteral(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub(crate) fn new(span: Span, kind: ParseErrorKind) -> Self {
        Self {
            line: span.line,
            col: span.col,
            kind,
        }
    }

    pub(crate) fn syntax(span: Span, message: impl Into<String>, expected: Vec<String>) -> Self {
        Self::new(
            span,
            ParseErrorKind::Syntax {
                message: message.into(),
                expected,
            },
        )
    }

    pub fn expected(&self) -> &[String] {
        match &self.kind {
            ParseErrorKind::Syntax { expected, .. } => expected,
            _ => &[],
        }
    }

    pub fn message(&self) -> String {
        match &self.kind {
            ParseErrorKind::Syntax { message, expected } => {
                if expected.is_empty() {
                    message.clone()
                } else {
                    format!("{message}; expected one of: {}", expected.join(", "))
                }
            }
            ParseErrorKind::Duplicate(name) => format!("duplicate declaration of `{name}`"),
            ParseErrorKind::Undeclared(name) => format!("reference to undeclared identifier `{name}`"),
            ParseErrorKind::OutputNeverAssigned(name) => format!("output never assigned: `{name}`"),
            ParseErrorKind::ZeroDuration => "duration must be at least 1ms".to_string(),
            ParseErrorKind::InvalidLiteral(text) => {
                format!("`{text}` is not a literal over an input or state variable")
            }
        }
    }

    /// `file:line:col: error: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: error: {}", self.line, self.col, self.message())
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message())
    }
}

#[cfg(test)]
mod tests;
