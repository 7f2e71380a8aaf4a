use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorKind};

const KEYWORDS: &[&str] = &[
    "model", "input", "output", "state", "pred", "logic", "if", "else", "held", "true", "false",
    "bool", "int", "hidden", "readable",
];

pub fn parse_model(source: &str) -> Result<ModelAst, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        model: ModelAst {
            name: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            state_vars: Vec::new(),
            predicates: Vec::new(),
            body: Node::Leaf {
                assigns: Vec::new(),
                span: Span::default(),
            },
        },
    };
    p.model_decl()?;
    check_outputs_assigned(&p.model)?;
    Ok(p.model)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    model: ModelAst,
}

/// Where an expression appears; decides which names it may read.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Logic,
    HeldFormula,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_tok(&self) -> &Tok {
        &self.peek().tok
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError::syntax(
            t.span,
            format!("unexpected {}", t.tok.describe()),
            expected.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek_tok(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek_tok(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<Span, ParseError> {
        if self.is_punct(p) {
            Ok(self.next().span)
        } else {
            Err(self.unexpected(&[&format!("`{p}`")]))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Span, ParseError> {
        if self.is_keyword(kw) {
            Ok(self.next().span)
        } else {
            Err(self.unexpected(&[&format!("`{kw}`")]))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek_tok().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let span = self.next().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat_punct("-");
        match *self.peek_tok() {
            Tok::Int(v) => {
                self.next();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    fn model_decl(&mut self) -> Result<(), ParseError> {
        self.expect_keyword("model")?;
        let (name, _) = self.ident()?;
        self.model.name = name;
        self.expect_punct("{")?;
        loop {
            match self.peek_tok() {
                Tok::Ident(s) if s == "input" => self.var_decl(true)?,
                Tok::Ident(s) if s == "output" => self.var_decl(false)?,
                Tok::Ident(s) if s == "state" => self.state_decl()?,
                Tok::Ident(s) if s == "pred" => self.pred_decl()?,
                Tok::Ident(s) if s == "logic" => break,
                _ => {
                    return Err(self.unexpected(&[
                        "`input`", "`output`", "`state`", "`pred`", "`logic`",
                    ]))
                }
            }
        }
        self.expect_keyword("logic")?;
        self.model.body = self.block()?;
        self.expect_punct("}")?;
        if !matches!(self.peek_tok(), Tok::Eof) {
            return Err(self.unexpected(&["end of input"]));
        }
        Ok(())
    }

    fn declare(&self, name: &str, span: Span) -> Result<(), ParseError> {
        if self.model.lookup(name).is_some() {
            return Err(ParseError::new(
                span,
                ParseErrorKind::Duplicate(name.to_string()),
            ));
        }
        Ok(())
    }

    fn var_type(&mut self) -> Result<VarType, ParseError> {
        if self.is_keyword("bool") {
            self.next();
            return Ok(VarType::Bool);
        }
        if self.is_keyword("int") {
            let span = self.next().span;
            let lo = self.int()?;
            self.expect_punct("..")?;
            let hi = self.int()?;
            if lo > hi {
                return Err(ParseError::syntax(
                    span,
                    format!("empty range {lo}..{hi}"),
                    vec![],
                ));
            }
            return Ok(VarType::IntRange { lo, hi });
        }
        Err(self.unexpected(&["`bool`", "`int`"]))
    }

    fn var_decl(&mut self, input: bool) -> Result<(), ParseError> {
        self.next();
        let (name, span) = self.ident()?;
        self.declare(&name, span)?;
        self.expect_punct(":")?;
        let ty = self.var_type()?;
        self.expect_punct(";")?;
        let decl = VarDecl { name, ty, span };
        if input {
            self.model.inputs.push(decl);
        } else {
            self.model.outputs.push(decl);
        }
        Ok(())
    }

    fn state_decl(&mut self) -> Result<(), ParseError> {
        self.next();
        let (name, span) = self.ident()?;
        self.declare(&name, span)?;
        self.expect_punct(":")?;
        let ty = self.var_type()?;
        let visibility = if self.is_keyword("hidden") {
            self.next();
            Visibility::Hidden
        } else {
            if self.is_keyword("readable") {
                self.next();
            }
            Visibility::Readable
        };
        let init = if self.eat_punct("=") {
            let at = self.peek().span;
            let v = if self.is_keyword("true") || self.is_keyword("false") {
                i64::from(self.next().tok == Tok::Ident("true".into()))
            } else {
                self.int()?
            };
            if !ty.contains(v) {
                return Err(ParseError::syntax(
                    at,
                    format!("initial value {v} outside {ty}"),
                    vec![],
                ));
            }
            Some(v)
        } else {
            None
        };
        self.expect_punct(";")?;
        self.model.state_vars.push(StateDecl {
            name,
            ty,
            visibility,
            init,
            span,
        });
        Ok(())
    }

    fn pred_decl(&mut self) -> Result<(), ParseError> {
        self.next();
        let (id, span) = self.ident()?;
        self.declare(&id, span)?;
        self.expect_punct("=")?;
        let held_span = self.expect_keyword("held")?;
        self.expect_punct("(")?;
        let formula = self.expr(Ctx::HeldFormula)?;
        self.expect_punct(",")?;
        let duration_ms = self.duration()?;
        self.expect_punct(")")?;
        self.expect_punct(";")?;
        let literal = super::predicates::literal_of(&self.model, &formula).ok_or_else(|| {
            ParseError::new(
                held_span,
                ParseErrorKind::InvalidLiteral(super::print::expr_to_string(&formula)),
            )
        })?;
        self.model.predicates.push(TemporalPredicateDecl {
            id,
            literal,
            duration_ms,
            span,
        });
        Ok(())
    }

    fn duration(&mut self) -> Result<u64, ParseError> {
        match *self.peek_tok() {
            Tok::Duration(ms) => {
                let span = self.next().span;
                if ms == 0 {
                    return Err(ParseError::new(span, ParseErrorKind::ZeroDuration));
                }
                Ok(ms)
            }
            _ => Err(self.unexpected(&["duration such as `60s`"])),
        }
    }

    fn block(&mut self) -> Result<Node, ParseError> {
        let span = self.expect_punct("{")?;
        if self.is_keyword("if") {
            let node = self.if_stmt()?;
            self.expect_punct("}")?;
            return Ok(node);
        }
        let mut assigns = Vec::new();
        let mut seen = HashSet::new();
        while !self.is_punct("}") {
            if self.is_keyword("if") {
                return Err(ParseError::syntax(
                    self.peek().span,
                    "a block holds either one if/else or only assignments",
                    vec!["`}`".into(), "assignment".into()],
                ));
            }
            let assign = self.assign()?;
            if !seen.insert(assign.target.clone()) {
                return Err(ParseError::new(
                    assign.span,
                    ParseErrorKind::Duplicate(assign.target),
                ));
            }
            assigns.push(assign);
        }
        self.next();
        Ok(Node::Leaf { assigns, span })
    }

    fn if_stmt(&mut self) -> Result<Node, ParseError> {
        let span = self.expect_keyword("if")?;
        self.expect_punct("(")?;
        let cond = self.expr(Ctx::Logic)?;
        self.expect_punct(")")?;
        let then_branch = self.block()?;
        self.expect_keyword("else")?;
        let else_branch = if self.is_keyword("if") {
            self.if_stmt()?
        } else {
            self.block()?
        };
        Ok(Node::Decision {
            cond,
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
            span,
        })
    }

    fn assign(&mut self) -> Result<Assign, ParseError> {
        let (target, span) = match self.peek_tok() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => self.ident()?,
            _ => return Err(self.unexpected(&["assignment", "`}`"])),
        };
        match self.model.lookup(&target) {
            Some(Symbol::Output(_)) | Some(Symbol::State(..)) => {}
            Some(_) => {
                return Err(ParseError::syntax(
                    span,
                    format!("`{target}` is not assignable"),
                    vec!["output".into(), "state variable".into()],
                ))
            }
            None => return Err(ParseError::new(span, ParseErrorKind::Undeclared(target))),
        }
        self.expect_punct("=")?;
        let value = self.expr(Ctx::Logic)?;
        self.expect_punct(";")?;
        Ok(Assign {
            target,
            value,
            span,
        })
    }

    fn expr(&mut self, ctx: Ctx) -> Result<Expr, ParseError> {
        self.binary(ctx, 1)
    }

    fn binary_op(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek_tok() else {
            return None;
        };
        Some(match *p {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            _ => return None,
        })
    }

    fn binary(&mut self, ctx: Ctx, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(ctx)?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.next();
            // Comparisons do not chain.
            let next_min = prec + 1;
            let rhs = self.binary(ctx, next_min)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
            if op.is_comparison() && self.binary_op().is_some_and(|o| o.is_comparison()) {
                return Err(self.unexpected(&["`&&`", "`||`", "`)`"]));
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self, ctx: Ctx) -> Result<Expr, ParseError> {
        if self.eat_punct("!") {
            return Ok(Expr::Not(Box::new(self.unary(ctx)?)));
        }
        if self.eat_punct("-") {
            return Ok(Expr::Neg(Box::new(self.unary(ctx)?)));
        }
        self.primary(ctx)
    }

    fn primary(&mut self, ctx: Ctx) -> Result<Expr, ParseError> {
        let token = self.peek().clone();
        match token.tok {
            Tok::Int(v) => {
                self.next();
                Ok(Expr::Const(v))
            }
            Tok::Punct("(") => {
                self.next();
                let e = self.expr(ctx)?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(ref s) if s == "true" || s == "false" => {
                self.next();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(ref s) if s == "held" => {
                if ctx == Ctx::HeldFormula {
                    return Err(ParseError::syntax(
                        token.span,
                        "nested held() is not supported",
                        vec![],
                    ));
                }
                self.next();
                self.expect_punct("(")?;
                let formula = self.expr(Ctx::HeldFormula)?;
                self.expect_punct(",")?;
                let duration_ms = self.duration()?;
                self.expect_punct(")")?;
                Ok(Expr::Held {
                    formula: Box::new(formula),
                    duration_ms,
                })
            }
            Tok::Ident(ref s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                match self.model.lookup(s) {
                    Some(Symbol::Input(_)) | Some(Symbol::State(..)) => Ok(Expr::Var(s.clone())),
                    Some(Symbol::Predicate) if ctx == Ctx::Logic => Ok(Expr::Pred(s.clone())),
                    Some(Symbol::Predicate) => Err(ParseError::syntax(
                        token.span,
                        format!("predicate `{s}` cannot appear inside held()"),
                        vec![],
                    )),
                    Some(Symbol::Output(_)) => Err(ParseError::syntax(
                        token.span,
                        format!("output `{s}` cannot be read"),
                        vec![],
                    )),
                    None => Err(ParseError::new(
                        token.span,
                        ParseErrorKind::Undeclared(s.clone()),
                    )),
                }
            }
            _ => Err(self.unexpected(&[
                "identifier",
                "integer",
                "`true`",
                "`false`",
                "`held`",
                "`(`",
                "`!`",
                "`-`",
            ])),
        }
    }
}

fn check_outputs_assigned(model: &ModelAst) -> Result<(), ParseError> {
    let mut assigned = HashSet::new();
    for (_, assigns) in model.leaves() {
        for a in assigns {
            assigned.insert(a.target.as_str());
        }
    }
    for out in &model.outputs {
        if !assigned.contains(out.name.as_str()) {
            return Err(ParseError::new(
                out.span,
                ParseErrorKind::OutputNeverAssigned(out.name.clone()),
            ));
        }
    }
    Ok(())
}
