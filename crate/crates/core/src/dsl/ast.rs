use std::fmt;

use serde::{Deserialize, Serialize};

/// Every runtime value is an integer; booleans are `0`/`1`.
pub type Value = i64;

/// Source position of a declaration or statement.
///
/// Spans never take part in equality so that a re-parsed model compares equal
/// to the original regardless of formatting.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarType {
    Bool,
    IntRange { lo: Value, hi: Value },
}

impl VarType {
    pub fn contains(&self, v: Value) -> bool {
        match *self {
            VarType::Bool => v == 0 || v == 1,
            VarType::IntRange { lo, hi } => (lo..=hi).contains(&v),
        }
    }

    /// The finite set of admissible values in ascending order.
    pub fn domain(&self) -> Vec<Value> {
        match *self {
            VarType::Bool => vec![0, 1],
            VarType::IntRange { lo, hi } => (lo..=hi).collect(),
        }
    }

    pub fn domain_size(&self) -> u64 {
        match *self {
            VarType::Bool => 2,
            VarType::IntRange { lo, hi } => (hi - lo + 1) as u64,
        }
    }

    pub fn is_bool(&self) -> bool {
        matches!(self, VarType::Bool)
    }
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarType::Bool => f.write_str("bool"),
            VarType::IntRange { lo, hi } => write!(f, "int {lo}..{hi}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Readable,
    Hidden,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub ty: VarType,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDecl {
    pub name: String,
    pub ty: VarType,
    pub visibility: Visibility,
    pub init: Option<Value>,
    #[serde(skip)]
    pub span: Span,
}

impl StateDecl {
    /// Value before the first cycle: explicit initializer or the smallest
    /// admissible value.
    pub fn initial_value(&self) -> Value {
        self.init.unwrap_or_else(|| match self.ty {
            VarType::Bool => 0,
            VarType::IntRange { lo, hi } => {
                if lo <= 0 && 0 <= hi {
                    0
                } else {
                    lo
                }
            }
        })
    }
}

/// A single variable compared against one expected value, e.g. `!move`
/// is `move == 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub var: String,
    pub value: Value,
}

impl Literal {
    pub fn new(var: impl Into<String>, value: Value) -> Self {
        Self {
            var: var.into(),
            value,
        }
    }

    pub fn holds(&self, v: Value) -> bool {
        v == self.value
    }

    /// Renders the literal in source syntax given the type of its variable.
    pub fn to_expr(&self, ty: VarType) -> Expr {
        match (ty, self.value) {
            (VarType::Bool, 1) => Expr::Var(self.var.clone()),
            (VarType::Bool, 0) => Expr::Not(Box::new(Expr::Var(self.var.clone()))),
            _ => Expr::Binary(
                BinOp::Eq,
                Box::new(Expr::Var(self.var.clone())),
                Box::new(Expr::Const(self.value)),
            ),
        }
    }
}

/// A named temporal predicate: `literal` has held continuously for at least
/// `duration_ms`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalPredicateDecl {
    pub id: String,
    pub literal: Literal,
    pub duration_ms: u64,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
        }
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Var(String),
    Const(Value),
    Bool(bool),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `held(formula, duration)`; only present before predicate extraction.
    Held { formula: Box<Expr>, duration_ms: u64 },
    /// Reference to a declared temporal predicate.
    Pred(String),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn pred(id: impl Into<String>) -> Self {
        Expr::Pred(id.into())
    }

    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Self {
        Expr::Binary(BinOp::And, Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Self {
        Expr::Binary(BinOp::Or, Box::new(a), Box::new(b))
    }

    /// Left-associated conjunction; `true` for an empty list.
    pub fn and_all(items: impl IntoIterator<Item = Expr>) -> Self {
        let mut iter = items.into_iter();
        match iter.next() {
            None => Expr::Bool(true),
            Some(first) => iter.fold(first, Expr::and),
        }
    }

    pub fn or_all(items: impl IntoIterator<Item = Expr>) -> Self {
        let mut iter = items.into_iter();
        match iter.next() {
            None => Expr::Bool(false),
            Some(first) => iter.fold(first, Expr::or),
        }
    }

    /// Operands of a (possibly nested) conjunction.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Binary(BinOp::And, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Atomic conditions in left-to-right order: every maximal
    /// subexpression that is not a logical connective.
    pub fn atoms(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Not(inner) => walk(inner, out),
                Expr::Binary(op, a, b) if op.is_logical() => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Names of all variables read by the expression (predicates excluded).
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Not(a) | Expr::Neg(a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Held { formula, .. } => formula.visit(f),
            Expr::Var(_) | Expr::Const(_) | Expr::Bool(_) | Expr::Pred(_) => {}
        }
    }

    pub fn contains_held(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Held { .. }));
        found
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assign {
    pub target: String,
    pub value: Expr,
    #[serde(skip)]
    pub span: Span,
}

/// Binary decision tree; leaves are assignment blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Decision {
        cond: Expr,
        then_branch: Box<Node>,
        else_branch: Box<Node>,
        #[serde(skip)]
        span: Span,
    },
    Leaf {
        assigns: Vec<Assign>,
        #[serde(skip)]
        span: Span,
    },
}

impl Node {
    pub fn span(&self) -> Span {
        match self {
            Node::Decision { span, .. } | Node::Leaf { span, .. } => *span,
        }
    }

    pub fn child(&self, branch: bool) -> Option<&Node> {
        match self {
            Node::Decision {
                then_branch,
                else_branch,
                ..
            } => Some(if branch { then_branch } else { else_branch }),
            Node::Leaf { .. } => None,
        }
    }
}

/// Path from the root: `true` for the then-branch, `false` for else.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct NodeId(pub Vec<bool>);

impl NodeId {
    pub fn root() -> Self {
        NodeId(Vec::new())
    }

    pub fn child(&self, branch: bool) -> Self {
        let mut path = self.0.clone();
        path.push(branch);
        NodeId(path)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_prefix_of(&self, other: &NodeId) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("n")?;
        for &b in &self.0 {
            f.write_str(if b { "t" } else { "e" })?;
        }
        Ok(())
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl std::str::FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let rest = s
            .strip_prefix('n')
            .ok_or_else(|| format!("node id must start with 'n': {s:?}"))?;
        rest.chars()
            .map(|c| match c {
                't' => Ok(true),
                'e' => Ok(false),
                other => Err(format!("invalid branch {other:?} in node id {s:?}")),
            })
            .collect::<Result<_, _>>()
            .map(NodeId)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelAst {
    pub name: String,
    pub inputs: Vec<VarDecl>,
    pub outputs: Vec<VarDecl>,
    pub state_vars: Vec<StateDecl>,
    pub predicates: Vec<TemporalPredicateDecl>,
    pub body: Node,
}

/// What a name refers to in a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symbol {
    Input(VarType),
    Output(VarType),
    State(VarType, Visibility),
    Predicate,
}

impl ModelAst {
    pub fn lookup(&self, name: &str) -> Option<Symbol> {
        if let Some(d) = self.inputs.iter().find(|d| d.name == name) {
            return Some(Symbol::Input(d.ty));
        }
        if let Some(d) = self.outputs.iter().find(|d| d.name == name) {
            return Some(Symbol::Output(d.ty));
        }
        if let Some(d) = self.state_vars.iter().find(|d| d.name == name) {
            return Some(Symbol::State(d.ty, d.visibility));
        }
        if self.predicates.iter().any(|p| p.id == name) {
            return Some(Symbol::Predicate);
        }
        None
    }

    /// Type of an input or state variable.
    pub fn var_type(&self, name: &str) -> Option<VarType> {
        match self.lookup(name)? {
            Symbol::Input(t) | Symbol::Output(t) | Symbol::State(t, _) => Some(t),
            Symbol::Predicate => None,
        }
    }

    pub fn predicate(&self, id: &str) -> Option<&TemporalPredicateDecl> {
        self.predicates.iter().find(|p| p.id == id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        id.0.iter()
            .try_fold(&self.body, |node, &branch| node.child(branch))
    }

    /// Decision nodes in pre-order (then-branch first).
    pub fn decisions(&self) -> Vec<(NodeId, &Expr)> {
        let mut out = Vec::new();
        self.walk(|id, node| {
            if let Node::Decision { cond, .. } = node {
                out.push((id, cond));
            }
        });
        out
    }

    /// Leaves left to right; position `i` is test case `i + 1`.
    pub fn leaves(&self) -> Vec<(NodeId, &[Assign])> {
        let mut out = Vec::new();
        self.walk(|id, node| {
            if let Node::Leaf { assigns, .. } = node {
                out.push((id, assigns.as_slice()));
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, mut f: impl FnMut(NodeId, &'a Node)) {
        fn go<'a>(id: NodeId, node: &'a Node, f: &mut impl FnMut(NodeId, &'a Node)) {
            f(id.clone(), node);
            if let Node::Decision {
                then_branch,
                else_branch,
                ..
            } = node
            {
                go(id.child(true), then_branch, f);
                go(id.child(false), else_branch, f);
            }
        }
        go(NodeId::root(), &self.body, &mut f);
    }

    pub fn readable_state(&self) -> impl Iterator<Item = &StateDecl> {
        self.state_vars
            .iter()
            .filter(|s| s.visibility == Visibility::Readable)
    }

    /// Declared I/O signature exchanged during the mediator handshake.
    pub fn signature(&self) -> Signature {
        Signature {
            model: self.name.clone(),
            inputs: self.inputs.iter().map(|d| d.name.clone()).collect(),
            outputs: self.outputs.iter().map(|d| d.name.clone()).collect(),
            state: self.readable_state().map(|d| d.name.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub model: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub state: Vec<String>,
}
