//! Syntax tree of the subject language.

use serde::{Deserialize, Serialize};

use super::value::Value;

/// Inclusive 1-based line range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub fn new(start: u32, end: u32) -> Span {
        Span { start, end: end.max(start) }
    }

    pub fn line(line: u32) -> Span {
        Span { start: line, end: line }
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn join(self, other: Span) -> Span {
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The comparison that holds exactly when `self` does not (for totally
    /// ordered operands).
    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Const(Value),
    Name(String),
    List(Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Bool(BoolOp, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Slice {
        value: Box<Expr>,
        lower: Option<Box<Expr>>,
        upper: Option<Box<Expr>>,
        step: Option<Box<Expr>>,
    },
    /// Call of a builtin or a top-level function.
    Call(String, Vec<Expr>),
    /// `receiver.method(args)`; only `append` on a variable place, and only
    /// as a whole expression statement.
    Method(Box<Expr>, String, Vec<Expr>),
    ListComp {
        element: Box<Expr>,
        var: String,
        iter: Box<Expr>,
        cond: Option<Box<Expr>>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }

    /// Visits this expression and all sub-expressions, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Const(_) | ExprKind::Name(_) => {}
            ExprKind::List(items) | ExprKind::Call(_, items) => items.iter().for_each(|e| e.walk(f)),
            ExprKind::Unary(_, e) => e.walk(f),
            ExprKind::Binary(_, a, b) | ExprKind::Compare(_, a, b) | ExprKind::Bool(_, a, b) | ExprKind::Index(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Slice { value, lower, upper, step } => {
                value.walk(f);
                for e in [lower, upper, step].into_iter().flatten() {
                    e.walk(f);
                }
            }
            ExprKind::Method(recv, _, args) => {
                recv.walk(f);
                args.iter().for_each(|e| e.walk(f));
            }
            ExprKind::ListComp { element, iter, cond, .. } => {
                element.walk(f);
                iter.walk(f);
                if let Some(c) = cond {
                    c.walk(f);
                }
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Const(_) | ExprKind::Name(_) => {}
            ExprKind::List(items) | ExprKind::Call(_, items) => items.iter_mut().for_each(|e| e.walk_mut(f)),
            ExprKind::Unary(_, e) => e.walk_mut(f),
            ExprKind::Binary(_, a, b) | ExprKind::Compare(_, a, b) | ExprKind::Bool(_, a, b) | ExprKind::Index(a, b) => {
                a.walk_mut(f);
                b.walk_mut(f);
            }
            ExprKind::Slice { value, lower, upper, step } => {
                value.walk_mut(f);
                for e in [lower, upper, step].into_iter().flatten() {
                    e.walk_mut(f);
                }
            }
            ExprKind::Method(recv, _, args) => {
                recv.walk_mut(f);
                args.iter_mut().for_each(|e| e.walk_mut(f));
            }
            ExprKind::ListComp { element, iter, cond, .. } => {
                element.walk_mut(f);
                iter.walk_mut(f);
                if let Some(c) = cond {
                    c.walk_mut(f);
                }
            }
        }
    }

    /// Free variable names read by this expression (comprehension variables
    /// excluded inside their comprehension).
    pub fn reads(&self, out: &mut Vec<String>) {
        match &self.kind {
            ExprKind::Name(n) => {
                if !out.contains(n) {
                    out.push(n.clone())
                }
            }
            ExprKind::ListComp { element, var, iter, cond } => {
                iter.reads(out);
                let mut inner = Vec::new();
                element.reads(&mut inner);
                if let Some(c) = cond {
                    c.reads(&mut inner);
                }
                for n in inner {
                    if &n != var && !out.contains(&n) {
                        out.push(n);
                    }
                }
            }
            ExprKind::Const(_) => {}
            ExprKind::List(items) | ExprKind::Call(_, items) => items.iter().for_each(|e| e.reads(out)),
            ExprKind::Unary(_, e) => e.reads(out),
            ExprKind::Binary(_, a, b) | ExprKind::Compare(_, a, b) | ExprKind::Bool(_, a, b) | ExprKind::Index(a, b) => {
                a.reads(out);
                b.reads(out);
            }
            ExprKind::Slice { value, lower, upper, step } => {
                value.reads(out);
                for e in [lower, upper, step].into_iter().flatten() {
                    e.reads(out);
                }
            }
            ExprKind::Method(recv, _, args) => {
                recv.reads(out);
                args.iter().for_each(|e| e.reads(out));
            }
        }
    }

    pub fn calls_user_function(&self, is_user: &dyn Fn(&str) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let ExprKind::Call(name, _) = &e.kind {
                if is_user(name) {
                    found = true;
                }
            }
        });
        found
    }
}

/// Assignment target: a variable, optionally indexed (`grid[i][j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub name: String,
    pub indices: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Assign {
        target: Target,
        value: Expr,
    },
    AugAssign {
        target: Target,
        op: BinOp,
        value: Expr,
    },
    If {
        cond: Expr,
        body: Vec<Stmt>,
        orelse: Else,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
        /// Lines of the `for ... :` header.
        header: Span,
    },
    Break,
    Continue,
    Return(Option<Expr>),
    Pass,
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Else {
    None,
    /// An `elif` clause; the boxed statement is always `StmtKind::If`.
    Elif(Box<Stmt>),
    Block(Vec<Stmt>),
}

impl Stmt {
    pub fn is_compound(&self) -> bool {
        matches!(self.kind, StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. })
    }

    /// Lines a trace step for this statement reports: the header (condition)
    /// for compound statements, the whole statement otherwise.
    pub fn step_span(&self) -> Span {
        match &self.kind {
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond.span,
            StmtKind::For { header, .. } => *header,
            _ => self.span,
        }
    }

    /// Variables written by a simple statement.
    pub fn writes(&self) -> Vec<String> {
        match &self.kind {
            StmtKind::Assign { target, .. } | StmtKind::AugAssign { target, .. } => vec![target.name.clone()],
            StmtKind::Expr(Expr { kind: ExprKind::Method(recv, _, _), .. }) => match place_root(recv) {
                Some(n) => vec![n.to_string()],
                None => vec![],
            },
            StmtKind::For { var, .. } => vec![var.clone()],
            _ => vec![],
        }
    }

    /// Variables read by a simple statement (indexed targets and augmented
    /// assignments read their own variable too).
    pub fn reads(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.kind {
            StmtKind::Assign { target, value } => {
                value.reads(&mut out);
                if !target.indices.is_empty() {
                    out.push(target.name.clone());
                }
                target.indices.iter().for_each(|e| e.reads(&mut out));
            }
            StmtKind::AugAssign { target, value, .. } => {
                value.reads(&mut out);
                out.push(target.name.clone());
                target.indices.iter().for_each(|e| e.reads(&mut out));
            }
            StmtKind::Expr(e) => e.reads(&mut out),
            StmtKind::Return(Some(e)) => e.reads(&mut out),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond.reads(&mut out),
            StmtKind::For { iter, .. } => iter.reads(&mut out),
            _ => {}
        }
        out.sort();
        out.dedup();
        out
    }
}

/// Root variable of a place expression (`a`, `a[i]`, `a[i][j]`).
pub fn place_root(expr: &Expr) -> Option<&str> {
    match &expr.kind {
        ExprKind::Name(n) => Some(n),
        ExprKind::Index(base, _) => place_root(base),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    /// From the `def` line to the last body line.
    pub span: Span,
}

impl FunctionDef {
    /// Every variable the function can bind: parameters, assignment and loop
    /// targets. Comprehension variables are local to their expression and
    /// excluded.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = self.params.clone();
        visit_stmts(&self.body, &mut |s| {
            for w in s.writes() {
                if !out.contains(&w) {
                    out.push(w);
                }
            }
        });
        out
    }
}

/// Pre-order traversal over nested statement lists.
pub fn visit_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { body, orelse, .. } => {
                visit_stmts(body, f);
                match orelse {
                    Else::None => {}
                    Else::Elif(s) => visit_stmts(std::slice::from_ref(s.as_ref()), f),
                    Else::Block(b) => visit_stmts(b, f),
                }
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => visit_stmts(body, f),
            _ => {}
        }
    }
}

pub fn visit_stmts_mut(stmts: &mut [Stmt], f: &mut dyn FnMut(&mut Stmt)) {
    for s in stmts.iter_mut() {
        f(s);
        match &mut s.kind {
            StmtKind::If { body, orelse, .. } => {
                visit_stmts_mut(body, f);
                match orelse {
                    Else::None => {}
                    Else::Elif(s) => visit_stmts_mut(std::slice::from_mut(s.as_mut()), f),
                    Else::Block(b) => visit_stmts_mut(b, f),
                }
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => visit_stmts_mut(body, f),
            _ => {}
        }
    }
}

/// A parsed program: an ordered list of top-level functions plus the source
/// they came from. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct AstUnit {
    pub functions: Vec<FunctionDef>,
    pub source: String,
}

impl AstUnit {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn has_function(&self, name: &str) -> bool {
        self.function(name).is_some()
    }

    /// Source text of the given line range, trimmed and joined with spaces.
    pub fn excerpt(&self, span: Span) -> String {
        self.source
            .lines()
            .skip(span.start.saturating_sub(1) as usize)
            .take(span.len() as usize)
            .map(str::trim)
            .collect::<Vec<_>>()
            .join(" ")
    }
}
