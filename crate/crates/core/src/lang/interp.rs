//! Deterministic tree-walking interpreter.
//!
//! The interpreter is the ground truth for everything else: it decides
//! benchmark tests, produces oracle traces, and re-evaluates conditions and
//! statements when traces are inspected. Execution of the entry function can
//! be observed step by step through [`ExecObserver`]; one step is one visit
//! of a statement, branch condition, loop head or return in that frame.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::builtins::{call_builtin, iterate};
use super::value::Value;

/// Variable bindings of one frame.
pub type Env = BTreeMap<String, Value>;

pub const DEFAULT_STEP_BUDGET: u64 = 100_000;
const MAX_CALL_DEPTH: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    TypeError,
    ValueError,
    ZeroDivisionError,
    IndexError,
    NameError,
    OverflowError,
    RecursionError,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub message: String,
    /// Line of the statement being executed; 0 when not yet attributed.
    pub line: u32,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (line {})", self.kind, self.message, self.line)
    }
}

impl std::error::Error for RuntimeError {}

/// Why evaluation stopped early.
#[derive(Clone, Debug, PartialEq)]
pub enum Fault {
    Error(RuntimeError),
    Budget,
}

impl Fault {
    pub fn error(kind: ErrorKind, message: impl Into<String>) -> Fault {
        Fault::Error(RuntimeError { kind, message: message.into(), line: 0 })
    }

    fn at_line(self, line: u32) -> Fault {
        match self {
            Fault::Error(mut e) if e.line == 0 => {
                e.line = line;
                Fault::Error(e)
            }
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalStatus {
    Returned(Value),
    RuntimeError(RuntimeError),
    StepBudgetExceeded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub status: EvalStatus,
    pub steps_executed: u64,
}

impl EvalOutcome {
    pub fn returned(&self) -> Option<&Value> {
        match &self.status {
            EvalStatus::Returned(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Statement,
    Branch,
    LoopHead,
    Return,
    Error,
}

/// One observed step of the entry frame.
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// 1-based step counter.
    pub index: usize,
    pub line: u32,
    pub kind: StepKind,
    pub decision: Option<bool>,
    /// Bindings after the step.
    pub env: &'a Env,
    pub returned: Option<&'a Value>,
    pub error: Option<&'a Fault>,
}

/// Hooks into execution of the entry frame.
pub trait ExecObserver {
    /// Chooses the decision taken at an `if`/`elif`/`while` condition.
    fn decide(&mut self, _index: usize, _line: u32, actual: bool) -> bool {
        actual
    }

    /// May rewrite the bindings produced by a simple statement.
    fn adjust(&mut self, _index: usize, _line: u32, _pre: &Env, _post: &mut Env) {}

    fn step(&mut self, event: StepEvent<'_>);
}

pub(crate) struct Machine<'p> {
    unit: &'p AstUnit,
    budget: u64,
    steps: u64,
    depth: u32,
    trace_index: usize,
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

type Obs<'a, 'b> = Option<&'a mut (dyn ExecObserver + 'b)>;

impl<'p> Machine<'p> {
    pub(crate) fn new(unit: &'p AstUnit, budget: u64) -> Self {
        Machine { unit, budget, steps: 0, depth: 0, trace_index: 0 }
    }

    fn tick(&mut self, n: u64) -> Result<(), Fault> {
        if self.steps + n > self.budget {
            self.steps = self.budget;
            return Err(Fault::Budget);
        }
        self.steps += n;
        Ok(())
    }

    pub(crate) fn call_function<'b>(&mut self, name: &str, args: Vec<Value>, obs: Obs<'_, 'b>) -> Result<Value, Fault> {
        let Some(func) = self.unit.function(name) else {
            return Err(Fault::error(ErrorKind::NameError, format!("name '{name}' is not defined")));
        };
        if func.params.len() != args.len() {
            return Err(Fault::error(
                ErrorKind::TypeError,
                format!("{}() takes {} positional arguments but {} were given", name, func.params.len(), args.len()),
            ));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Fault::error(ErrorKind::RecursionError, "maximum recursion depth exceeded"));
        }
        self.depth += 1;
        let mut env: Env = func.params.iter().cloned().zip(args).collect();
        let result = self.exec_block(&func.body, &mut env, obs);
        self.depth -= 1;
        match result? {
            Flow::Return(v) => Ok(v),
            _ => Ok(Value::None),
        }
    }

    fn exec_block<'b>(&mut self, stmts: &[Stmt], env: &mut Env, mut obs: Obs<'_, 'b>) -> Result<Flow, Fault> {
        for stmt in stmts {
            let flow = self.exec_stmt(stmt, env, obs.as_deref_mut())?;
            if !matches!(flow, Flow::Normal) {
                return Ok(flow);
            }
        }
        Ok(Flow::Normal)
    }

    fn next_index(&mut self) -> usize {
        self.trace_index += 1;
        self.trace_index
    }

    fn report_error<'b>(&mut self, line: u32, env: &Env, fault: &Fault, obs: &mut Obs<'_, 'b>) {
        if let Some(o) = obs.as_deref_mut() {
            let index = self.next_index();
            o.step(StepEvent { index, line, kind: StepKind::Error, decision: None, env, returned: None, error: Some(fault) });
        }
    }

    fn exec_stmt<'b>(&mut self, stmt: &Stmt, env: &mut Env, mut obs: Obs<'_, 'b>) -> Result<Flow, Fault> {
        let line = stmt.step_span().start;
        if let Err(f) = self.tick(1) {
            self.report_error(line, env, &f, &mut obs);
            return Err(f);
        }
        match &stmt.kind {
            StmtKind::If { cond, body, orelse } => {
                let actual = match self.eval(cond, env) {
                    Ok(v) => v.truthy(),
                    Err(f) => {
                        let f = f.at_line(line);
                        self.report_error(line, env, &f, &mut obs);
                        return Err(f);
                    }
                };
                let mut decision = actual;
                if let Some(o) = obs.as_deref_mut() {
                    let index = self.next_index();
                    decision = o.decide(index, line, actual);
                    o.step(StepEvent { index, line, kind: StepKind::Branch, decision: Some(decision), env, returned: None, error: None });
                }
                if decision {
                    self.exec_block(body, env, obs)
                } else {
                    match orelse {
                        Else::None => Ok(Flow::Normal),
                        Else::Elif(inner) => self.exec_stmt(inner, env, obs),
                        Else::Block(block) => self.exec_block(block, env, obs),
                    }
                }
            }
            StmtKind::While { cond, body } => {
                let mut first = true;
                loop {
                    if !first {
                        if let Err(f) = self.tick(1) {
                            self.report_error(line, env, &f, &mut obs);
                            return Err(f);
                        }
                    }
                    first = false;
                    let actual = match self.eval(cond, env) {
                        Ok(v) => v.truthy(),
                        Err(f) => {
                            let f = f.at_line(line);
                            self.report_error(line, env, &f, &mut obs);
                            return Err(f);
                        }
                    };
                    let mut decision = actual;
                    if let Some(o) = obs.as_deref_mut() {
                        let index = self.next_index();
                        decision = o.decide(index, line, actual);
                        o.step(StepEvent {
                            index,
                            line,
                            kind: StepKind::LoopHead,
                            decision: Some(decision),
                            env,
                            returned: None,
                            error: None,
                        });
                    }
                    if !decision {
                        return Ok(Flow::Normal);
                    }
                    match self.exec_block(body, env, obs.as_deref_mut())? {
                        Flow::Break => return Ok(Flow::Normal),
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                }
            }
            StmtKind::For { var, iter, body, .. } => {
                let items = match self.eval(iter, env).and_then(|v| iterate(&v)) {
                    Ok(items) => items,
                    Err(f) => {
                        let f = f.at_line(line);
                        self.report_error(line, env, &f, &mut obs);
                        return Err(f);
                    }
                };
                let mut pos = 0;
                loop {
                    if pos > 0 {
                        if let Err(f) = self.tick(1) {
                            self.report_error(line, env, &f, &mut obs);
                            return Err(f);
                        }
                    }
                    let has_next = pos < items.len();
                    if has_next {
                        env.insert(var.clone(), items[pos].clone());
                    }
                    if let Some(o) = obs.as_deref_mut() {
                        let index = self.next_index();
                        o.step(StepEvent {
                            index,
                            line,
                            kind: StepKind::LoopHead,
                            decision: Some(has_next),
                            env,
                            returned: None,
                            error: None,
                        });
                    }
                    if !has_next {
                        return Ok(Flow::Normal);
                    }
                    pos += 1;
                    match self.exec_block(body, env, obs.as_deref_mut())? {
                        Flow::Break => return Ok(Flow::Normal),
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                }
            }
            StmtKind::Return(expr) => {
                let value = match expr {
                    Some(e) => match self.eval(e, env) {
                        Ok(v) => v,
                        Err(f) => {
                            let f = f.at_line(line);
                            self.report_error(line, env, &f, &mut obs);
                            return Err(f);
                        }
                    },
                    None => Value::None,
                };
                if let Some(o) = obs.as_deref_mut() {
                    let index = self.next_index();
                    o.step(StepEvent {
                        index,
                        line,
                        kind: StepKind::Return,
                        decision: None,
                        env,
                        returned: Some(&value),
                        error: None,
                    });
                }
                Ok(Flow::Return(value))
            }
            _ => {
                let pre = obs.as_ref().map(|_| env.clone());
                if let Err(f) = self.exec_simple(stmt, env) {
                    let f = f.at_line(line);
                    let pre_env = pre.as_ref().unwrap_or(env);
                    if let Some(o) = obs.as_deref_mut() {
                        let index = self.next_index();
                        o.step(StepEvent {
                            index,
                            line,
                            kind: StepKind::Error,
                            decision: None,
                            env: pre_env,
                            returned: None,
                            error: Some(&f),
                        });
                    }
                    return Err(f);
                }
                if let Some(o) = obs {
                    let index = self.next_index();
                    o.adjust(index, line, pre.as_ref().expect("pre cloned when observed"), env);
                    o.step(StepEvent { index, line, kind: StepKind::Statement, decision: None, env, returned: None, error: None });
                }
                Ok(match stmt.kind {
                    StmtKind::Break => Flow::Break,
                    StmtKind::Continue => Flow::Continue,
                    _ => Flow::Normal,
                })
            }
        }
    }

    /// Executes a non-compound, non-return statement against `env`.
    pub(crate) fn exec_simple(&mut self, stmt: &Stmt, env: &mut Env) -> Result<(), Fault> {
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let v = self.eval(value, env)?;
                self.store(target, env, |_| Ok(v))
            }
            StmtKind::AugAssign { target, op, value } => {
                let rhs = self.eval(value, env)?;
                let op = *op;
                self.store(target, env, |old| match old {
                    Some(old) => arith(op, old, &rhs),
                    None => Err(Fault::error(
                        ErrorKind::NameError,
                        format!("name '{}' is not defined", target.name),
                    )),
                })
            }
            StmtKind::Expr(Expr { kind: ExprKind::Method(recv, method, args), .. }) => {
                debug_assert_eq!(method, "append");
                let arg = self.eval(&args[0], env)?;
                let (name, indices) = place_of(recv).ok_or_else(|| Fault::error(ErrorKind::TypeError, "invalid append target"))?;
                let target = Target { name: name.to_string(), indices };
                self.store(&target, env, |old| match old {
                    Some(Value::List(items)) => {
                        let mut items = items.clone();
                        Arc::make_mut(&mut items).push(arg);
                        Ok(Value::List(items))
                    }
                    Some(other) => Err(Fault::error(
                        ErrorKind::TypeError,
                        format!("'{}' object has no attribute 'append'", other.type_name()),
                    )),
                    None => Err(Fault::error(ErrorKind::NameError, format!("name '{}' is not defined", target.name))),
                })
            }
            StmtKind::Expr(e) => self.eval(e, env).map(|_| ()),
            StmtKind::Pass | StmtKind::Break | StmtKind::Continue => Ok(()),
            StmtKind::Return(_) | StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. } => {
                Err(Fault::error(ErrorKind::TypeError, "not a simple statement"))
            }
        }
    }

    /// Writes to a (possibly indexed) target. `update` receives the current
    /// value at the place and returns the new one.
    fn store(
        &mut self,
        target: &Target,
        env: &mut Env,
        update: impl FnOnce(Option<&Value>) -> Result<Value, Fault>,
    ) -> Result<(), Fault> {
        if target.indices.is_empty() {
            let new = update(env.get(&target.name))?;
            env.insert(target.name.clone(), new);
            return Ok(());
        }
        let indices: Vec<Value> = target.indices.iter().map(|e| self.eval(e, env)).collect::<Result<_, _>>()?;
        let Some(root) = env.get_mut(&target.name) else {
            return Err(Fault::error(ErrorKind::NameError, format!("name '{}' is not defined", target.name)));
        };
        let mut slot = root;
        for idx in &indices {
            let Value::List(items) = slot else {
                return Err(Fault::error(
                    ErrorKind::TypeError,
                    format!("'{}' object does not support item assignment", slot.type_name()),
                ));
            };
            let len = items.len();
            let pos = normalize_index(idx, len)?;
            slot = &mut Arc::make_mut(items)[pos];
        }
        let new = update(Some(slot))?;
        *slot = new;
        Ok(())
    }

    pub(crate) fn eval(&mut self, expr: &Expr, env: &Env) -> Result<Value, Fault> {
        match &expr.kind {
            ExprKind::Const(v) => Ok(v.clone()),
            ExprKind::Name(n) => env
                .get(n)
                .cloned()
                .ok_or_else(|| Fault::error(ErrorKind::NameError, format!("name '{n}' is not defined"))),
            ExprKind::List(items) => {
                let vals = items.iter().map(|e| self.eval(e, env)).collect::<Result<Vec<_>, _>>()?;
                Ok(Value::list(vals))
            }
            ExprKind::Unary(UnaryOp::Not, e) => Ok(Value::Bool(!self.eval(e, env)?.truthy())),
            ExprKind::Unary(UnaryOp::Neg, e) => match self.eval(e, env)? {
                Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
                Value::Bool(b) => Ok(Value::Int(-(b as i64))),
                Value::Float(f) => Ok(Value::Float(-f)),
                other => Err(Fault::error(ErrorKind::TypeError, format!("bad operand type for unary -: '{}'", other.type_name()))),
            },
            ExprKind::Binary(op, a, b) => {
                let a = self.eval(a, env)?;
                let b = self.eval(b, env)?;
                if matches!(op, BinOp::Mul) {
                    if let Some(n) = repeat_count(&a, &b) {
                        self.tick(n)?;
                    }
                }
                arith(*op, &a, &b)
            }
            ExprKind::Compare(op, a, b) => {
                let a = self.eval(a, env)?;
                let b = self.eval(b, env)?;
                compare_op(*op, &a, &b).map(Value::Bool)
            }
            ExprKind::Bool(op, a, b) => {
                let left = self.eval(a, env)?;
                match (op, left.truthy()) {
                    (BoolOp::And, false) | (BoolOp::Or, true) => Ok(left),
                    _ => self.eval(b, env),
                }
            }
            ExprKind::Index(base, idx) => {
                let base = self.eval(base, env)?;
                let idx = self.eval(idx, env)?;
                index_value(&base, &idx)
            }
            ExprKind::Slice { value, lower, upper, step } => {
                let base = self.eval(value, env)?;
                let mut bound = |e: &Option<Box<Expr>>| -> Result<Option<i64>, Fault> {
                    match e {
                        None => Ok(None),
                        Some(e) => match self.eval(e, env)? {
                            Value::None => Ok(None),
                            v => v.as_int().map(Some).ok_or_else(|| {
                                Fault::error(ErrorKind::TypeError, "slice indices must be integers or None")
                            }),
                        },
                    }
                };
                let (lo, hi, st) = (bound(lower)?, bound(upper)?, bound(step)?);
                slice_value(&base, lo, hi, st)
            }
            ExprKind::Call(name, args) => {
                let vals = args.iter().map(|e| self.eval(e, env)).collect::<Result<Vec<_>, _>>()?;
                if self.unit.has_function(name) {
                    self.call_function(name, vals, None)
                } else {
                    let mut charge = |n: u64| self.tick(n);
                    call_builtin(name, vals, &mut charge)
                }
            }
            ExprKind::Method(..) => Err(Fault::error(ErrorKind::TypeError, "mutating call in expression context")),
            ExprKind::ListComp { element, var, iter, cond } => {
                let items = iterate(&self.eval(iter, env)?)?;
                let mut scope = env.clone();
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    self.tick(1)?;
                    scope.insert(var.clone(), item);
                    if let Some(c) = cond {
                        if !self.eval(c, &scope)?.truthy() {
                            continue;
                        }
                    }
                    out.push(self.eval(element, &scope)?);
                }
                Ok(Value::list(out))
            }
        }
    }
}

fn place_of(expr: &Expr) -> Option<(&str, Vec<Expr>)> {
    match &expr.kind {
        ExprKind::Name(n) => Some((n, vec![])),
        ExprKind::Index(base, idx) => {
            let (n, mut indices) = place_of(base)?;
            indices.push((**idx).clone());
            Some((n, indices))
        }
        _ => None,
    }
}

fn overflow() -> Fault {
    Fault::error(ErrorKind::OverflowError, "integer overflow")
}

fn repeat_count(a: &Value, b: &Value) -> Option<u64> {
    match (a, b) {
        (Value::List(_) | Value::Str(_), n) | (n, Value::List(_) | Value::Str(_)) => {
            let len = match (a, b) {
                (Value::List(l), _) | (_, Value::List(l)) => l.len() as u64,
                (Value::Str(s), _) | (_, Value::Str(s)) => s.len() as u64,
                _ => 0,
            };
            n.as_int().map(|k| (k.max(0) as u64).saturating_mul(len.max(1)))
        }
        _ => None,
    }
}

fn type_error_binop(op: BinOp, a: &Value, b: &Value) -> Fault {
    Fault::error(
        ErrorKind::TypeError,
        format!("unsupported operand type(s) for {}: '{}' and '{}'", op.symbol(), a.type_name(), b.type_name()),
    )
}

fn py_floordiv(a: i64, b: i64) -> Option<i64> {
    let q = a.checked_div(b)?;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q.checked_sub(1)
    } else {
        Some(q)
    }
}

fn py_mod(a: i64, b: i64) -> Option<i64> {
    let r = a.checked_rem(b)?;
    if r != 0 && ((r < 0) != (b < 0)) {
        Some(r + b)
    } else {
        Some(r)
    }
}

fn py_fmod(a: f64, b: f64) -> f64 {
    let r = a % b;
    if r != 0.0 && ((r < 0.0) != (b < 0.0)) {
        r + b
    } else {
        r
    }
}

/// Binary arithmetic with the subject language's semantics.
pub fn arith(op: BinOp, a: &Value, b: &Value) -> Result<Value, Fault> {
    let zero_div = || Fault::error(ErrorKind::ZeroDivisionError, "division by zero");
    match (op, a, b) {
        (BinOp::Add, Value::Str(x), Value::Str(y)) => return Ok(Value::Str(format!("{x}{y}"))),
        (BinOp::Add, Value::List(x), Value::List(y)) => {
            let mut out = x.as_ref().clone();
            out.extend(y.iter().cloned());
            return Ok(Value::list(out));
        }
        (BinOp::Mul, Value::Str(s), n) | (BinOp::Mul, n, Value::Str(s)) if n.as_int().is_some() => {
            let k = n.as_int().unwrap().max(0) as usize;
            return Ok(Value::Str(s.repeat(k)));
        }
        (BinOp::Mul, Value::List(l), n) | (BinOp::Mul, n, Value::List(l)) if n.as_int().is_some() => {
            let k = n.as_int().unwrap().max(0) as usize;
            let mut out = Vec::with_capacity(l.len() * k);
            for _ in 0..k {
                out.extend(l.iter().cloned());
            }
            return Ok(Value::list(out));
        }
        _ => {}
    }
    if let (Some(x), Some(y)) = (a.as_int(), b.as_int()) {
        return match op {
            BinOp::Add => x.checked_add(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Sub => x.checked_sub(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Mul => x.checked_mul(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Div => {
                if y == 0 {
                    Err(zero_div())
                } else {
                    Ok(Value::Float(x as f64 / y as f64))
                }
            }
            BinOp::FloorDiv => {
                if y == 0 {
                    Err(zero_div())
                } else {
                    py_floordiv(x, y).map(Value::Int).ok_or_else(overflow)
                }
            }
            BinOp::Mod => {
                if y == 0 {
                    Err(Fault::error(ErrorKind::ZeroDivisionError, "integer modulo by zero"))
                } else {
                    py_mod(x, y).map(Value::Int).ok_or_else(overflow)
                }
            }
            BinOp::Pow => {
                if y >= 0 {
                    let e = u32::try_from(y).map_err(|_| overflow())?;
                    x.checked_pow(e).map(Value::Int).ok_or_else(overflow)
                } else if x == 0 {
                    Err(Fault::error(ErrorKind::ZeroDivisionError, "0 cannot be raised to a negative power"))
                } else {
                    Ok(Value::Float((x as f64).powf(y as f64)))
                }
            }
        };
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Err(type_error_binop(op, a, b));
    };
    let r = match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err(Fault::error(ErrorKind::ZeroDivisionError, "float division by zero"));
            }
            x / y
        }
        BinOp::FloorDiv => {
            if y == 0.0 {
                return Err(Fault::error(ErrorKind::ZeroDivisionError, "float floor division by zero"));
            }
            ((x - py_fmod(x, y)) / y).round()
        }
        BinOp::Mod => {
            if y == 0.0 {
                return Err(Fault::error(ErrorKind::ZeroDivisionError, "float modulo"));
            }
            py_fmod(x, y)
        }
        BinOp::Pow => {
            if x == 0.0 && y < 0.0 {
                return Err(Fault::error(ErrorKind::ZeroDivisionError, "0.0 cannot be raised to a negative power"));
            }
            let r = x.powf(y);
            if r.is_nan() && !x.is_nan() && !y.is_nan() {
                return Err(Fault::error(ErrorKind::ValueError, "math domain error"));
            }
            r
        }
    };
    Ok(Value::Float(r))
}

pub fn compare_op(op: CmpOp, a: &Value, b: &Value) -> Result<bool, Fault> {
    match op {
        CmpOp::Eq => Ok(a.lang_eq(b)),
        CmpOp::Ne => Ok(!a.lang_eq(b)),
        _ => {
            let ord = match a.lang_cmp(b) {
                Some(o) => o,
                None if a.as_f64().is_some() && b.as_f64().is_some() => return Ok(false),
                None => {
                    return Err(Fault::error(
                        ErrorKind::TypeError,
                        format!(
                            "'{}' not supported between instances of '{}' and '{}'",
                            op.symbol(),
                            a.type_name(),
                            b.type_name()
                        ),
                    ))
                }
            };
            Ok(match op {
                CmpOp::Lt => ord.is_lt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Ge => ord.is_ge(),
                CmpOp::Eq | CmpOp::Ne => unreachable!(),
            })
        }
    }
}

fn normalize_index(idx: &Value, len: usize) -> Result<usize, Fault> {
    let Some(i) = idx.as_int() else {
        return Err(Fault::error(
            ErrorKind::TypeError,
            format!("indices must be integers, not {}", idx.type_name()),
        ));
    };
    let pos = if i < 0 { i + len as i64 } else { i };
    if pos < 0 || pos >= len as i64 {
        return Err(Fault::error(ErrorKind::IndexError, "index out of range"));
    }
    Ok(pos as usize)
}

fn index_value(base: &Value, idx: &Value) -> Result<Value, Fault> {
    match base {
        Value::List(items) => Ok(items[normalize_index(idx, items.len())?].clone()),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            Ok(Value::Str(chars[normalize_index(idx, chars.len())?].to_string()))
        }
        other => Err(Fault::error(ErrorKind::TypeError, format!("'{}' object is not subscriptable", other.type_name()))),
    }
}

fn slice_positions(len: usize, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> Result<Vec<usize>, Fault> {
    let step = step.unwrap_or(1);
    if step == 0 {
        return Err(Fault::error(ErrorKind::ValueError, "slice step cannot be zero"));
    }
    let len = len as i64;
    let clamp = |v: i64, lower: i64, upper: i64| v.max(lower).min(upper);
    let norm = |v: i64| if v < 0 { v + len } else { v };
    let mut out = Vec::new();
    if step > 0 {
        let start = lo.map(|v| clamp(norm(v), 0, len)).unwrap_or(0);
        let stop = hi.map(|v| clamp(norm(v), 0, len)).unwrap_or(len);
        let mut i = start;
        while i < stop {
            out.push(i as usize);
            i += step;
        }
    } else {
        let start = lo.map(|v| clamp(norm(v), -1, len - 1)).unwrap_or(len - 1);
        let stop = hi.map(|v| clamp(norm(v), -1, len - 1)).unwrap_or(-1);
        let mut i = start;
        while i > stop {
            out.push(i as usize);
            i += step;
        }
    }
    Ok(out)
}

fn slice_value(base: &Value, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> Result<Value, Fault> {
    match base {
        Value::List(items) => {
            let pos = slice_positions(items.len(), lo, hi, step)?;
            Ok(Value::list(pos.into_iter().map(|i| items[i].clone()).collect()))
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            let pos = slice_positions(chars.len(), lo, hi, step)?;
            Ok(Value::Str(pos.into_iter().map(|i| chars[i]).collect()))
        }
        other => Err(Fault::error(ErrorKind::TypeError, format!("'{}' object is not subscriptable", other.type_name()))),
    }
}

fn outcome(result: Result<Value, Fault>, steps: u64) -> EvalOutcome {
    let status = match result {
        Ok(v) => EvalStatus::Returned(v),
        Err(Fault::Error(e)) => EvalStatus::RuntimeError(e),
        Err(Fault::Budget) => EvalStatus::StepBudgetExceeded,
    };
    EvalOutcome { status, steps_executed: steps }
}

/// Runs `entry` on `args` under a step budget.
pub fn run_program(unit: &AstUnit, entry: &str, args: &[Value], budget: u64) -> EvalOutcome {
    let mut m = Machine::new(unit, budget);
    let r = m.call_function(entry, args.to_vec(), None);
    outcome(r, m.steps)
}

/// Runs `entry` while reporting each step of the entry frame to `observer`.
pub fn run_observed(
    unit: &AstUnit,
    entry: &str,
    args: &[Value],
    budget: u64,
    observer: &mut dyn ExecObserver,
) -> EvalOutcome {
    let mut m = Machine::new(unit, budget);
    let r = m.call_function(entry, args.to_vec(), Some(observer));
    outcome(r, m.steps)
}

/// Evaluates a side-effect-free expression over `state`, allowing calls to
/// the functions of `unit`.
pub fn eval_expr_in(unit: &AstUnit, expr: &Expr, state: &Env) -> Result<Value, RuntimeError> {
    let mut m = Machine::new(unit, DEFAULT_STEP_BUDGET);
    m.eval(expr, state).map_err(|f| match f {
        Fault::Error(e) => e,
        Fault::Budget => RuntimeError {
            kind: ErrorKind::RecursionError,
            message: "step budget exceeded while evaluating expression".into(),
            line: expr.span.start,
        },
    })
}

/// Evaluates a side-effect-free expression over `state` (builtins only).
pub fn eval_expr(expr: &Expr, state: &Env) -> Result<Value, RuntimeError> {
    static EMPTY: std::sync::OnceLock<AstUnit> = std::sync::OnceLock::new();
    let empty = EMPTY.get_or_init(|| AstUnit { functions: vec![], source: String::new() });
    eval_expr_in(empty, expr, state)
}

/// Executes one simple statement (assignment, augmented assignment,
/// expression statement, pass/break/continue) against a copy of `state` and
/// returns the resulting bindings.
pub fn exec_statement(unit: &AstUnit, stmt: &Stmt, state: &Env) -> Result<Env, RuntimeError> {
    let mut m = Machine::new(unit, DEFAULT_STEP_BUDGET);
    let mut env = state.clone();
    m.exec_simple(stmt, &mut env).map_err(|f| match f.at_line(stmt.span.start) {
        Fault::Error(e) => e,
        Fault::Budget => RuntimeError {
            kind: ErrorKind::RecursionError,
            message: "step budget exceeded while executing statement".into(),
            line: stmt.span.start,
        },
    })?;
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, parse_expr};

    fn run(src: &str, entry: &str, args: &[Value]) -> EvalOutcome {
        run_program(&parse(src).unwrap(), entry, args, DEFAULT_STEP_BUDGET)
    }

    fn ints(xs: &[i64]) -> Value {
        Value::list(xs.iter().map(|&x| Value::Int(x)).collect())
    }

    #[test]
    fn arithmetic_and_return() {
        let out = run("def f(x):\n    return x + 1", "f", &[Value::Int(1)]);
        assert_eq!(out.returned(), Some(&Value::Int(2)));
    }

    #[test]
    fn floor_division_and_modulo_follow_floor_semantics() {
        let a = |op, x, y| arith(op, &Value::Int(x), &Value::Int(y)).unwrap();
        assert_eq!(a(BinOp::FloorDiv, -7, 2), Value::Int(-4));
        assert_eq!(a(BinOp::Mod, -7, 2), Value::Int(1));
        assert_eq!(a(BinOp::Mod, 7, -2), Value::Int(-1));
        assert_eq!(a(BinOp::Div, 7, 2), Value::Float(3.5));
        assert_eq!(a(BinOp::Pow, 2, -1), Value::Float(0.5));
    }

    #[test]
    fn runtime_errors_carry_kind_and_line() {
        let out = run("def f(x):\n    y = 1\n    return y // x\n", "f", &[Value::Int(0)]);
        let EvalStatus::RuntimeError(e) = out.status else { panic!("{out:?}") };
        assert_eq!(e.kind, ErrorKind::ZeroDivisionError);
        assert_eq!(e.line, 3);

        let out = run("def f(xs):\n    return xs[5]\n", "f", &[ints(&[1])]);
        assert!(matches!(out.status, EvalStatus::RuntimeError(RuntimeError { kind: ErrorKind::IndexError, .. })));

        let out = run("def f(x):\n    return y\n", "f", &[Value::Int(0)]);
        assert!(matches!(out.status, EvalStatus::RuntimeError(RuntimeError { kind: ErrorKind::NameError, .. })));

        let out = run("def f(x):\n    return x * 9223372036854775807\n", "f", &[Value::Int(2)]);
        assert!(matches!(out.status, EvalStatus::RuntimeError(RuntimeError { kind: ErrorKind::OverflowError, .. })));
    }

    #[test]
    fn budget_is_enforced_and_respected() {
        let unit = parse("def f(n):\n    i = 0\n    while True:\n        i += 1\n    return i\n").unwrap();
        let out = run_program(&unit, "f", &[Value::Int(0)], 500);
        assert_eq!(out.status, EvalStatus::StepBudgetExceeded);
        assert!(out.steps_executed <= 500);
    }

    #[test]
    fn values_do_not_alias() {
        let src = "def f(xs):\n    ys = xs\n    ys.append(4)\n    return [len(xs), len(ys)]\n";
        let out = run(src, "f", &[ints(&[1, 2, 3])]);
        assert_eq!(out.returned().unwrap().render(), "[3, 4]");
    }

    #[test]
    fn indexed_assignment_and_slices() {
        let src = "def f(n):\n    grid = [[0] * n for i in range(n)]\n    grid[1][0] = 5\n    grid[0][-1] += 2\n    return grid[::-1]\n";
        let out = run(src, "f", &[Value::Int(2)]);
        assert_eq!(out.returned().unwrap().render(), "[[5, 0], [0, 2]]");
    }

    #[test]
    fn eval_expr_is_pure_and_signed() {
        let mut state = Env::new();
        state.insert("num".into(), Value::Int(-33));
        let before = state.clone();
        assert_eq!(eval_expr(&parse_expr("num > 10").unwrap(), &state).unwrap(), Value::Bool(false));
        assert_eq!(eval_expr(&parse_expr("abs(num)").unwrap(), &state).unwrap(), Value::Int(33));
        assert_eq!(state, before);
    }

    #[test]
    fn short_circuit_returns_operands() {
        let state = Env::new();
        let v = eval_expr(&parse_expr("0 or 'x'").unwrap(), &state).unwrap();
        assert_eq!(v, Value::Str("x".into()));
        let v = eval_expr(&parse_expr("False and 1 // 0").unwrap(), &state).unwrap();
        assert_eq!(v, Value::Bool(false));
    }

    #[test]
    fn infinity_compares_by_ieee_order() {
        let mut state = Env::new();
        state.insert("cur_sum".into(), Value::Int(100));
        state.insert("min_sum".into(), Value::Float(f64::INFINITY));
        assert_eq!(eval_expr(&parse_expr("cur_sum < min_sum").unwrap(), &state).unwrap(), Value::Bool(true));
    }

    #[test]
    fn recursion_is_bounded() {
        let out = run("def f(n):\n    return f(n + 1)\n", "f", &[Value::Int(0)]);
        assert!(matches!(out.status, EvalStatus::RuntimeError(RuntimeError { kind: ErrorKind::RecursionError, .. })));
    }
}
