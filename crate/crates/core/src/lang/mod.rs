//! The subject language: a small, deterministic, dynamically typed subset of
//! a Python-like language.
//!
//! Supported: integers (64-bit, overflow is an error), floats, booleans,
//! strings, `None`, lists; arithmetic, comparisons (unchained), short-circuit
//! boolean operators, indexing and slicing, single-`for` list comprehensions,
//! the builtins in [`builtins::BUILTINS`], and `list.append` as a statement.
//! Statements are assignment, augmented assignment (`+=`, `-=`, `*=`, `//=`),
//! `if`/`elif`/`else`, `while`, `for`-`in`, `break`, `continue`, `return`,
//! `pass`, and expression statements. Every block starts on its own line.

pub mod ast;
pub mod builtins;
pub mod interp;
mod lexer;
pub mod literal;
mod parser;
pub mod printer;
pub mod value;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{AstUnit, Expr, FunctionDef, Span, Stmt, StmtKind};
pub use interp::{
    eval_expr, eval_expr_in, exec_statement, run_observed, run_program, Env, ErrorKind, EvalOutcome, EvalStatus,
    ExecObserver, RuntimeError, StepEvent, StepKind, DEFAULT_STEP_BUDGET,
};
pub use literal::{parse_literal, parse_literal_prefix, LiteralError};
pub use parser::{parse, parse_expr};
pub use value::{values_close, Value};

/// Positioned parse failure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for SyntaxError {}
