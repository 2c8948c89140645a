//! Program variants for cross-checking.
//!
//! Deterministic operators rewrite the syntax tree while keeping each
//! statement's original span, so the printed variant knows which original
//! line every one of its lines came from. That line origin is what
//! [`NodeCorrespondence`] is built from. Variants written by a reasoner carry
//! no such metadata and are aligned by matching source lines.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatRequest, Reasoner};
use crate::cfg::{build_cfg, Cfg, NodeKind};
use crate::lang::ast::*;
use crate::lang::builtins::is_builtin;
use crate::lang::printer::print_unit;
use crate::lang::{parse, run_program, AstUnit, Value, DEFAULT_STEP_BUDGET};
use crate::program::SourceProgram;
use crate::prompts;
use crate::trace::FinalOutput;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    Semantic,
    Structural,
}

/// A deterministic rewrite. `line` selects the target construct by the line
/// it starts on; `None` picks the first applicable one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MutationOp {
    /// Renames every variable of the entry function. Without an explicit
    /// mapping, a prefix chosen by the seed is prepended.
    RenameVars { mapping: Option<BTreeMap<String, String>> },
    NegateCondition { line: Option<u32> },
    ForToWhile { line: Option<u32> },
    ContinueGuard { line: Option<u32> },
    ReorderIndependent { line: Option<u32> },
}

impl MutationOp {
    pub fn name(&self) -> &'static str {
        match self {
            MutationOp::RenameVars { .. } => "rename_vars",
            MutationOp::NegateCondition { .. } => "negate_condition",
            MutationOp::ForToWhile { .. } => "for_to_while",
            MutationOp::ContinueGuard { .. } => "continue_guard",
            MutationOp::ReorderIndependent { .. } => "reorder_independent",
        }
    }

    pub fn class(&self) -> OpClass {
        match self {
            MutationOp::RenameVars { .. } | MutationOp::ReorderIndependent { .. } => OpClass::Semantic,
            _ => OpClass::Structural,
        }
    }

    pub fn rename() -> Self {
        MutationOp::RenameVars { mapping: None }
    }

    pub fn negate() -> Self {
        MutationOp::NegateCondition { line: None }
    }

    pub fn for_to_while() -> Self {
        MutationOp::ForToWhile { line: None }
    }

    pub fn continue_guard() -> Self {
        MutationOp::ContinueGuard { line: None }
    }

    pub fn reorder() -> Self {
        MutationOp::ReorderIndependent { line: None }
    }

    pub fn all_default() -> Vec<MutationOp> {
        vec![Self::rename(), Self::negate(), Self::for_to_while(), Self::continue_guard(), Self::reorder()]
    }
}

/// How a variant node relates to the original node it maps to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Same kind; decisions agree.
    Same,
    /// Both branches; the variant's decision is the opposite.
    Negated,
    /// Introduced by a rewrite (loop index bookkeeping, guard `continue`).
    Scaffold,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeCorrespondence {
    /// Variant node id to (original node id, relation).
    pub mapping: BTreeMap<String, (String, Relation)>,
    /// Fraction of variant nodes that are mapped.
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MutantProgram {
    pub base_id: String,
    pub ops: Vec<String>,
    pub text: String,
    pub ast: AstUnit,
    pub entry: String,
    pub correspondence: NodeCorrespondence,
}

impl MutantProgram {
    pub fn cfg(&self) -> Cfg {
        build_cfg(&self.ast, &self.entry).expect("mutants keep their entry point")
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MutateError {
    #[error("{0} is not applicable to this program")]
    NotApplicable(&'static str),
    #[error("entry point '{0}' is not defined")]
    MissingEntry(String),
    #[error("mutant failed to re-parse: {0}")]
    Unparseable(String),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("no variant in the response parses")]
    AllUnparseable,
}

const PREFIXES: &[&str] = &["current_", "the_", "cur_", "my_", "val_"];

fn taken_names(unit: &AstUnit) -> BTreeSet<String> {
    let mut names: BTreeSet<String> = unit.functions.iter().map(|f| f.name.clone()).collect();
    for f in &unit.functions {
        names.extend(f.variables());
        visit_stmts(&f.body, &mut |s| {
            for_each_expr(s, &mut |e| {
                e.walk(&mut |x| match &x.kind {
                    ExprKind::Name(n) => {
                        names.insert(n.clone());
                    }
                    ExprKind::ListComp { var, .. } => {
                        names.insert(var.clone());
                    }
                    _ => {}
                })
            })
        });
    }
    names
}

fn fresh(base: &str, taken: &mut BTreeSet<String>) -> String {
    let mut name = base.to_string();
    let mut n = 1;
    while taken.contains(&name) || is_builtin(&name) || is_keyword(&name) {
        name = format!("{base}{n}");
        n += 1;
    }
    taken.insert(name.clone());
    name
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "and" | "or" | "not" | "if" | "elif" | "else" | "while" | "for" | "in" | "def" | "return" | "break" | "continue" | "pass"
            | "True" | "False" | "None"
    )
}

fn for_each_expr<'a>(s: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    match &s.kind {
        StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
            target.indices.iter().for_each(&mut *f);
            f(value);
        }
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => f(cond),
        StmtKind::For { iter, .. } => f(iter),
        StmtKind::Return(Some(e)) | StmtKind::Expr(e) => f(e),
        _ => {}
    }
}

fn for_each_expr_mut(s: &mut Stmt, f: &mut dyn FnMut(&mut Expr)) {
    match &mut s.kind {
        StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
            target.indices.iter_mut().for_each(&mut *f);
            f(value);
        }
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => f(cond),
        StmtKind::For { iter, .. } => f(iter),
        StmtKind::Return(Some(e)) | StmtKind::Expr(e) => f(e),
        _ => {}
    }
}

/// Working state of one rewrite chain.
struct Rewrite {
    unit: AstUnit,
    entry: String,
    /// Original lines whose branch is negated in the variant.
    negated: BTreeSet<u32>,
    taken: BTreeSet<String>,
}

impl Rewrite {
    fn func(&mut self) -> &mut FunctionDef {
        let entry = self.entry.clone();
        self.unit.functions.iter_mut().find(|f| f.name == entry).expect("entry checked")
    }

    fn apply(&mut self, op: &MutationOp, seed: u64) -> Result<(), MutateError> {
        match op {
            MutationOp::RenameVars { mapping } => self.rename(mapping.as_ref(), seed),
            MutationOp::NegateCondition { line } => self.negate(*line),
            MutationOp::ForToWhile { line } => self.for_to_while(*line),
            MutationOp::ContinueGuard { line } => self.continue_guard(*line),
            MutationOp::ReorderIndependent { line } => self.reorder(*line),
        }
    }

    fn rename(&mut self, mapping: Option<&BTreeMap<String, String>>, seed: u64) -> Result<(), MutateError> {
        let prefix = PREFIXES[(seed % PREFIXES.len() as u64) as usize];
        let mut names = self.func().variables();
        let mut comp_vars = Vec::new();
        visit_stmts(&self.func().body, &mut |s| {
            for_each_expr(s, &mut |e| {
                e.walk(&mut |x| {
                    if let ExprKind::ListComp { var, .. } = &x.kind {
                        comp_vars.push(var.clone());
                    }
                })
            })
        });
        for v in comp_vars {
            if !names.contains(&v) {
                names.push(v);
            }
        }
        if names.is_empty() {
            return Err(MutateError::NotApplicable("rename_vars"));
        }
        let mut map = BTreeMap::new();
        for n in &names {
            let target = match mapping {
                Some(m) => match m.get(n) {
                    Some(t) => t.clone(),
                    None => continue,
                },
                None => fresh(&format!("{prefix}{n}"), &mut self.taken),
            };
            map.insert(n.clone(), target);
        }
        let rename = |n: &mut String| {
            if let Some(t) = map.get(n.as_str()) {
                *n = t.clone();
            }
        };
        let func = self.func();
        func.params.iter_mut().for_each(rename);
        visit_stmts_mut(&mut func.body, &mut |s| {
            match &mut s.kind {
                StmtKind::Assign { target, .. } | StmtKind::AugAssign { target, .. } => rename(&mut target.name),
                StmtKind::For { var, .. } => rename(var),
                _ => {}
            }
            for_each_expr_mut(s, &mut |e| {
                e.walk_mut(&mut |x| match &mut x.kind {
                    ExprKind::Name(n) => rename(n),
                    ExprKind::ListComp { var, .. } => rename(var),
                    _ => {}
                })
            });
        });
        Ok(())
    }

    fn negate(&mut self, line: Option<u32>) -> Result<(), MutateError> {
        let mut done = false;
        visit_stmts_mut(&mut self.func().body, &mut |s| {
            if done {
                return;
            }
            if let StmtKind::If { cond, .. } = &mut s.kind {
                if line.is_none_or(|l| cond.span.start == l) {
                    let span = cond.span;
                    let old = std::mem::replace(cond, Expr::new(ExprKind::Const(Value::None), span));
                    let inner = match old.kind {
                        ExprKind::Compare(op, a, b) => Expr::new(ExprKind::Compare(op.negated(), a, b), span),
                        other => Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(Expr::new(other, span))), span),
                    };
                    *cond = Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(inner)), span);
                    done = true;
                }
            }
        });
        if done {
            Ok(())
        } else {
            Err(MutateError::NotApplicable("negate_condition"))
        }
    }

    fn for_to_while(&mut self, line: Option<u32>) -> Result<(), MutateError> {
        let seq = fresh("_seq", &mut self.taken);
        let idx = fresh("_i", &mut self.taken);
        if rewrite_blocks(&mut self.func().body, &mut |stmts, _| {
            let pos = stmts.iter().position(|s| matches!(&s.kind, StmtKind::For { header, .. } if line.is_none_or(|l| header.start == l)))?;
            let old = stmts.remove(pos);
            let StmtKind::For { var, iter, body, header } = old.kind else { unreachable!() };
            let name = |n: &str| Expr::new(ExprKind::Name(n.to_string()), header);
            let target = |n: &str| Target { name: n.to_string(), indices: vec![] };
            let init_seq = Stmt { kind: StmtKind::Assign { target: target(&seq), value: iter }, span: header };
            let init_idx = Stmt { kind: StmtKind::Assign { target: target(&idx), value: Expr::new(ExprKind::Const(Value::Int(0)), header) }, span: header };
            let cond = Expr::new(
                ExprKind::Compare(CmpOp::Lt, Box::new(name(&idx)), Box::new(Expr::new(ExprKind::Call("len".into(), vec![name(&seq)]), header))),
                header,
            );
            let bind = Stmt {
                kind: StmtKind::Assign { target: target(&var), value: Expr::new(ExprKind::Index(Box::new(name(&seq)), Box::new(name(&idx))), header) },
                span: header,
            };
            let step = Stmt {
                kind: StmtKind::AugAssign { target: target(&idx), op: BinOp::Add, value: Expr::new(ExprKind::Const(Value::Int(1)), header) },
                span: header,
            };
            let mut new_body = vec![bind, step];
            new_body.extend(body);
            let lp = Stmt { kind: StmtKind::While { cond, body: new_body }, span: old.span };
            stmts.splice(pos..pos, [init_seq, init_idx, lp]);
            Some(())
        }) {
            Ok(())
        } else {
            Err(MutateError::NotApplicable("for_to_while"))
        }
    }

    fn continue_guard(&mut self, line: Option<u32>) -> Result<(), MutateError> {
        let mut negated_line = None;
        let ok = rewrite_blocks(&mut self.func().body, &mut |stmts, in_loop| {
            if !in_loop {
                return None;
            }
            let last = stmts.last()?;
            let StmtKind::If { cond, orelse: Else::None, .. } = &last.kind else { return None };
            if !line.is_none_or(|l| cond.span.start == l) {
                return None;
            }
            let old = stmts.pop().expect("checked");
            let StmtKind::If { cond, body, .. } = old.kind else { unreachable!() };
            let span = cond.span;
            negated_line = Some(span.start);
            let guard = Stmt {
                kind: StmtKind::If {
                    cond: Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(cond)), span),
                    body: vec![Stmt { kind: StmtKind::Continue, span }],
                    orelse: Else::None,
                },
                span: old.span,
            };
            stmts.push(guard);
            stmts.extend(body);
            Some(())
        });
        match negated_line {
            Some(l) if ok => {
                self.negated.insert(l);
                Ok(())
            }
            _ => Err(MutateError::NotApplicable("continue_guard")),
        }
    }

    fn reorder(&mut self, line: Option<u32>) -> Result<(), MutateError> {
        let users: BTreeSet<String> = self.unit.functions.iter().map(|f| f.name.clone()).collect();
        let calls_user = |s: &Stmt| {
            let mut found = false;
            for_each_expr(s, &mut |e| found |= e.calls_user_function(&|n| users.contains(n)));
            found
        };
        let movable = |s: &Stmt| matches!(s.kind, StmtKind::Assign { .. } | StmtKind::AugAssign { .. } | StmtKind::Expr(_)) && !calls_user(s);
        let ok = rewrite_blocks(&mut self.func().body, &mut |stmts, _| {
            let pos = (0..stmts.len().saturating_sub(1)).find(|&i| {
                let (a, b) = (&stmts[i], &stmts[i + 1]);
                if !(movable(a) && movable(b)) || !line.is_none_or(|l| a.span.start == l) {
                    return false;
                }
                let (wa, ra, wb, rb) = (a.writes(), a.reads(), b.writes(), b.reads());
                let touches = |w: &[String], other_r: &[String], other_w: &[String]| w.iter().any(|n| other_r.contains(n) || other_w.contains(n));
                !touches(&wa, &rb, &wb) && !touches(&wb, &ra, &wa)
            })?;
            stmts.swap(pos, pos + 1);
            Some(())
        });
        if ok {
            Ok(())
        } else {
            Err(MutateError::NotApplicable("reorder_independent"))
        }
    }
}

/// Offers every block (pre-order) to `f` until it reports a rewrite.
/// The flag tells whether the block is a loop body.
fn rewrite_blocks(stmts: &mut Vec<Stmt>, f: &mut dyn FnMut(&mut Vec<Stmt>, bool) -> Option<()>) -> bool {
    fn go(stmts: &mut Vec<Stmt>, in_loop: bool, f: &mut dyn FnMut(&mut Vec<Stmt>, bool) -> Option<()>) -> bool {
        if f(stmts, in_loop).is_some() {
            return true;
        }
        for s in stmts.iter_mut() {
            let done = match &mut s.kind {
                StmtKind::If { body, orelse, .. } => {
                    go(body, false, f)
                        || match orelse {
                            Else::None => false,
                            Else::Block(b) => go(b, false, f),
                            Else::Elif(inner) => {
                                let mut one = vec![(**inner).clone()];
                                let r = go(&mut one, false, f);
                                if r && one.len() == 1 {
                                    **inner = one.pop().expect("one");
                                }
                                r
                            }
                        }
                }
                StmtKind::While { body, .. } | StmtKind::For { body, .. } => go(body, true, f),
                _ => false,
            };
            if done {
                return true;
            }
        }
        false
    }
    go(stmts, false, f)
}

/// Maps variant nodes onto original nodes through printed line origins.
fn correspond(base: &Cfg, variant: &Cfg, origins: &[u32], negated: &BTreeSet<u32>) -> NodeCorrespondence {
    let mut mapping = BTreeMap::new();
    for n in &variant.nodes {
        let target = match n.kind {
            NodeKind::Entry => Some((base.entry.clone(), Relation::Same)),
            NodeKind::Exit => Some((base.exit.clone(), Relation::Same)),
            _ => {
                let origin = origins.get(n.span.start as usize - 1).copied().unwrap_or(0);
                base.locate_node(origin).map(|b| {
                    let bk = base.node(b).expect("located").kind;
                    let rel = if bk != n.kind {
                        Relation::Scaffold
                    } else if negated.contains(&origin) && bk == NodeKind::Branch {
                        Relation::Negated
                    } else {
                        Relation::Same
                    };
                    (b.to_string(), rel)
                })
            }
        };
        if let Some(t) = target {
            mapping.insert(n.id.clone(), t);
        }
    }
    let coverage = if variant.nodes.is_empty() { 1.0 } else { mapping.len() as f64 / variant.nodes.len() as f64 };
    NodeCorrespondence { mapping, coverage }
}

/// Applies one operator.
pub fn mutate_deterministic(program: &AstUnit, entry: &str, op: &MutationOp, seed: u64) -> Result<MutantProgram, MutateError> {
    mutate_chain(program, entry, "", std::slice::from_ref(op), seed)
}

/// Applies operators left to right to the original tree, then prints and
/// re-parses once.
pub fn mutate_chain(program: &AstUnit, entry: &str, base_id: &str, ops: &[MutationOp], seed: u64) -> Result<MutantProgram, MutateError> {
    if !program.has_function(entry) {
        return Err(MutateError::MissingEntry(entry.to_string()));
    }
    let mut rw = Rewrite { unit: program.clone(), entry: entry.to_string(), negated: BTreeSet::new(), taken: taken_names(program) };
    for op in ops {
        rw.apply(op, seed)?;
    }
    let printed = print_unit(&rw.unit);
    let ast = parse(&printed.text).map_err(|e| MutateError::Unparseable(e.to_string()))?;
    let base_cfg = build_cfg(program, entry).expect("entry checked");
    let var_cfg = build_cfg(&ast, entry).map_err(|e| MutateError::Unparseable(e.to_string()))?;
    let correspondence = correspond(&base_cfg, &var_cfg, &printed.origins, &rw.negated);
    Ok(MutantProgram {
        base_id: base_id.to_string(),
        ops: ops.iter().map(|o| o.name().to_string()).collect(),
        text: printed.text,
        ast,
        entry: entry.to_string(),
        correspondence,
    })
}

/// The operator chains used when variants are produced without a reasoner.
/// The first variant renames and negates the first branch; the second
/// rewrites the first loop (falling back to a guard, a reorder, or a second
/// renaming); further variants rename with later seeds.
pub fn default_recipe(program: &AstUnit, entry: &str, base_id: &str, k: usize, seed: u64) -> Vec<MutantProgram> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    let first = mutate_chain(program, entry, base_id, &[MutationOp::rename(), MutationOp::negate()], seed)
        .or_else(|_| mutate_chain(program, entry, base_id, &[MutationOp::rename()], seed));
    out.extend(first.ok());
    let structural = [
        vec![MutationOp::for_to_while()],
        vec![MutationOp::continue_guard()],
        vec![MutationOp::reorder()],
        vec![MutationOp::rename()],
    ];
    for (i, extra) in (1..k).enumerate() {
        let seed_i = seed + 1 + i as u64;
        let produced = if extra == 1 {
            structural.iter().find_map(|ops| mutate_chain(program, entry, base_id, ops, seed_i).ok())
        } else {
            let mut chain = vec![MutationOp::rename()];
            let s = structural.iter().find(|ops| mutate_chain(program, entry, base_id, ops, seed_i).is_ok());
            if let Some(s) = s {
                chain.extend(s.iter().cloned());
            }
            mutate_chain(program, entry, base_id, &chain, seed_i).ok()
        };
        out.extend(produced);
    }
    out.truncate(k);
    out
}

/// Renders variants the way a reasoner is asked to return them: one fenced
/// block each, with origin and negation hints as trailing comments.
pub fn render_variants(variants: &[MutantProgram], base: &AstUnit, entry: &str) -> String {
    let mut out = String::new();
    for (i, v) in variants.iter().enumerate() {
        let origins = origins_of(v, base, entry);
        out.push_str(&format!("Variant {}:\n```python\n{}", i + 1, v.text));
        out.push_str(&format!("# origins: {}\n", origins.iter().map(u32::to_string).collect::<Vec<_>>().join(",")));
        out.push_str("```\n\n");
    }
    out
}

fn origins_of(v: &MutantProgram, base: &AstUnit, entry: &str) -> Vec<u32> {
    let lines = v.text.lines().count();
    let mut origins = vec![0u32; lines];
    let (Ok(bcfg), Ok(vcfg)) = (build_cfg(base, entry), build_cfg(&v.ast, entry)) else { return origins };
    for n in &vcfg.nodes {
        if matches!(n.kind, NodeKind::Entry | NodeKind::Exit) {
            continue;
        }
        if let Some((b, rel)) = v.correspondence.mapping.get(&n.id) {
            if let Some(bn) = bcfg.node(b) {
                let idx = n.span.start as usize - 1;
                if idx < lines {
                    origins[idx] = if *rel == Relation::Negated { bn.span.start + NEGATED_FLAG } else { bn.span.start };
                }
            }
        }
    }
    origins
}

/// Origin hints above this value mark a negated branch.
const NEGATED_FLAG: u32 = 1_000_000;

/// Code blocks in a response, each with the hint comment stripped.
fn fenced_blocks(text: &str) -> Vec<(String, Option<Vec<u32>>)> {
    let mut out = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => {
                    let mut hint = None;
                    let mut body = Vec::new();
                    for l in lines {
                        if let Some(rest) = l.trim().strip_prefix("# origins:") {
                            hint = rest.split(',').map(|x| x.trim().parse::<u32>().ok()).collect::<Option<Vec<u32>>>();
                        } else {
                            body.push(l);
                        }
                    }
                    out.push((body.join("\n") + "\n", hint));
                }
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    out
}

fn normalize_identifiers(line: &str) -> String {
    let mut out = String::new();
    let mut word = String::new();
    let flush = |w: &mut String, out: &mut String| {
        if !w.is_empty() {
            if is_keyword(w) || is_builtin(w) || w.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                out.push_str(w);
            } else {
                out.push('_');
            }
            w.clear();
        }
    };
    for c in line.trim().chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            if !c.is_whitespace() {
                out.push(c);
            }
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Aligns a free-form variant with the original by its lines: exact text
/// first, then text with identifiers normalized away.
fn line_match_origins(base: &AstUnit, variant_text: &str) -> Vec<u32> {
    let base_lines: Vec<&str> = base.source.lines().collect();
    variant_text
        .lines()
        .map(|l| {
            let t = l.trim();
            if t.is_empty() {
                return 0;
            }
            if let Some(i) = base_lines.iter().position(|b| b.trim() == t) {
                return i as u32 + 1;
            }
            let n = normalize_identifiers(t);
            base_lines.iter().position(|b| normalize_identifiers(b) == n).map(|i| i as u32 + 1).unwrap_or(0)
        })
        .collect()
}

fn variant_from_text(base: &AstUnit, entry: &str, base_id: &str, text: &str, hint: Option<Vec<u32>>) -> Option<MutantProgram> {
    let ast = parse(text).ok()?;
    if !ast.has_function(entry) {
        return None;
    }
    let lines = text.lines().count();
    let (origins, negated): (Vec<u32>, BTreeSet<u32>) = match hint.filter(|h| h.len() == lines) {
        Some(h) => {
            let negated = h.iter().filter(|&&o| o >= NEGATED_FLAG).map(|o| o - NEGATED_FLAG).collect();
            (h.into_iter().map(|o| if o >= NEGATED_FLAG { o - NEGATED_FLAG } else { o }).collect(), negated)
        }
        None => (line_match_origins(base, text), BTreeSet::new()),
    };
    let base_cfg = build_cfg(base, entry).ok()?;
    let var_cfg = build_cfg(&ast, entry).ok()?;
    let correspondence = correspond(&base_cfg, &var_cfg, &origins, &negated);
    Some(MutantProgram {
        base_id: base_id.to_string(),
        ops: vec!["llm".into()],
        text: text.to_string(),
        ast,
        entry: entry.to_string(),
        correspondence,
    })
}

/// Asks the reasoner for `k` variants in one request; retries once if none
/// of the returned blocks parse. Returns at most `k` variants and the number
/// of backend calls made.
pub fn mutate_llm(program: &SourceProgram, backend: &dyn Reasoner, k: usize) -> Result<(Vec<MutantProgram>, usize), MutateError> {
    if k == 0 {
        return Ok((Vec::new(), 0));
    }
    let base = program.parse().map_err(|e| MutateError::Unparseable(e.to_string()))?;
    let request: ChatRequest = prompts::mutate_request(program, k);
    let mut calls = 0;
    for _ in 0..2 {
        calls += 1;
        let response = backend.complete(&request)?;
        let variants: Vec<MutantProgram> = fenced_blocks(&response)
            .into_iter()
            .filter_map(|(text, hint)| variant_from_text(&base, &program.entry_point, &program.id, &text, hint))
            .take(k)
            .collect();
        if !variants.is_empty() {
            return Ok((variants, calls));
        }
    }
    Err(MutateError::AllUnparseable)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Equivalence {
    Equivalent,
    Deviant { input: Vec<Value>, base_out: FinalOutput, mutant_out: FinalOutput },
}

fn run_final(unit: &AstUnit, entry: &str, args: &[Value]) -> FinalOutput {
    let out = run_program(unit, entry, args, DEFAULT_STEP_BUDGET);
    match out.status {
        crate::lang::EvalStatus::Returned(v) => FinalOutput::Value(v),
        crate::lang::EvalStatus::RuntimeError(e) => FinalOutput::Error(e.kind.to_string()),
        crate::lang::EvalStatus::StepBudgetExceeded => FinalOutput::Error("StepBudgetExceeded".into()),
    }
}

/// Compares base and mutant on every input; reports the first deviation.
pub fn verify_mutant(base: &AstUnit, entry: &str, mutant: &MutantProgram, tests: &[Vec<Value>]) -> Equivalence {
    for input in tests {
        let a = run_final(base, entry, input);
        let b = run_final(&mutant.ast, &mutant.entry, input);
        if !a.matches(&b) {
            return Equivalence::Deviant { input: input.clone(), base_out: a, mutant_out: b };
        }
    }
    Equivalence::Equivalent
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub base_id: String,
    pub ops: Vec<String>,
    pub verdict: String,
    pub witness: Option<String>,
}

impl AuditRecord {
    pub fn new(mutant: &MutantProgram, eq: &Equivalence) -> Self {
        let (verdict, witness) = match eq {
            Equivalence::Equivalent => ("equivalent".to_string(), None),
            Equivalence::Deviant { input, base_out, mutant_out } => (
                "deviant".to_string(),
                Some(format!("{} -> {base_out} vs {mutant_out}", Value::list(input.clone()))),
            ),
        };
        AuditRecord { base_id: mutant.base_id.clone(), ops: mutant.ops.clone(), verdict, witness }
    }
}

pub fn write_audit_log(path: &Path, records: &[AuditRecord]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn special() -> AstUnit {
        parse(corpus::find("special_filter").unwrap().source).unwrap()
    }

    #[test]
    fn negation_keeps_truth() {
        let m = mutate_deterministic(&special(), "specialFilter", &MutationOp::negate(), 0).unwrap();
        assert!(m.text.contains("if not (num <= 10):"), "{}", m.text);
        assert_eq!(m.correspondence.coverage, 1.0);
    }

    #[test]
    fn rename_uses_prefix() {
        let m = mutate_deterministic(&special(), "specialFilter", &MutationOp::rename(), 0).unwrap();
        assert!(m.text.contains("for current_num in current_nums:"), "{}", m.text);
        let again = mutate_deterministic(&special(), "specialFilter", &MutationOp::rename(), 0).unwrap();
        assert_eq!(m.text, again.text);
    }

    #[test]
    fn for_loop_becomes_while() {
        let base = special();
        let m = mutate_deterministic(&base, "specialFilter", &MutationOp::for_to_while(), 0).unwrap();
        assert!(m.text.contains("while _i < len(_seq):"), "{}", m.text);
        let tests = [vec![parse_lit("[71, -2, -33, 75, 21, 19]")], vec![parse_lit("[]")]];
        assert_eq!(verify_mutant(&base, "specialFilter", &m, &tests), Equivalence::Equivalent);
        assert_eq!(m.correspondence.coverage, 1.0);
        assert!(m.correspondence.mapping.values().any(|(_, r)| *r == Relation::Scaffold));
    }

    #[test]
    fn guard_is_negated() {
        let m = mutate_deterministic(&special(), "specialFilter", &MutationOp::continue_guard(), 0).unwrap();
        assert!(m.text.contains("if not (num > 10):\n            continue"), "{}", m.text);
        assert!(m.correspondence.mapping.values().any(|(_, r)| *r == Relation::Negated));
    }

    #[test]
    fn flipped_comparison_is_deviant() {
        let base = parse("def f(x):\n    if x > 10:\n        return 1\n    return 0\n").unwrap();
        let m = variant_from_text(&base, "f", "b", "def f(x):\n    if x >= 10:\n        return 1\n    return 0\n", None).unwrap();
        match verify_mutant(&base, "f", &m, &[vec![Value::Int(3)], vec![Value::Int(10)]]) {
            Equivalence::Deviant { input, .. } => assert_eq!(input, vec![Value::Int(10)]),
            other => panic!("{other:?}"),
        }
        let same = variant_from_text(&base, "f", "b", &base.source, None).unwrap();
        assert_eq!(same.correspondence.coverage, 1.0);
        assert_eq!(verify_mutant(&base, "f", &same, &[vec![Value::Int(10)]]), Equivalence::Equivalent);
    }

    #[test]
    fn rendered_variants_round_trip_through_fences() {
        let base = special();
        let vs = default_recipe(&base, "specialFilter", "p", 2, 0);
        assert_eq!(vs.len(), 2);
        let text = render_variants(&vs, &base, "specialFilter");
        let back: Vec<_> = fenced_blocks(&text)
            .into_iter()
            .filter_map(|(t, h)| variant_from_text(&base, "specialFilter", "p", &t, h))
            .collect();
        assert_eq!(back.len(), 2);
        for (a, b) in vs.iter().zip(&back) {
            assert_eq!(a.text, b.text);
            assert_eq!(a.correspondence, b.correspondence);
        }
    }

    fn parse_lit(s: &str) -> Value {
        crate::lang::parse_literal(s).unwrap()
    }
}
