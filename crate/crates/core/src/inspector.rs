//! Trace inspection against the control-flow graph.
//!
//! [`validate_trace`] replays a predicted trace step by step: every step must
//! map to a node, follow a feasible edge from the previous one, take the
//! decision its condition actually yields over the recorded state, and
//! produce the state its statement actually computes. [`cross_check`]
//! compares the outputs of the original and its variants, and
//! [`synthesize_feedback`] turns the earliest problem into a repair
//! suggestion phrased in terms of CFG nodes and edges.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cfg::{stmt_for_node, Cfg, EdgeKind, Feasibility, NodeKind};
use crate::executor::TraceBundle;
use crate::lang::ast::{Expr, StmtKind};
use crate::lang::builtins::iterate;
use crate::lang::printer::{expr_to_string, simple_stmt_to_string};
use crate::lang::{eval_expr_in, exec_statement, values_close, AstUnit, Env, ErrorKind, FunctionDef, RuntimeError, Value};
use crate::mutator::{NodeCorrespondence, Relation};
use crate::trace::{FinalOutput, Trace, TraceStep, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisKind {
    UnmappedStep,
    InfeasibleEdge,
    ConditionMismatch,
    StateMismatch,
    OutputMismatch,
    CrossVariantDisagreement,
}

impl DiagnosisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisKind::UnmappedStep => "unmapped_step",
            DiagnosisKind::InfeasibleEdge => "infeasible_edge",
            DiagnosisKind::ConditionMismatch => "condition_mismatch",
            DiagnosisKind::StateMismatch => "state_mismatch",
            DiagnosisKind::OutputMismatch => "output_mismatch",
            DiagnosisKind::CrossVariantDisagreement => "cross_variant_disagreement",
        }
    }
}

impl std::fmt::Display for DiagnosisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Detail {
    Unmapped {
        line: u32,
    },
    Edge {
        /// Node of the previous step.
        from: String,
        /// Decision recorded at the previous step, if it was a branch.
        decision: Option<bool>,
        /// Edge the previous step should leave by.
        expected_edge: Option<(EdgeKind, String)>,
    },
    Condition {
        condition: String,
        evaluated: Option<bool>,
        recorded: Option<bool>,
        /// Values of the names the condition reads.
        bindings: Vec<(String, Value)>,
        /// Set when evaluation raised instead of producing a value.
        error: Option<String>,
    },
    State {
        statement: String,
        name: String,
        expected: Option<Value>,
        observed: Option<Value>,
        error: Option<String>,
    },
    Output {
        expected: String,
        observed: String,
    },
    Disagreement {
        /// `(program label, output)` for every trace in the bundle.
        outputs: Vec<(String, String)>,
        majority: Option<String>,
        minority: Vec<String>,
        tie: bool,
        /// Original-trace step where a corresponding decision first differs.
        divergence_step: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub kind: DiagnosisKind,
    /// CFG node id; empty when no node applies.
    pub node: String,
    /// Trace step index; 0 when no step applies.
    pub step: usize,
    pub detail: Detail,
    pub excerpt: String,
}

/// A site where a check could not be decided (recorded state lacks a name).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub step: usize,
    pub node: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnoses: Vec<Diagnosis>,
    pub notes: Vec<Note>,
}

impl ValidationReport {
    /// Steps whose condition check was undecidable.
    pub fn undecidable_steps(&self) -> Vec<usize> {
        self.notes.iter().map(|n| n.step).collect()
    }
}

fn is_missing_name(e: &RuntimeError) -> bool {
    e.kind == ErrorKind::NameError
}

fn bindings_for(expr: &Expr, state: &Env) -> Vec<(String, Value)> {
    let mut names = Vec::new();
    expr.reads(&mut names);
    names.sort();
    names.dedup();
    names.into_iter().filter_map(|n| state.get(&n).map(|v| (n, v.clone()))).collect()
}

/// Iterator shadow for one `for` head.
struct LoopShadow {
    items: Option<Vec<Value>>,
    pos: usize,
}

struct Checker<'a> {
    cfg: &'a Cfg,
    unit: &'a AstUnit,
    func: Option<&'a FunctionDef>,
    report: ValidationReport,
    shadows: BTreeMap<String, LoopShadow>,
}

impl<'a> Checker<'a> {
    fn excerpt(&self, node: &str) -> String {
        self.cfg.node(node).map(|n| n.label.clone()).unwrap_or_default()
    }

    fn push(&mut self, kind: DiagnosisKind, node: &str, step: usize, detail: Detail) {
        let excerpt = self.excerpt(node);
        self.report.diagnoses.push(Diagnosis { kind, node: node.to_string(), step, detail, excerpt });
    }

    fn note(&mut self, step: usize, node: &str, message: String) {
        self.report.notes.push(Note { step, node: node.to_string(), message });
    }

    /// Compares a declared post state with the expected one.
    fn compare_states(&mut self, step: &TraceStep, node: &str, statement: &str, expected: &Env) {
        let known = self.func.map(|f| f.variables()).unwrap_or_default();
        let mut names: Vec<&String> = expected.keys().chain(step.post_state.keys()).collect();
        names.sort();
        names.dedup();
        for name in names {
            let exp = expected.get(name);
            let obs = step.post_state.get(name);
            let ok = match (exp, obs) {
                (Some(a), Some(b)) => values_close(a, b),
                (None, None) => true,
                (Some(_), None) => false,
                (None, Some(_)) => false,
            };
            if !ok {
                let note = if !known.contains(name) { Some(format!("'{name}' is not a variable of this function")) } else { None };
                self.push(
                    DiagnosisKind::StateMismatch,
                    node,
                    step.index,
                    Detail::State {
                        statement: statement.to_string(),
                        name: name.clone(),
                        expected: exp.cloned(),
                        observed: obs.cloned(),
                        error: note,
                    },
                );
            }
        }
    }

    fn check_condition(&mut self, step: &TraceStep, node: &str, cond: &Expr) {
        let text = expr_to_string(cond);
        let bindings = bindings_for(cond, &step.pre_state);
        match eval_expr_in(self.unit, cond, &step.pre_state) {
            Ok(v) => {
                let evaluated = v.truthy();
                if step.branch != Some(evaluated) {
                    self.push(
                        DiagnosisKind::ConditionMismatch,
                        node,
                        step.index,
                        Detail::Condition { condition: text, evaluated: Some(evaluated), recorded: step.branch, bindings, error: None },
                    );
                }
            }
            Err(e) if is_missing_name(&e) => {
                self.note(step.index, node, format!("condition `{text}` undecidable: {}", e.message));
            }
            Err(e) => self.push(
                DiagnosisKind::ConditionMismatch,
                node,
                step.index,
                Detail::Condition { condition: text, evaluated: None, recorded: step.branch, bindings, error: Some(e.to_string()) },
            ),
        }
    }

    fn check_for_head(&mut self, step: &TraceStep, node: &str, prev: Option<&str>, var: &str, iter: &Expr) {
        let fresh = match prev {
            None => true,
            Some(p) => !self.cfg.loop_info(node).is_some_and(|l| l.body.contains(p)),
        };
        if fresh || !self.shadows.contains_key(node) {
            let items = match eval_expr_in(self.unit, iter, &step.pre_state).and_then(|v| {
                iterate(&v).map_err(|f| match f {
                    crate::lang::interp::Fault::Error(e) => e,
                    crate::lang::interp::Fault::Budget => RuntimeError { kind: ErrorKind::RecursionError, message: "budget".into(), line: 0 },
                })
            }) {
                Ok(items) => Some(items),
                Err(e) => {
                    self.note(step.index, node, format!("loop iterable `{}` undecidable: {}", expr_to_string(iter), e.message));
                    None
                }
            };
            self.shadows.insert(node.to_string(), LoopShadow { items, pos: 0 });
        }
        let shadow = self.shadows.get(node).expect("inserted above");
        let Some(items) = shadow.items.clone() else {
            return;
        };
        let pos = shadow.pos;
        let evaluated = pos < items.len();
        let condition = format!("{var} in {}", expr_to_string(iter));
        if step.branch != Some(evaluated) {
            let bindings = vec![(format!("next {var}"), items.get(pos).cloned().unwrap_or(Value::None))];
            self.push(
                DiagnosisKind::ConditionMismatch,
                node,
                step.index,
                Detail::Condition { condition: condition.clone(), evaluated: Some(evaluated), recorded: step.branch, bindings, error: None },
            );
        }
        let mut expected = step.pre_state.clone();
        if step.branch == Some(true) {
            if let Some(item) = items.get(pos) {
                expected.insert(var.to_string(), item.clone());
            } else if let Some(v) = step.post_state.get(var) {
                expected.insert(var.to_string(), v.clone());
            }
            self.shadows.get_mut(node).expect("present").pos += 1;
        }
        let header = format!("for {condition}:");
        self.compare_states(step, node, &header, &expected);
    }

    fn run(&mut self, trace: &Trace) {
        let mut prev: Option<(String, Option<bool>)> = Some((self.cfg.entry.clone(), None));
        let last_index = trace.steps.len().saturating_sub(1);
        let ends_in_error = trace.final_output.as_ref().is_some_and(FinalOutput::is_error);
        for (i, step) in trace.steps.iter().enumerate() {
            let Some(node_id) = step.node.clone().filter(|n| self.cfg.node(n).is_some()) else {
                self.push(DiagnosisKind::UnmappedStep, "", step.index, Detail::Unmapped { line: step.line });
                prev = None;
                continue;
            };
            if let Some((p, d)) = &prev {
                if self.cfg.step_feasibility(p, *d, &node_id) == Feasibility::Infeasible {
                    let expected_edge = self.expected_edge(p, *d);
                    self.push(
                        DiagnosisKind::InfeasibleEdge,
                        &node_id,
                        step.index,
                        Detail::Edge { from: p.clone(), decision: *d, expected_edge },
                    );
                }
            }
            let kind = self.cfg.node(&node_id).expect("checked").kind;
            let stmt = self.func.and_then(|f| stmt_for_node(f, self.cfg.node(&node_id).expect("checked")));
            let error_step = ends_in_error && i == last_index;
            if error_step {
                self.check_error_step(trace, step, &node_id, stmt);
            } else if let Some(stmt) = stmt {
                match &stmt.kind {
                    StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => {
                        self.check_condition(step, &node_id, cond);
                        let header = simple_stmt_to_string(stmt);
                        self.compare_states(step, &node_id, &header, &step.pre_state);
                    }
                    StmtKind::For { var, iter, .. } => {
                        let p = prev.as_ref().map(|(p, _)| p.clone());
                        self.check_for_head(step, &node_id, p.as_deref(), var, iter);
                    }
                    StmtKind::Return(_) => {
                        self.compare_states(step, &node_id, &simple_stmt_to_string(stmt), &step.pre_state);
                    }
                    _ => self.check_statement(step, &node_id, stmt),
                }
            }
            let decision = if kind.is_decision() { step.branch } else { None };
            prev = Some((node_id, decision));
        }
        self.check_output(trace, prev);
    }

    fn expected_edge(&self, from: &str, decision: Option<bool>) -> Option<(EdgeKind, String)> {
        let node = self.cfg.node(from)?;
        let edge = match (node.kind.is_decision(), decision) {
            (true, Some(d)) => self.cfg.decision_edge(from, d)?,
            _ => self.cfg.edges.iter().find(|e| e.from == from)?,
        };
        Some((edge.kind, edge.to.clone()))
    }

    fn check_statement(&mut self, step: &TraceStep, node: &str, stmt: &crate::lang::Stmt) {
        let text = simple_stmt_to_string(stmt);
        match exec_statement(self.unit, stmt, &step.pre_state) {
            Ok(expected) => self.compare_states(step, node, &text, &expected),
            Err(e) if is_missing_name(&e) => self.note(step.index, node, format!("statement `{text}` undecidable: {}", e.message)),
            Err(e) => {
                let name = stmt.writes().into_iter().next().unwrap_or_default();
                self.push(
                    DiagnosisKind::StateMismatch,
                    node,
                    step.index,
                    Detail::State {
                        statement: text,
                        name: name.clone(),
                        expected: None,
                        observed: step.post_state.get(&name).cloned(),
                        error: Some(e.to_string()),
                    },
                )
            }
        }
    }

    /// The last step of a trace ending in an error marker must really raise
    /// that error.
    fn check_error_step(&mut self, trace: &Trace, step: &TraceStep, node: &str, stmt: Option<&crate::lang::Stmt>) {
        let Some(FinalOutput::Error(marker)) = &trace.final_output else { return };
        if marker == "StepBudgetExceeded" {
            return;
        }
        let Some(stmt) = stmt else { return };
        let result: Result<(), RuntimeError> = match &stmt.kind {
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => eval_expr_in(self.unit, cond, &step.pre_state).map(|_| ()),
            StmtKind::For { iter, .. } => eval_expr_in(self.unit, iter, &step.pre_state).and_then(|v| {
                iterate(&v).map(|_| ()).map_err(|_| RuntimeError { kind: ErrorKind::TypeError, message: "not iterable".into(), line: 0 })
            }),
            StmtKind::Return(Some(e)) => eval_expr_in(self.unit, e, &step.pre_state).map(|_| ()),
            StmtKind::Return(None) => Ok(()),
            _ => exec_statement(self.unit, stmt, &step.pre_state).map(|_| ()),
        };
        match result {
            Err(e) if e.kind.to_string() == *marker => {}
            Err(e) if is_missing_name(&e) => self.note(step.index, node, format!("error step undecidable: {}", e.message)),
            other => {
                let expected = match other {
                    Ok(()) => "no error".to_string(),
                    Err(e) => format!("!{}", e.kind),
                };
                self.push(
                    DiagnosisKind::OutputMismatch,
                    node,
                    step.index,
                    Detail::Output { expected, observed: format!("!{marker}") },
                );
            }
        }
    }

    fn check_output(&mut self, trace: &Trace, last: Option<(String, Option<bool>)>) {
        let Some(observed) = &trace.final_output else {
            return;
        };
        if observed.is_error() {
            if trace.steps.is_empty() {
                self.push(
                    DiagnosisKind::OutputMismatch,
                    "",
                    0,
                    Detail::Output { expected: "a traced run".into(), observed: observed.to_string() },
                );
            }
            return;
        }
        let Some((node_id, decision)) = last else { return };
        let Some(step) = trace.steps.last() else {
            self.push(DiagnosisKind::OutputMismatch, "", 0, Detail::Output { expected: "a traced run".into(), observed: observed.to_string() });
            return;
        };
        let node = self.cfg.node(&node_id).expect("mapped");
        let expected: Option<Value> = if node.kind == NodeKind::Return {
            let stmt = self.func.and_then(|f| stmt_for_node(f, node));
            match stmt.map(|s| &s.kind) {
                Some(StmtKind::Return(Some(e))) => match eval_expr_in(self.unit, e, &step.pre_state) {
                    Ok(v) => Some(v),
                    Err(err) if is_missing_name(&err) => {
                        self.note(step.index, &node_id, format!("return value undecidable: {}", err.message));
                        return;
                    }
                    Err(err) => {
                        self.push(
                            DiagnosisKind::OutputMismatch,
                            &node_id,
                            step.index,
                            Detail::Output { expected: format!("!{}", err.kind), observed: observed.to_string() },
                        );
                        return;
                    }
                },
                _ => Some(Value::None),
            }
        } else if self.cfg.step_feasibility(&node_id, decision, &self.cfg.exit) == Feasibility::Feasible {
            Some(Value::None)
        } else {
            self.push(
                DiagnosisKind::OutputMismatch,
                &node_id,
                step.index,
                Detail::Output { expected: "a return before the output".into(), observed: observed.to_string() },
            );
            return;
        };
        if let Some(expected) = expected {
            if !observed.matches(&FinalOutput::Value(expected.clone())) {
                self.push(
                    DiagnosisKind::OutputMismatch,
                    &node_id,
                    step.index,
                    Detail::Output { expected: expected.render(), observed: observed.to_string() },
                );
            }
        }
    }
}

/// Full validation result, including undecidable sites.
pub fn check_trace(trace: &Trace, cfg: &Cfg, program: &AstUnit) -> ValidationReport {
    let mut checker =
        Checker { cfg, unit: program, func: program.function(&cfg.function), report: ValidationReport::default(), shadows: BTreeMap::new() };
    if trace.steps.is_empty() {
        let observed = trace.final_output.as_ref().map(|o| o.to_string()).unwrap_or_else(|| "nothing".into());
        checker.push(DiagnosisKind::OutputMismatch, "", 0, Detail::Output { expected: "a traced run".into(), observed });
    } else {
        checker.run(trace);
    }
    checker.report
}

/// Validates `trace` and sets its verdict. An empty result means healthy.
pub fn validate_trace(trace: &mut Trace, cfg: &Cfg, program: &AstUnit) -> Vec<Diagnosis> {
    let report = check_trace(trace, cfg, program);
    trace.verdict = if report.diagnoses.is_empty() { Verdict::Healthy } else { Verdict::Problematic };
    report.diagnoses
}

fn output_key(t: &Trace) -> String {
    t.final_output.as_ref().map(|o| o.to_string()).unwrap_or_else(|| "<none>".into())
}

/// Groups outputs into classes of mutually matching answers.
fn output_classes(outputs: &[Option<&FinalOutput>]) -> Vec<Vec<usize>> {
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, o) in outputs.iter().enumerate() {
        let found = classes.iter_mut().find(|c| match (outputs[c[0]], o) {
            (Some(a), Some(b)) => a.matches(b),
            (None, None) => true,
            _ => false,
        });
        match found {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

/// Decisions per base node, in occurrence order, with the trace step.
fn decision_sequences(trace: &Trace, cfg: &Cfg, map: Option<&NodeCorrespondence>) -> BTreeMap<String, Vec<(usize, bool)>> {
    let mut out: BTreeMap<String, Vec<(usize, bool)>> = BTreeMap::new();
    for s in &trace.steps {
        let (Some(node), Some(decision)) = (&s.node, s.branch) else { continue };
        if !cfg.node(node).is_some_and(|n| n.kind.is_decision()) {
            continue;
        }
        let (base, decision) = match map {
            None => (node.clone(), decision),
            Some(m) => match m.mapping.get(node) {
                Some((base, Relation::Same)) => (base.clone(), decision),
                Some((base, Relation::Negated)) => (base.clone(), !decision),
                _ => continue,
            },
        };
        out.entry(base).or_default().push((s.index, decision));
    }
    out
}

/// Earliest original step whose decision a variant does not reproduce.
fn first_divergence(original: &Trace, base_cfg: &Cfg, variant: &Trace, variant_cfg: &Cfg, map: &NodeCorrespondence) -> Option<usize> {
    let base = decision_sequences(original, base_cfg, None);
    let var = decision_sequences(variant, variant_cfg, Some(map));
    let mut best: Option<usize> = None;
    for (node, seq) in &base {
        let other = var.get(node).map(Vec::as_slice).unwrap_or(&[]);
        for (k, (step, d)) in seq.iter().enumerate() {
            if other.get(k).map(|(_, od)| od) != Some(d) {
                best = Some(best.map_or(*step, |b| b.min(*step)));
                break;
            }
        }
    }
    best
}

/// Compares final outputs across a bundle. `cfgs` holds the original's graph
/// followed by one graph per variant; `correspondences` maps each variant's
/// nodes onto the original's.
pub fn cross_check(bundle: &TraceBundle, cfgs: &[&Cfg], correspondences: &[NodeCorrespondence]) -> Vec<Diagnosis> {
    let mut traces: Vec<(&str, &Trace)> = vec![("original", &bundle.original)];
    traces.extend(bundle.variants.iter().map(|(l, t)| (l.as_str(), t)));
    let outputs: Vec<Option<&FinalOutput>> = traces.iter().map(|(_, t)| t.final_output.as_ref()).collect();
    let classes = output_classes(&outputs);
    if classes.len() <= 1 {
        return Vec::new();
    }
    let n = traces.len();
    let majority_class = classes.iter().find(|c| c.len() * 2 > n);
    let minority: Vec<String> = match majority_class {
        Some(m) => (0..n).filter(|i| !m.contains(i)).map(|i| traces[i].0.to_string()).collect(),
        None => Vec::new(),
    };
    let original_class = classes.iter().position(|c| c.contains(&0)).expect("original classified");
    let mut divergence: Option<usize> = None;
    if let Some(base_cfg) = cfgs.first() {
        for (vi, (_, vt)) in bundle.variants.iter().enumerate() {
            if classes[original_class].contains(&(vi + 1)) {
                continue;
            }
            let (Some(vcfg), Some(map)) = (cfgs.get(vi + 1), correspondences.get(vi)) else { continue };
            if let Some(step) = first_divergence(&bundle.original, base_cfg, vt, vcfg, map) {
                divergence = Some(divergence.map_or(step, |d| d.min(step)));
            }
        }
    }
    let node = divergence
        .and_then(|s| bundle.original.steps.iter().find(|st| st.index == s))
        .and_then(|st| st.node.clone())
        .unwrap_or_default();
    let excerpt = cfgs.first().and_then(|c| c.node(&node)).map(|n| n.label.clone()).unwrap_or_default();
    vec![Diagnosis {
        kind: DiagnosisKind::CrossVariantDisagreement,
        node,
        step: divergence.unwrap_or(0),
        detail: Detail::Disagreement {
            outputs: traces.iter().map(|(l, t)| (l.to_string(), output_key(t))).collect(),
            majority: majority_class.map(|c| output_key(traces[c[0]].1)),
            minority,
            tie: majority_class.is_none(),
            divergence_step: divergence,
        },
        excerpt,
    }]
}

/// Majority answer among outputs; `None` on a tie.
pub fn majority_output(outputs: &[Option<&FinalOutput>]) -> Option<FinalOutput> {
    let classes = output_classes(outputs);
    let n = outputs.len();
    classes.iter().find(|c| c.len() * 2 > n).and_then(|c| outputs[c[0]].cloned())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    /// First divergence first.
    pub diagnoses: Vec<Diagnosis>,
    pub suggestion: String,
}

impl Feedback {
    pub fn focus(&self) -> &Diagnosis {
        &self.diagnoses[0]
    }

    /// Text handed to the executor when asking for a refined trace.
    pub fn render(&self) -> String {
        let f = self.focus();
        let mut out = format!("DIAGNOSIS step={} node={} kind={}\n", f.step, if f.node.is_empty() { "-" } else { &f.node }, f.kind);
        out.push_str(&self.suggestion);
        out.push('\n');
        let rest: Vec<&Diagnosis> = self.diagnoses.iter().skip(1).collect();
        if !rest.is_empty() {
            out.push_str("Later findings (may be consequences of the first):\n");
            for d in rest {
                let _ = writeln!(out, "- step {} node {} {}", d.step, if d.node.is_empty() { "-" } else { &d.node }, d.kind);
            }
        }
        out
    }
}

fn sort_key(d: &Diagnosis) -> (usize, DiagnosisKind) {
    (if d.step == 0 { usize::MAX } else { d.step }, d.kind)
}

fn line_of(cfg: &Cfg, node: &str) -> String {
    cfg.node(node).map(|n| n.span.start.to_string()).unwrap_or_else(|| "?".into())
}

fn render_bindings(b: &[(String, Value)]) -> String {
    b.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

fn opt(v: &Option<Value>) -> String {
    v.as_ref().map(Value::render).unwrap_or_else(|| "unbound".into())
}

fn suggestion_for(d: &Diagnosis, cfg: &Cfg) -> String {
    let at = format!("Step {}, node {} (line {})", d.step, d.node, line_of(cfg, &d.node));
    match &d.detail {
        Detail::Condition { condition, evaluated: Some(ev), bindings, .. } => {
            let kind = cfg.node(&d.node).map(|n| n.kind);
            let edge = cfg.decision_edge(&d.node, *ev);
            let target = edge.map(|e| format!("take the {} edge to node {} (line {})", e.kind, e.to, line_of(cfg, &e.to)));
            let subject = bindings.iter().map(|(_, v)| v.render()).collect::<Vec<_>>().join(", ");
            let consequence = match (kind, ev) {
                (Some(NodeKind::LoopHead), true) => "the loop runs another iteration".to_string(),
                (Some(NodeKind::LoopHead), false) => "the loop exits here".to_string(),
                (_, false) if !subject.is_empty() => format!("{subject} should be skipped"),
                (_, true) if !subject.is_empty() => format!("{subject} should enter this branch"),
                _ => "the recorded branch is wrong".to_string(),
            };
            format!(
                "{at}: {consequence}: {condition} is {ev} for {}, {}.",
                render_bindings(bindings),
                target.unwrap_or_else(|| "follow the matching edge".into())
            )
        }
        Detail::Condition { condition, error, .. } => {
            format!("{at}: evaluating {condition} raises {}; recheck the state before this step.", error.clone().unwrap_or_default())
        }
        Detail::State { statement, name, expected, observed, error } => match error {
            Some(e) if expected.is_none() && observed.is_none() => format!("{at}: `{statement}` {e}."),
            Some(e) if expected.is_none() => format!("{at}: `{statement}` fails here ({e}); {name} cannot become {}.", opt(observed)),
            _ => format!("{at}: after `{statement}`, {name} should be {}, not {}.", opt(expected), opt(observed)),
        },
        Detail::Edge { from, expected_edge, .. } => match expected_edge {
            Some((kind, to)) => format!(
                "{at} cannot follow node {from} (line {}); from node {from} take the {kind} edge to node {to} (line {}).",
                line_of(cfg, from),
                line_of(cfg, to)
            ),
            None => format!("{at} cannot follow node {from}."),
        },
        Detail::Output { expected, observed } => {
            format!("{at}: the output should be {expected}, not {observed}.")
        }
        Detail::Unmapped { line } => format!("Step {}: line {line} holds no statement of {}; report statement lines only.", d.step, cfg.function),
        Detail::Disagreement { outputs, majority, tie, .. } => {
            let listed = outputs.iter().map(|(l, o)| format!("{l}: {o}")).collect::<Vec<_>>().join(", ");
            let head = if *tie {
                format!("Equivalent variants disagree with no majority ({listed})")
            } else {
                format!("Equivalent variants disagree ({listed}); the majority answer is {}", majority.clone().unwrap_or_default())
            };
            if d.step > 0 {
                format!("{head}. The first differing decision is at step {}, node {} (line {}); re-evaluate it.", d.step, d.node, line_of(cfg, &d.node))
            } else {
                format!("{head}. Re-derive the trace carefully.")
            }
        }
    }
}

/// Selects the first divergence and phrases a repair along CFG edges.
/// Returns `None` for an empty diagnosis list.
pub fn synthesize_feedback(diagnoses: &[Diagnosis], cfg: &Cfg) -> Option<Feedback> {
    if diagnoses.is_empty() {
        return None;
    }
    let mut ordered = diagnoses.to_vec();
    ordered.sort_by_key(sort_key);
    let suggestion = suggestion_for(&ordered[0], cfg);
    Some(Feedback { diagnoses: ordered, suggestion })
}

/// Parses the `DIAGNOSIS` line of rendered feedback into (step, node, kind).
pub fn parse_diagnosis_line(text: &str) -> Option<(usize, String, String)> {
    text.lines().find_map(|l| {
        let rest = l.trim().strip_prefix("DIAGNOSIS ")?;
        let mut step = None;
        let mut node = None;
        let mut kind = None;
        for part in rest.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            match k {
                "step" => step = v.parse().ok(),
                "node" => node = Some(v.to_string()),
                "kind" => kind = Some(v.to_string()),
                _ => {}
            }
        }
        Some((step?, node?, kind?))
    })
}
