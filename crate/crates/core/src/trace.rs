//! Execution traces and their line protocol.
//!
//! ```text
//! STEP <k> | LINE <n> | STATE <name>=<literal>, ... | BRANCH <true|false>
//! OUTPUT <literal>
//! ```
//!
//! Only the state after each step travels on the wire. The state before a
//! step is the state after the previous one (the argument binding for the
//! first step), and a `STATE` list that omits a name keeps its previous
//! value. A run that ends in a runtime error reports `OUTPUT !<ErrorKind>`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cfg::{build_cfg, Cfg};
use crate::lang::interp::Fault;
use crate::lang::{
    parse_literal, parse_literal_prefix, run_observed, values_close, AstUnit, Env, ExecObserver, StepEvent, StepKind, Value,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub line: u32,
    /// Resolved CFG node id, if the line maps to one.
    pub node: Option<String>,
    pub pre_state: Env,
    pub post_state: Env,
    pub branch: Option<bool>,
}

/// What a trace claims the call produced.
#[derive(Clone, Debug, PartialEq)]
pub enum FinalOutput {
    Value(Value),
    /// Name of the runtime error (e.g. `ZeroDivisionError`).
    Error(String),
}

impl FinalOutput {
    pub fn value(&self) -> Option<&Value> {
        match self {
            FinalOutput::Value(v) => Some(v),
            FinalOutput::Error(_) => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, FinalOutput::Error(_))
    }

    pub fn parse(text: &str) -> Option<FinalOutput> {
        let t = text.trim();
        if let Some(kind) = t.strip_prefix('!') {
            let kind = kind.trim();
            if !kind.is_empty() && kind.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Some(FinalOutput::Error(kind.to_string()));
            }
            return None;
        }
        parse_literal(t).ok().map(FinalOutput::Value)
    }

    /// Equality used for answers: tolerant for floats, exact for markers.
    pub fn matches(&self, other: &FinalOutput) -> bool {
        match (self, other) {
            (FinalOutput::Value(a), FinalOutput::Value(b)) => outputs_equal(a, b),
            (FinalOutput::Error(a), FinalOutput::Error(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for FinalOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FinalOutput::Value(v) => write!(f, "{v}"),
            FinalOutput::Error(k) => write!(f, "!{k}"),
        }
    }
}

impl Serialize for FinalOutput {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FinalOutput {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FinalOutput::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad output {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    #[default]
    Unchecked,
    Healthy,
    Problematic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub program_id: String,
    pub input: Vec<Value>,
    pub steps: Vec<TraceStep>,
    pub final_output: Option<FinalOutput>,
    #[serde(default)]
    pub verdict: Verdict,
}

impl Trace {
    /// A trace standing for a response that could not be parsed.
    pub fn failed(program_id: &str, input: &[Value]) -> Trace {
        Trace {
            program_id: program_id.to_string(),
            input: input.to_vec(),
            steps: Vec::new(),
            final_output: Some(FinalOutput::Error("Unparseable".into())),
            verdict: Verdict::Problematic,
        }
    }

    pub fn output_value(&self) -> Option<&Value> {
        self.final_output.as_ref().and_then(FinalOutput::value)
    }
}

/// Structural equality with a relative tolerance of 1e-9 for floats.
pub fn outputs_equal(a: &Value, b: &Value) -> bool {
    values_close(a, b)
}

/// Binds parameter names to arguments, ignoring extras.
pub fn bind_args(params: &[String], args: &[Value]) -> Env {
    params.iter().cloned().zip(args.iter().cloned()).collect()
}

/// Collects observed steps of the entry frame into [`TraceStep`]s.
pub struct TraceRecorder<'c> {
    cfg: &'c Cfg,
    last: Env,
    pub steps: Vec<TraceStep>,
    pub returned: Option<Value>,
    pub error: Option<String>,
}

impl<'c> TraceRecorder<'c> {
    pub fn new(cfg: &'c Cfg, initial: Env) -> Self {
        TraceRecorder { cfg, last: initial, steps: Vec::new(), returned: None, error: None }
    }

    pub fn final_output(&self) -> Option<FinalOutput> {
        match (&self.error, &self.returned) {
            (Some(e), _) => Some(FinalOutput::Error(e.clone())),
            (None, Some(v)) => Some(FinalOutput::Value(v.clone())),
            (None, None) => None,
        }
    }
}

impl ExecObserver for TraceRecorder<'_> {
    fn step(&mut self, event: StepEvent<'_>) {
        let pre = self.last.clone();
        let post = if event.kind == StepKind::Error { pre.clone() } else { event.env.clone() };
        if let Some(f) = event.error {
            self.error = Some(match f {
                Fault::Error(e) => e.kind.to_string(),
                Fault::Budget => "StepBudgetExceeded".into(),
            });
        }
        if let Some(v) = event.returned {
            self.returned = Some(v.clone());
        }
        self.steps.push(TraceStep {
            index: event.index,
            line: event.line,
            node: self.cfg.locate_node(event.line).map(str::to_string),
            pre_state: pre,
            post_state: post.clone(),
            branch: event.decision,
        });
        self.last = post;
    }
}

/// The true trace of `entry(args)`: every step carries the real states and
/// decisions, and the output equals what `run_program` returns.
pub fn oracle_trace(unit: &AstUnit, entry: &str, args: &[Value], budget: u64) -> Trace {
    let traced = build_cfg(unit, entry).ok().and_then(|cfg| observed_trace(unit, &cfg, entry, args, budget, None));
    traced.unwrap_or_else(|| Trace {
        program_id: entry.to_string(),
        input: args.to_vec(),
        steps: Vec::new(),
        final_output: Some(FinalOutput::Error("NameError".into())),
        verdict: Verdict::Unchecked,
    })
}

/// Runs `entry` under an optional extra observer hook (used to inject
/// faults) and records the resulting trace.
pub fn observed_trace(
    unit: &AstUnit,
    cfg: &Cfg,
    entry: &str,
    args: &[Value],
    budget: u64,
    hook: Option<&mut dyn StepHook>,
) -> Option<Trace> {
    let func = unit.function(entry)?;
    let mut rec = TraceRecorder::new(cfg, bind_args(&func.params, args));
    let outcome = match hook {
        Some(h) => run_observed(unit, entry, args, budget, &mut Hooked { hook: h, rec: &mut rec }),
        None => run_observed(unit, entry, args, budget, &mut rec),
    };
    let final_output = rec.final_output().or_else(|| match outcome.status {
        crate::lang::EvalStatus::Returned(v) => Some(FinalOutput::Value(v)),
        crate::lang::EvalStatus::RuntimeError(e) => Some(FinalOutput::Error(e.kind.to_string())),
        crate::lang::EvalStatus::StepBudgetExceeded => Some(FinalOutput::Error("StepBudgetExceeded".into())),
    });
    Some(Trace { program_id: entry.to_string(), input: args.to_vec(), steps: rec.steps, final_output, verdict: Verdict::Unchecked })
}

/// Decision and state hooks layered over a [`TraceRecorder`].
pub trait StepHook {
    fn decide(&mut self, index: usize, line: u32, actual: bool) -> bool;
    fn adjust(&mut self, index: usize, line: u32, pre: &Env, post: &mut Env);
}

struct Hooked<'h, 'r, 'c> {
    hook: &'h mut dyn StepHook,
    rec: &'r mut TraceRecorder<'c>,
}

impl ExecObserver for Hooked<'_, '_, '_> {
    fn decide(&mut self, index: usize, line: u32, actual: bool) -> bool {
        self.hook.decide(index, line, actual)
    }

    fn adjust(&mut self, index: usize, line: u32, pre: &Env, post: &mut Env) {
        self.hook.adjust(index, line, pre, post)
    }

    fn step(&mut self, event: StepEvent<'_>) {
        self.rec.step(event)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("trace has no steps")]
    NoSteps,
    #[error("trace has no final output")]
    NotTerminated,
}

fn render_state(state: &Env) -> String {
    state.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

pub fn render_step(step: &TraceStep) -> String {
    let mut line = format!("STEP {} | LINE {} | STATE", step.index, step.line);
    let state = render_state(&step.post_state);
    if !state.is_empty() {
        line.push(' ');
        line.push_str(&state);
    }
    if let Some(b) = step.branch {
        line.push_str(if b { " | BRANCH true" } else { " | BRANCH false" });
    }
    line
}

/// Protocol text for a terminated trace.
pub fn render_trace(trace: &Trace) -> Result<String, RenderError> {
    if trace.steps.is_empty() {
        return Err(RenderError::NoSteps);
    }
    let out = trace.final_output.as_ref().ok_or(RenderError::NotTerminated)?;
    let mut text = String::new();
    for s in &trace.steps {
        text.push_str(&render_step(s));
        text.push('\n');
    }
    text.push_str(&format!("OUTPUT {out}\n"));
    Ok(text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceParseReport {
    pub trace: Option<Trace>,
    pub ignored_lines: usize,
    /// Out-of-order step indices that were renumbered by appearance.
    pub reorder_warnings: usize,
    pub fatal: Option<String>,
}

struct RawStep {
    index: usize,
    line: u32,
    state: Vec<(String, Value)>,
    branch: Option<bool>,
}

fn strip_decoration(line: &str) -> &str {
    line.trim().trim_start_matches(['-', '*', '>', '`', ' ', '\t']).trim_end_matches(['`', ' ', '\t'])
}

fn keyword<'a>(s: &'a str, word: &str) -> Option<&'a str> {
    let s = s.trim_start();
    let rest = s.strip_prefix(word)?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim_start())
    } else {
        None
    }
}

fn number<T: std::str::FromStr>(s: &str) -> Option<(T, &str)> {
    let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    if end == 0 {
        return None;
    }
    Some((s[..end].parse().ok()?, &s[end..]))
}

fn separator(s: &str) -> Option<&str> {
    s.trim_start().strip_prefix('|').map(str::trim_start)
}

fn parse_step_line(line: &str) -> Option<RawStep> {
    let rest = keyword(line, "STEP")?;
    let (index, rest) = number::<usize>(rest)?;
    let rest = keyword(separator(rest)?, "LINE")?;
    let (src_line, rest) = number::<u32>(rest)?;
    let mut rest = keyword(separator(rest)?, "STATE")?;
    let mut state = Vec::new();
    loop {
        let t = rest.trim_start();
        if t.is_empty() || t.starts_with('|') {
            rest = t;
            break;
        }
        let name_end = t.find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(t.len());
        if name_end == 0 {
            return None;
        }
        let name = &t[..name_end];
        let after = t[name_end..].trim_start().strip_prefix('=')?;
        let (value, r) = parse_literal_prefix(after).ok()?;
        state.push((name.to_string(), value));
        let r = r.trim_start();
        rest = r.strip_prefix(',').unwrap_or(r);
        if !r.starts_with(',') {
            rest = r;
            if !(r.is_empty() || r.starts_with('|')) {
                return None;
            }
            break;
        }
    }
    let mut branch = None;
    if !rest.is_empty() {
        let b = keyword(separator(rest)?, "BRANCH")?;
        branch = Some(match b.trim() {
            "true" | "True" => true,
            "false" | "False" => false,
            _ => return None,
        });
    }
    Some(RawStep { index, line: src_line, state, branch })
}

/// Parses reasoner output with no argument binding for the first step.
pub fn parse_trace_text(text: &str, cfg: &Cfg) -> TraceParseReport {
    parse_trace_text_with(text, cfg, &Env::new())
}

/// Parses reasoner output; `initial` is the state before the first step.
pub fn parse_trace_text_with(text: &str, cfg: &Cfg, initial: &Env) -> TraceParseReport {
    let mut raw = Vec::new();
    let mut output: Option<FinalOutput> = None;
    let mut ignored = 0;
    for line in text.lines() {
        let l = strip_decoration(line);
        if let Some(step) = parse_step_line(l) {
            raw.push(step);
        } else if let Some(out) = keyword(l, "OUTPUT").and_then(FinalOutput::parse) {
            output = Some(out);
        } else {
            ignored += 1;
        }
    }
    let mut reorder_warnings = 0;
    for w in raw.windows(2) {
        if w[1].index <= w[0].index {
            reorder_warnings += 1;
        }
    }
    if reorder_warnings > 0 {
        for (i, s) in raw.iter_mut().enumerate() {
            s.index = i + 1;
        }
    }
    let fatal = if raw.is_empty() {
        Some("zero parseable steps".to_string())
    } else if output.is_none() {
        Some("no OUTPUT line".to_string())
    } else {
        None
    };
    if let Some(reason) = fatal {
        return TraceParseReport { trace: None, ignored_lines: ignored, reorder_warnings, fatal: Some(reason) };
    }
    let mut last = initial.clone();
    let steps = raw
        .into_iter()
        .map(|r| {
            let pre = last.clone();
            let mut post = pre.clone();
            post.extend(r.state);
            last = post.clone();
            TraceStep {
                index: r.index,
                line: r.line,
                node: cfg.locate_node(r.line).map(str::to_string),
                pre_state: pre,
                post_state: post,
                branch: r.branch,
            }
        })
        .collect();
    TraceParseReport {
        trace: Some(Trace {
            program_id: String::new(),
            input: Vec::new(),
            steps,
            final_output: output,
            verdict: Verdict::Unchecked,
        }),
        ignored_lines: ignored,
        reorder_warnings,
        fatal: None,
    }
}

/// Writes traces as JSON Lines.
pub fn write_traces_jsonl(path: &Path, traces: &[Trace]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

pub fn read_traces_jsonl(path: &Path) -> std::io::Result<Vec<Trace>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, DEFAULT_STEP_BUDGET};
    use proptest::prelude::*;

    const SRC: &str = "def f(x):\n    if x > 10:\n        return 1\n    return 0\n";

    fn cfg() -> (AstUnit, Cfg) {
        let unit = parse(SRC).unwrap();
        let cfg = build_cfg(&unit, "f").unwrap();
        (unit, cfg)
    }

    #[test]
    fn parses_single_step() {
        let (_, cfg) = cfg();
        let r = parse_trace_text("STEP 1 | LINE 2 | STATE x=-33 | BRANCH false\nOUTPUT 0", &cfg);
        let t = r.trace.unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].branch, Some(false));
        assert_eq!(t.final_output, Some(FinalOutput::Value(Value::Int(0))));
        assert_eq!(t.steps[0].node.as_deref(), cfg.locate_node(2));
    }

    #[test]
    fn prose_is_ignored() {
        let (_, cfg) = cfg();
        let text = "Let me think.\nSTEP 1 | LINE 2 | STATE x=-33 | BRANCH false\nso x is small\n- STEP 2 | LINE 4 | STATE x=-33\nOUTPUT 0\n";
        let r = parse_trace_text(text, &cfg);
        assert_eq!(r.trace.unwrap().steps.len(), 2);
        assert_eq!(r.ignored_lines, 2);
    }

    #[test]
    fn missing_output_is_fatal() {
        let (_, cfg) = cfg();
        let r = parse_trace_text("STEP 1 | LINE 2 | STATE x=1 | BRANCH false", &cfg);
        assert_eq!(r.fatal.as_deref(), Some("no OUTPUT line"));
        assert!(r.trace.is_none());
        assert_eq!(parse_trace_text("OUTPUT 1", &cfg).fatal.as_deref(), Some("zero parseable steps"));
    }

    #[test]
    fn oracle_round_trip() {
        let (unit, cfg) = cfg();
        let t = oracle_trace(&unit, "f", &[Value::Int(-33)], DEFAULT_STEP_BUDGET);
        assert_eq!(t.steps[0].branch, Some(false));
        let text = render_trace(&t).unwrap();
        assert!(text.ends_with("OUTPUT 0\n"));
        let back = parse_trace_text_with(&text, &cfg, &bind_args(&["x".into()], &[Value::Int(-33)])).trace.unwrap();
        assert_eq!(back.steps, t.steps);
        assert_eq!(back.final_output, t.final_output);
    }

    #[test]
    fn state_literals_may_contain_separators() {
        let (_, cfg) = cfg();
        let t = parse_trace_text("STEP 1 | LINE 2 | STATE s='a | b, c', xs=[1, 2] | BRANCH true\nOUTPUT 'x'", &cfg).trace.unwrap();
        assert_eq!(t.steps[0].post_state["s"], Value::Str("a | b, c".into()));
        assert_eq!(t.steps[0].post_state["xs"].render(), "[1, 2]");
    }

    #[test]
    fn out_of_order_indices_are_renumbered() {
        let (_, cfg) = cfg();
        let r = parse_trace_text("STEP 2 | LINE 2 | STATE | BRANCH false\nSTEP 1 | LINE 4 | STATE\nOUTPUT 0", &cfg);
        assert_eq!(r.reorder_warnings, 1);
        let idx: Vec<_> = r.trace.unwrap().steps.iter().map(|s| s.index).collect();
        assert_eq!(idx, vec![1, 2]);
    }

    #[test]
    fn error_marker_and_empty_trace() {
        assert_eq!(FinalOutput::parse("!ZeroDivisionError"), Some(FinalOutput::Error("ZeroDivisionError".into())));
        let t = Trace { program_id: "p".into(), input: vec![], steps: vec![], final_output: None, verdict: Verdict::Unchecked };
        assert_eq!(render_trace(&t), Err(RenderError::NoSteps));
    }

    #[test]
    fn output_equality() {
        let l = parse_literal("[2, 3, 3, 2]").unwrap();
        assert!(outputs_equal(&l, &l.clone()));
        assert!(!outputs_equal(&Value::Int(-33), &Value::Int(-4)));
        assert!(outputs_equal(&Value::Float(1.0), &Value::Float(1.0 + 1e-12)));
    }

    proptest! {
        #[test]
        fn parsing_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let (_, cfg) = cfg();
            let text = String::from_utf8_lossy(&bytes);
            let r = parse_trace_text(&text, &cfg);
            prop_assert_eq!(r.fatal.is_some(), r.trace.is_none());
        }

        #[test]
        fn protocol_like_noise_never_panics(s in "(STEP [0-9]{1,3} \\| LINE [0-9]{1,2} \\| STATE [a-z=0-9,\\[\\] '|]{0,20}( \\| BRANCH (true|false|x))?\n){0,4}(OUTPUT [0-9!a-z]{0,4})?") {
            let (_, cfg) = cfg();
            let _ = parse_trace_text(&s, &cfg);
        }
    }
}
