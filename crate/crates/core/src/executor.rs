use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatRequest, Reasoner};
use crate::cfg::Cfg;
use crate::lang::{AstUnit, Env, Value};
use crate::program::SourceProgram;
use crate::prompts::{cot_request, execute_request, refine_request};
use crate::trace::{bind_args, parse_trace_text_with, Trace};

/// Traces of one input over the original program and its variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceBundle {
    pub input: Vec<Value>,
    pub original: Trace,
    /// `(variant program id, trace)` in variant order.
    pub variants: Vec<(String, Trace)>,
    /// Refinement rounds applied to the original trace.
    pub rounds: usize,
}

/// A program ready to be traced: source, parsed unit and CFG of its entry.
pub struct Traceable<'a> {
    pub program: &'a SourceProgram,
    pub unit: &'a AstUnit,
    pub cfg: &'a Cfg,
}

/// One traced answer with the conversation that produced it.
#[derive(Clone, Debug)]
pub struct Attempt {
    pub trace: Trace,
    pub request: ChatRequest,
    pub response: String,
    pub calls: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prompting {
    Execute,
    Cot,
}

/// Errors that stop an evaluation instead of degrading one trace.
fn is_fatal(e: &BackendError) -> bool {
    matches!(e, BackendError::Auth(_) | BackendError::Config(_))
}

fn initial_state(t: &Traceable<'_>, input: &[Value]) -> Env {
    t.unit.function(&t.program.entry_point).map(|f| bind_args(&f.params, input)).unwrap_or_default()
}

fn parse_response(t: &Traceable<'_>, input: &[Value], response: &str) -> Option<Trace> {
    let report = parse_trace_text_with(response, t.cfg, &initial_state(t, input));
    if let Some(reason) = &report.fatal {
        log::debug!("{}: unusable trace ({reason})", t.program.id);
    }
    let mut trace = report.trace?;
    trace.program_id = t.program.id.clone();
    trace.input = input.to_vec();
    Some(trace)
}

/// Sends `request` and parses the answer; resends once when the answer has
/// no usable trace, then gives up with [`Trace::failed`].
pub fn complete_trace(backend: &dyn Reasoner, t: &Traceable<'_>, input: &[Value], request: ChatRequest) -> Result<Attempt, BackendError> {
    let mut calls = 0;
    let mut last = String::new();
    for _ in 0..2 {
        calls += 1;
        match backend.complete(&request) {
            Ok(response) => {
                if let Some(trace) = parse_response(t, input, &response) {
                    return Ok(Attempt { trace, request, response, calls });
                }
                last = response;
            }
            Err(e) if is_fatal(&e) => return Err(e),
            Err(e) => {
                log::warn!("{}: backend error: {e}", t.program.id);
                break;
            }
        }
    }
    Ok(Attempt { trace: Trace::failed(&t.program.id, input), request, response: last, calls })
}

/// Asks for a trace of `t` on `input`.
pub fn trace_once(backend: &dyn Reasoner, t: &Traceable<'_>, input: &[Value], prompting: Prompting) -> Result<Attempt, BackendError> {
    let request = match prompting {
        Prompting::Execute => execute_request(t.program, input),
        Prompting::Cot => cot_request(t.program, input),
    };
    complete_trace(backend, t, input, request)
}

/// Continues `previous` with feedback and parses the revised trace. A
/// revision that cannot be parsed keeps the previous trace.
pub fn refine(backend: &dyn Reasoner, t: &Traceable<'_>, previous: &Attempt, feedback: &str) -> Result<Attempt, BackendError> {
    let request = refine_request(&previous.request, &previous.response, feedback);
    let mut next = complete_trace(backend, t, &previous.trace.input, request)?;
    if next.trace.steps.is_empty() && !previous.trace.steps.is_empty() {
        next.trace = previous.trace.clone();
    }
    Ok(next)
}

/// Traces the original and every variant on one input. Returns the bundle,
/// the attempt for the original (kept for refinement) and the call count.
pub fn trace_bundle(
    backend: &dyn Reasoner,
    original: &Traceable<'_>,
    variants: &[Traceable<'_>],
    input: &[Value],
) -> Result<(TraceBundle, Attempt, usize), BackendError> {
    let first = trace_once(backend, original, input, Prompting::Execute)?;
    let mut calls = first.calls;
    let mut traces = Vec::with_capacity(variants.len());
    for v in variants {
        let a = trace_once(backend, v, input, Prompting::Execute)?;
        calls += a.calls;
        traces.push((v.program.id.clone(), a.trace));
    }
    let bundle = TraceBundle { input: input.to_vec(), original: first.trace.clone(), variants: traces, rounds: 0 };
    Ok((bundle, first, calls))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::cfg::build_cfg;
    use crate::trace::{FinalOutput, Verdict};

    struct Fixed(&'static str);

    impl Reasoner for Fixed {
        fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
            Ok(self.0.to_string())
        }
        fn name(&self) -> String {
            "fixed".into()
        }
    }

    fn inc() -> (SourceProgram, AstUnit, Cfg) {
        let p = SourceProgram::new("inc@h", "h", "def f(x):\n    return x + 1\n", "f");
        let unit = p.parse().unwrap();
        let cfg = build_cfg(&unit, "f").unwrap();
        (p, unit, cfg)
    }

    #[test]
    fn mock_trace_parses_with_argument_binding() {
        let (p, unit, cfg) = inc();
        let t = Traceable { program: &p, unit: &unit, cfg: &cfg };
        let a = trace_once(&MockBackend::default(), &t, &[Value::Int(4)], Prompting::Execute).unwrap();
        assert_eq!(a.calls, 1);
        assert_eq!(a.trace.final_output, Some(FinalOutput::Value(Value::Int(5))));
        assert_eq!(a.trace.steps[0].pre_state.get("x"), Some(&Value::Int(4)));
        assert_eq!(a.trace.program_id, "inc@h");
    }

    #[test]
    fn garbage_is_retried_once_then_failed() {
        let (p, unit, cfg) = inc();
        let t = Traceable { program: &p, unit: &unit, cfg: &cfg };
        let a = trace_once(&Fixed("no idea"), &t, &[Value::Int(4)], Prompting::Cot).unwrap();
        assert_eq!(a.calls, 2);
        assert_eq!(a.trace.verdict, Verdict::Problematic);
        assert_eq!(a.trace.final_output, Some(FinalOutput::Error("Unparseable".into())));
    }
}
