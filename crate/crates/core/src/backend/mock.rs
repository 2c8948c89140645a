use serde::{Deserialize, Serialize};

use super::{BackendError, ChatRequest, Reasoner};
use crate::cfg::{build_cfg, Cfg};
use crate::inspector::parse_diagnosis_line;
use crate::lang::{parse, AstUnit, Env, Value, DEFAULT_STEP_BUDGET};
use crate::mutator::{default_recipe, render_variants};
use crate::prompts::{parse_program_block, template_role, Role};
use crate::trace::{observed_trace, render_trace, StepHook, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Flip the decision at the n-th `if`/`elif`/`while` condition visited.
    WrongBranch,
    /// Drop the update made by the statement at step n.
    StaleUpdate,
    /// Add `delta` to the number assigned at step n.
    ValuePerturb,
}

/// One injected reasoning mistake.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub id: String,
    /// Program the fault applies to (`<instance>@<origin>`; variants add
    /// `#m<k>`).
    pub program_id: String,
    /// Input it applies to; `None` for every input.
    #[serde(default)]
    pub input: Option<Vec<Value>>,
    pub kind: FaultKind,
    /// Branch-occurrence ordinal for `wrong_branch`, step index otherwise
    /// (both 1-based).
    pub site: usize,
    #[serde(default)]
    pub delta: i64,
}

impl FaultSpec {
    fn applies(&self, program_id: &str, input: &[Value]) -> bool {
        self.program_id == program_id && self.input.as_deref().is_none_or(|i| i == input)
    }
}

/// Where a fault actually took effect in a simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedFault {
    pub id: String,
    pub step: usize,
    pub line: u32,
    pub node: Option<String>,
}

struct FaultHook<'f> {
    faults: &'f [FaultSpec],
    branches: usize,
    realized: Vec<(String, usize, u32)>,
}

impl StepHook for FaultHook<'_> {
    fn decide(&mut self, index: usize, line: u32, actual: bool) -> bool {
        self.branches += 1;
        for f in self.faults {
            if f.kind == FaultKind::WrongBranch && f.site == self.branches {
                self.realized.push((f.id.clone(), index, line));
                return !actual;
            }
        }
        actual
    }

    fn adjust(&mut self, index: usize, line: u32, pre: &Env, post: &mut Env) {
        for f in self.faults {
            if f.site != index {
                continue;
            }
            match f.kind {
                FaultKind::StaleUpdate if post != pre => {
                    *post = pre.clone();
                    self.realized.push((f.id.clone(), index, line));
                }
                FaultKind::ValuePerturb => {
                    let changed = post.iter_mut().find(|(k, v)| pre.get(*k) != Some(&**v) && matches!(v, Value::Int(_) | Value::Float(_)));
                    if let Some((_, v)) = changed {
                        match v {
                            Value::Int(i) => *i = i.wrapping_add(f.delta),
                            Value::Float(x) => *x += f.delta as f64,
                            _ => {}
                        }
                        self.realized.push((f.id.clone(), index, line));
                    }
                }
                _ => {}
            }
        }
    }
}

/// Offline reasoner: answers tracing requests with the interpreter's true
/// trace, distorted by the configured faults, and mutation requests with the
/// deterministic variant recipe.
///
/// The mock keeps no conversation state. On a refinement request it replays
/// the feedback found in the conversation, in order, and drops each fault
/// whose realized step (and node, when given) a `DIAGNOSIS` line names.
#[derive(Clone, Debug, Default)]
pub struct MockBackend {
    pub faults: Vec<FaultSpec>,
    pub seed: u64,
}

impl MockBackend {
    pub fn new(faults: Vec<FaultSpec>) -> Self {
        MockBackend { faults, seed: 0 }
    }

    /// Simulates `entry(input)` with `faults` active.
    pub fn simulate(unit: &AstUnit, cfg: &Cfg, entry: &str, input: &[Value], faults: &[FaultSpec]) -> (Option<Trace>, Vec<RealizedFault>) {
        let mut hook = FaultHook { faults, branches: 0, realized: Vec::new() };
        let trace = observed_trace(unit, cfg, entry, input, DEFAULT_STEP_BUDGET, Some(&mut hook));
        let realized = hook
            .realized
            .into_iter()
            .map(|(id, step, line)| RealizedFault { id, step, line, node: cfg.locate_node(line).map(str::to_string) })
            .collect();
        (trace, realized)
    }

    fn trace_response(&self, request: &ChatRequest, role: Role) -> Result<String, BackendError> {
        let block = request
            .messages
            .get(1)
            .and_then(|m| parse_program_block(&m.content))
            .ok_or_else(|| BackendError::BadRequest("no program block".into()))?;
        let input = block.input.clone().ok_or_else(|| BackendError::BadRequest("no INPUT line".into()))?;
        let Ok(unit) = parse(&block.source) else {
            return Ok("I could not follow this program.".into());
        };
        let Ok(cfg) = build_cfg(&unit, &block.entry) else {
            return Ok("The entry function is missing.".into());
        };
        let mut active: Vec<FaultSpec> = self.faults.iter().filter(|f| f.applies(&block.id, &input)).cloned().collect();
        for msg in request.messages.iter().skip(2).filter(|m| m.role == "user") {
            let Some((step, node, _)) = parse_diagnosis_line(&msg.content) else { continue };
            let (_, realized) = Self::simulate(&unit, &cfg, &block.entry, &input, &active);
            let hit = realized.iter().find(|r| r.step == step && (node == "-" || r.node.as_deref() == Some(node.as_str())));
            if let Some(hit) = hit {
                active.retain(|f| f.id != hit.id);
            }
        }
        let (trace, _) = Self::simulate(&unit, &cfg, &block.entry, &input, &active);
        let text = trace.and_then(|t| render_trace(&t).ok()).unwrap_or_else(|| "OUTPUT None\n".into());
        Ok(match role {
            Role::Cot => format!("Let me trace the execution step by step.\n{text}"),
            _ => text,
        })
    }

    fn mutate_response(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let block = request
            .messages
            .get(1)
            .and_then(|m| parse_program_block(&m.content))
            .ok_or_else(|| BackendError::BadRequest("no program block".into()))?;
        let Ok(unit) = parse(&block.source) else {
            return Ok("I could not rewrite this program.".into());
        };
        let k = block.variants.unwrap_or(2);
        let variants = default_recipe(&unit, &block.entry, &block.id, k, self.seed);
        Ok(format!("Here are {} variants.\n\n{}", variants.len(), render_variants(&variants, &unit, &block.entry)))
    }
}

impl Reasoner for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let role = request
            .messages
            .first()
            .and_then(|m| template_role(&m.content))
            .ok_or_else(|| BackendError::BadRequest("unknown prompt template".into()))?;
        match role {
            Role::Mutate => self.mutate_response(request),
            Role::Execute | Role::Cot | Role::Refine => self.trace_response(request, role),
        }
    }

    fn name(&self) -> String {
        "mock".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::lang::parse_literal;
    use crate::program::SourceProgram;
    use crate::prompts::{execute_request, refine_request};

    fn special() -> SourceProgram {
        SourceProgram::new("sf@human", "human", corpus::find("special_filter").unwrap().source, "specialFilter")
    }

    fn input() -> Vec<Value> {
        vec![parse_literal("[71, -2, -33, 75, 21, 19]").unwrap()]
    }

    fn wrong_branch_at_minus_33() -> FaultSpec {
        // Decisions: 71 > 10, parity(71), -2 > 10, -33 > 10.
        FaultSpec { id: "f1".into(), program_id: "sf@human".into(), input: None, kind: FaultKind::WrongBranch, site: 4, delta: 0 }
    }

    #[test]
    fn clean_mock_passes_oracle_through() {
        let p = SourceProgram::new("inc", "h", "def f(x):\n    return x + 1\n", "f");
        let out = MockBackend::default().complete(&execute_request(&p, &[Value::Int(1)])).unwrap();
        assert!(out.trim_end().ends_with("OUTPUT 2"), "{out}");
    }

    #[test]
    fn wrong_branch_flips_minus_33() {
        let mock = MockBackend::new(vec![wrong_branch_at_minus_33()]);
        let out = mock.complete(&execute_request(&special(), &input())).unwrap();
        assert!(out.trim_end().ends_with("OUTPUT 4"), "{out}");
    }

    #[test]
    fn matching_feedback_repairs_and_wrong_feedback_does_not() {
        let mock = MockBackend::new(vec![wrong_branch_at_minus_33()]);
        let req = execute_request(&special(), &input());
        let first = mock.complete(&req).unwrap();
        let step = first.lines().find(|l| l.contains("LINE 4 ") && l.contains("num=-33")).unwrap();
        let k: usize = step.split_whitespace().nth(1).unwrap().parse().unwrap();
        let good = refine_request(&req, &first, &format!("DIAGNOSIS step={k} node=- kind=condition_mismatch\n"));
        assert!(mock.complete(&good).unwrap().trim_end().ends_with("OUTPUT 3"));
        let bad = refine_request(&req, &first, "DIAGNOSIS step=1 node=- kind=condition_mismatch\n");
        assert_eq!(mock.complete(&bad).unwrap(), first);
    }
}
