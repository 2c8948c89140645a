mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use reasonlab::backend::{
    BackendError, CachedBackend, ChatRequest, Counting, FaultKind, FaultSpec, MockBackend, Reasoner,
};
use reasonlab::cfg::{build_cfg, stmt_for_node, Cfg, EdgeKind, NodeKind};
use reasonlab::executor::{trace_bundle, Traceable};
use reasonlab::inspector::{check_trace, synthesize_feedback, Detail};
use reasonlab::lang::{eval_expr, parse, parse_expr, run_program, Env, StmtKind, Value, DEFAULT_STEP_BUDGET};
use reasonlab::mutator::{mutate_deterministic, MutationOp, Relation};
use reasonlab::pipeline::{
    cross_matrix, evaluate_instance, read_runs, runs_accuracy, write_runs, NamedBackend, RunReport, Strategy,
    StrategyKind,
};
use reasonlab::program::SourceProgram;
use reasonlab::prompts::execute_request;
use reasonlab::trace::{oracle_trace, parse_trace_text_with, render_trace};

use common::{cases, corpus_instance};

fn topology(cfg: &Cfg) -> (Vec<NodeKind>, Vec<(usize, usize, EdgeKind)>) {
    let pos: BTreeMap<&str, usize> = cfg.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let kinds = cfg.nodes.iter().map(|n| n.kind).collect();
    let mut edges: Vec<_> = cfg.edges.iter().map(|e| (pos[e.from.as_str()], pos[e.to.as_str()], e.kind)).collect();
    edges.sort_by_key(|(a, b, k)| (*a, *b, k.as_str()));
    (kinds, edges)
}

#[test]
fn oracle_output_matches_interpreter() {
    for c in cases() {
        for input in &c.inputs {
            let t = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            let run = run_program(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            assert_eq!(t.output_value(), run.returned(), "{}", c.program.name);
        }
    }
}

#[test]
fn cfg_ids_are_stable_and_branches_total() {
    for c in cases() {
        let again = build_cfg(&parse(c.program.source).unwrap(), c.program.entry).unwrap();
        let ids: Vec<&str> = c.cfg.nodes.iter().map(|n| n.id.as_str()).collect();
        let ids2: Vec<&str> = again.nodes.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ids2);
        for n in c.cfg.nodes.iter().filter(|n| n.kind.is_decision()) {
            let decisions: Vec<bool> = c.cfg.successors(&n.id).filter_map(|e| e.kind.decision()).collect();
            assert_eq!(decisions.iter().filter(|d| **d).count(), 1, "{} {}", c.program.name, n.id);
            assert_eq!(decisions.iter().filter(|d| !**d).count(), 1, "{} {}", c.program.name, n.id);
        }
    }
}

#[test]
fn renaming_preserves_cfg_topology() {
    for c in cases() {
        let m = mutate_deterministic(&c.unit, c.program.entry, &MutationOp::rename(), 1).unwrap();
        assert_eq!(topology(&c.cfg), topology(&m.cfg()), "{}", c.program.name);
    }
}

#[test]
fn oracle_paths_are_feasible() {
    for c in cases() {
        for input in &c.inputs {
            let t = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            let mut prev = c.cfg.entry.clone();
            for s in &t.steps {
                let node = c.cfg.locate_node(s.line).expect("mapped").to_string();
                assert!(c.cfg.is_step_feasible(&prev, &node), "{} {prev}->{node}", c.program.name);
                prev = node;
            }
        }
    }
}

#[test]
fn trace_round_trip_over_corpus() {
    for c in cases() {
        for input in &c.inputs {
            let t = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            let text = render_trace(&t).unwrap();
            let initial = t.steps[0].pre_state.clone();
            let back = parse_trace_text_with(&text, &c.cfg, &initial).trace.unwrap();
            assert_eq!(back.steps.len(), t.steps.len());
            assert_eq!(back.final_output, t.final_output);
            for (a, b) in back.steps.iter().zip(&t.steps) {
                assert_eq!(a.post_state, b.post_state, "{} step {}", c.program.name, a.index);
                assert_eq!(a.pre_state, b.pre_state);
                assert_eq!(a.branch, b.branch);
            }
        }
    }
}

#[test]
fn validation_is_idempotent_and_guidance_names_real_edges() {
    for c in cases() {
        let input = &c.inputs[0];
        let truth = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
        let branches = truth.steps.iter().filter(|s| s.branch.is_some()).count();
        for site in 1..=branches {
            let fault = FaultSpec { id: "f".into(), program_id: "p".into(), input: None, kind: FaultKind::WrongBranch, site, delta: 0 };
            let (Some(t), _) = MockBackend::simulate(&c.unit, &c.cfg, c.program.entry, input, &[fault]) else { continue };
            let first = check_trace(&t, &c.cfg, &c.unit);
            assert_eq!(first, check_trace(&t, &c.cfg, &c.unit));
            let Some(fb) = synthesize_feedback(&first.diagnoses, &c.cfg) else { continue };
            let focus = fb.focus();
            let from = match &focus.detail {
                Detail::Edge { from, .. } => from.clone(),
                _ => focus.node.clone(),
            };
            let mut rest = fb.suggestion.as_str();
            while let Some(i) = rest.find("take the ") {
                let words: Vec<&str> = rest[i + 9..].split_whitespace().collect();
                let (kind, to) = (words[0], words[4]);
                assert!(
                    c.cfg.edges.iter().any(|e| e.from == from && e.to == to && e.kind.as_str() == kind),
                    "{}: {}",
                    c.program.name,
                    fb.suggestion
                );
                rest = &rest[i + 9..];
            }
        }
    }
}

#[test]
fn wrong_branch_matches_oracle_up_to_the_site() {
    for c in cases() {
        for input in &c.inputs {
            let truth = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            let sites: Vec<usize> = truth
                .steps
                .iter()
                .filter(|s| s.branch.is_some())
                .filter(|s| condition(&c.cfg, &c.unit, c.program.entry, c.cfg.locate_node(s.line).unwrap()).is_some())
                .map(|s| s.index)
                .collect();
            for (ordinal, &at) in sites.iter().enumerate() {
                let fault = FaultSpec {
                    id: "f".into(),
                    program_id: "p".into(),
                    input: None,
                    kind: FaultKind::WrongBranch,
                    site: ordinal + 1,
                    delta: 0,
                };
                let (Some(t), realized) = MockBackend::simulate(&c.unit, &c.cfg, c.program.entry, input, &[fault]) else {
                    panic!("simulation")
                };
                assert_eq!(realized.len(), 1);
                assert_eq!(realized[0].step, at);
                assert_eq!(&t.steps[..at - 1], &truth.steps[..at - 1]);
                assert_eq!(t.steps[at - 1].branch, truth.steps[at - 1].branch.map(|b| !b));
            }
        }
    }
}

#[test]
fn deterministic_mutants_parse_and_are_seed_stable() {
    for c in cases() {
        for op in MutationOp::all_default() {
            let Ok(a) = mutate_deterministic(&c.unit, c.program.entry, &op, 5) else { continue };
            let b = mutate_deterministic(&c.unit, c.program.entry, &op, 5).unwrap();
            assert_eq!(a.text, b.text);
            assert!(parse(&a.text).is_ok(), "{} {}", c.program.name, op.name());
        }
    }
}

fn condition(cfg: &Cfg, unit: &reasonlab::lang::AstUnit, entry: &str, node: &str) -> Option<reasonlab::lang::Expr> {
    let func = unit.function(entry)?;
    let n = cfg.node(node)?;
    match &stmt_for_node(func, n)?.kind {
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => Some(cond.clone()),
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn run_program_is_deterministic_and_budget_monotone(pick in 0usize..1000, extra in 1u64..1000) {
        let cs = cases();
        let c = &cs[pick % cs.len()];
        let input = &c.inputs[pick % c.inputs.len()];
        let a = run_program(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
        let b = run_program(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
        prop_assert_eq!(&a, &b);
        let tight = a.steps_executed;
        let at = run_program(&c.unit, c.program.entry, input, tight);
        let more = run_program(&c.unit, c.program.entry, input, tight + extra);
        prop_assert_eq!(&at.status, &a.status);
        prop_assert_eq!(&more.status, &a.status);
    }

    #[test]
    fn eval_expr_leaves_state_untouched(x in -50i64..50, y in -50i64..50, items in prop::collection::vec(-9i64..9, 0..6)) {
        let mut state = Env::new();
        state.insert("x".into(), Value::Int(x));
        state.insert("y".into(), Value::Int(y));
        state.insert("xs".into(), Value::list(items.into_iter().map(Value::Int).collect()));
        let before = state.clone();
        for src in ["x + y * 2", "x > y and len(xs) > 0", "[v * x for v in xs]", "xs[x % 3] if False else 0", "sum(xs) // (y or 1)", "not (x <= y)"] {
            if let Ok(e) = parse_expr(src) {
                let _ = eval_expr(&e, &state);
            }
            prop_assert_eq!(&state, &before);
        }
    }

    #[test]
    fn corresponding_conditions_agree(pick in 0usize..1000, seed in 0u64..20, values in prop::collection::vec(-30i64..30, 16)) {
        let cs = cases();
        let c = &cs[pick % cs.len()];
        for op in [MutationOp::rename(), MutationOp::negate(), MutationOp::continue_guard()] {
            let Ok(m) = mutate_deterministic(&c.unit, c.program.entry, &op, seed) else { continue };
            let base_vars = c.unit.function(c.program.entry).unwrap().variables();
            let var_vars = m.ast.function(c.program.entry).unwrap().variables();
            let renamed: BTreeMap<String, String> = if matches!(op, MutationOp::RenameVars { .. }) {
                base_vars.iter().cloned().zip(var_vars.iter().cloned()).collect()
            } else {
                base_vars.iter().map(|v| (v.clone(), v.clone())).collect()
            };
            let base_state: Env = base_vars.iter().enumerate().map(|(i, v)| (v.clone(), Value::Int(values[i % values.len()]))).collect();
            let var_state: Env = base_state.iter().map(|(k, v)| (renamed[k].clone(), v.clone())).collect();
            let vcfg = m.cfg();
            for (vnode, (bnode, rel)) in &m.correspondence.mapping {
                if *rel == Relation::Scaffold {
                    continue;
                }
                prop_assert_eq!(vcfg.node(vnode).unwrap().kind, c.cfg.node(bnode).unwrap().kind);
                let (Some(bc), Some(vc)) = (
                    condition(&c.cfg, &c.unit, c.program.entry, bnode),
                    condition(&vcfg, &m.ast, c.program.entry, vnode),
                ) else { continue };
                let (Ok(b), Ok(v)) = (eval_expr(&bc, &base_state), eval_expr(&vc, &var_state)) else { continue };
                let expect = if *rel == Relation::Negated { !b.truthy() } else { b.truthy() };
                prop_assert_eq!(v.truthy(), expect, "{} {}", c.program.name, op.name());
            }
        }
    }

    #[test]
    fn shuffled_step_indices_are_renumbered(swap in 0usize..20) {
        let c = &cases()[0];
        let t = oracle_trace(&c.unit, c.program.entry, &c.inputs[0], DEFAULT_STEP_BUDGET);
        let mut lines: Vec<String> = render_trace(&t).unwrap().lines().map(str::to_string).collect();
        let i = swap % (lines.len() - 2);
        lines.swap(i, i + 1);
        let report = parse_trace_text_with(&lines.join("\n"), &c.cfg, &t.steps[0].pre_state);
        let parsed = report.trace.unwrap();
        prop_assert!(report.reorder_warnings > 0);
        prop_assert!(parsed.steps.windows(2).all(|w| w[0].index < w[1].index));
    }
}

#[test]
fn mock_is_deterministic_and_cache_is_transparent() {
    let p = SourceProgram::new("sf@h", "h", reasonlab::corpus::find("special_filter").unwrap().source, "specialFilter");
    let fault = FaultSpec { id: "f".into(), program_id: "sf@h".into(), input: None, kind: FaultKind::WrongBranch, site: 4, delta: 0 };
    let mock = MockBackend::new(vec![fault]);
    let req = execute_request(&p, &common::args("[[71, -2, -33, 75, 21, 19]]"));
    let a = mock.complete(&req).unwrap();
    assert_eq!(a, mock.complete(&req).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let cached = CachedBackend::new(mock.clone(), dir.path(), "mock://");
    assert_eq!(cached.complete(&req).unwrap(), a);
    assert_eq!(cached.complete(&req).unwrap(), a);
    assert_eq!(cached.transport_calls(), 1);
}

#[test]
fn call_count_matches_backend_and_stays_under_ceiling() {
    let inst = corpus_instance("special_filter", &["h"]);
    let fault = FaultSpec { id: "f".into(), program_id: inst.program_id("h"), input: None, kind: FaultKind::WrongBranch, site: 1, delta: 0 };
    let mock = MockBackend::new(vec![fault]);
    for kind in StrategyKind::ALL {
        let strategy = Strategy::with_defaults(kind);
        let counting = Counting::new(&mock);
        let e = evaluate_instance(&inst, "h", &strategy, &counting);
        assert_eq!(e.run.calls, counting.calls(), "{kind}");
        assert!(e.run.calls <= strategy.call_ceiling(inst.tests.len()), "{kind}");
        for b in &e.bundles {
            assert!(b.variants.iter().all(|(_, t)| t.input == b.input && t.input == b.original.input));
        }
    }
}

struct BreaksVariant(MockBackend);

impl Reasoner for BreaksVariant {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if request.messages[1].content.contains("#m1") {
            return Err(BackendError::Transport("down".into()));
        }
        self.0.complete(request)
    }

    fn name(&self) -> String {
        "breaks".into()
    }
}

#[test]
fn failed_variant_does_not_abort_the_bundle() {
    let c = &cases()[0];
    let p = SourceProgram::new("sf@h", "h", c.program.source, c.program.entry);
    let v1 = SourceProgram::new("sf@h#m1", "h", c.program.source, c.program.entry);
    let v2 = SourceProgram::new("sf@h#m2", "h", c.program.source, c.program.entry);
    let orig = Traceable { program: &p, unit: &c.unit, cfg: &c.cfg };
    let vars = [Traceable { program: &v1, unit: &c.unit, cfg: &c.cfg }, Traceable { program: &v2, unit: &c.unit, cfg: &c.cfg }];
    let (bundle, _, _) = trace_bundle(&BreaksVariant(MockBackend::default()), &orig, &vars, &c.inputs[0]).unwrap();
    assert!(bundle.variants[0].1.steps.is_empty());
    assert_eq!(bundle.variants[1].1.output_value(), Some(&Value::Int(3)));
    assert_eq!(bundle.original.output_value(), Some(&Value::Int(3)));
}

#[test]
fn degenerate_remind_equals_cot() {
    let insts: Vec<_> = ["special_filter", "fib", "below_zero"].iter().map(|n| corpus_instance(n, &["h"])).collect();
    let faults: Vec<FaultSpec> = insts
        .iter()
        .map(|i| FaultSpec { id: i.id.clone(), program_id: i.program_id("h"), input: None, kind: FaultKind::WrongBranch, site: 2, delta: 0 })
        .collect();
    let mock = MockBackend::new(faults);
    for inst in &insts {
        let cot = evaluate_instance(inst, "h", &Strategy::new(StrategyKind::Cot, 2, 2), &mock);
        let remind = evaluate_instance(inst, "h", &Strategy::new(StrategyKind::Remind, 0, 0), &mock);
        let a: Vec<_> = cot.run.verdicts.iter().map(|v| (v.predicted.clone(), v.correct)).collect();
        let b: Vec<_> = remind.run.verdicts.iter().map(|v| (v.predicted.clone(), v.correct)).collect();
        assert_eq!(a, b, "{}", inst.id);
    }
}

#[test]
fn reports_are_recomputable_order_independent_and_reproducible() {
    let insts: Vec<_> = ["special_filter", "fib", "gcd", "unique"].iter().map(|n| corpus_instance(n, &["a", "b"])).collect();
    let origins = vec!["a".to_string(), "b".to_string()];
    let plan = reasonlab::pipeline::fault_plan(&insts, &origins, 0.5, 11);
    let backends = [NamedBackend::new("mock", Arc::new(MockBackend::new(plan)))];
    let strategies = [Strategy::with_defaults(StrategyKind::Cot), Strategy::with_defaults(StrategyKind::Remind)];
    let one = cross_matrix(&insts, &origins, &strategies, &backends, 3).report;
    let two = cross_matrix(&insts, &origins, &strategies, &backends, 1).report;
    assert_eq!(one.matrix_csv(), two.matrix_csv());
    assert_eq!(serde_json::to_string(&one.runs).unwrap(), serde_json::to_string(&two.runs).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verdicts.jsonl");
    write_runs(&path, &one.runs).unwrap();
    let mut back = read_runs(&path).unwrap();
    assert_eq!(runs_accuracy(&back), runs_accuracy(&one.runs));
    back.reverse();
    assert_eq!(RunReport::from_runs(back), one);
}
