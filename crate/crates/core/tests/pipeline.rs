mod common;

use std::sync::Arc;

use reasonlab::backend::{Counting, FaultKind, FaultSpec, MockBackend};
use reasonlab::executor::{refine, trace_once, Prompting, Traceable};
use reasonlab::inspector::{synthesize_feedback, validate_trace};
use reasonlab::lang::Value;
use reasonlab::mutator::{mutate_llm, verify_mutant, Equivalence};
use reasonlab::pipeline::{cross_matrix, fault_plan, read_dataset, NamedBackend, Strategy, StrategyKind};
use reasonlab::program::SourceProgram;
use reasonlab::trace::Verdict;

use common::{args, cases};

#[test]
fn backend_mutation_yields_equivalent_mapped_variants() {
    for c in cases().iter().take(12) {
        let p = SourceProgram::new(format!("{}@h", c.program.name), "h", c.program.source, c.program.entry);
        let mock = MockBackend::default();
        let counting = Counting::new(&mock);
        let (variants, calls) = mutate_llm(&p, &counting, 2).unwrap();
        assert_eq!(calls, 1);
        assert_eq!(counting.calls(), 1);
        assert_eq!(variants.len(), 2, "{}", c.program.name);
        for v in &variants {
            assert_eq!(verify_mutant(&c.unit, c.program.entry, v, &c.inputs), Equivalence::Equivalent);
            assert!(v.correspondence.coverage > 0.5, "{} {}", c.program.name, v.correspondence.coverage);
        }
    }
}

#[test]
fn refinement_repairs_only_the_named_fault() {
    let c = &cases()[0];
    let p = SourceProgram::new("sf@h", "h", c.program.source, c.program.entry);
    let t = Traceable { program: &p, unit: &c.unit, cfg: &c.cfg };
    let input = args("[[71, -2, -33, 75, 21, 19]]");
    let fault = FaultSpec { id: "f".into(), program_id: "sf@h".into(), input: None, kind: FaultKind::WrongBranch, site: 4, delta: 0 };
    let mock = MockBackend::new(vec![fault]);
    let mut first = trace_once(&mock, &t, &input, Prompting::Execute).unwrap();
    assert_eq!(first.trace.output_value(), Some(&Value::Int(4)));
    let diags = validate_trace(&mut first.trace, &c.cfg, &c.unit);
    assert_eq!(first.trace.verdict, Verdict::Problematic);
    let fb = synthesize_feedback(&diags, &c.cfg).unwrap();
    let fixed = refine(&mock, &t, &first, &fb.render()).unwrap();
    assert_eq!(fixed.trace.output_value(), Some(&Value::Int(3)));
    let unchanged = refine(&mock, &t, &first, "DIAGNOSIS step=2 node=- kind=state_mismatch\n").unwrap();
    assert_eq!(unchanged.trace.steps, first.trace.steps);
}

#[test]
fn faults_on_one_origin_lower_only_its_cells() {
    let instances = read_dataset(&common::sample_path()).unwrap();
    let origins = vec!["model_a".to_string(), "model_b".to_string()];
    let plan = fault_plan(&instances, &origins[1..], 0.5, 9);
    let backends = [NamedBackend::new("mock", Arc::new(MockBackend::new(plan)))];
    let grid = cross_matrix(&instances, &origins, &[Strategy::with_defaults(StrategyKind::Cot)], &backends, 4);
    let r = &grid.report;
    let a = r.cell("mock", "model_a", StrategyKind::Cot).unwrap().accuracy.unwrap();
    let b = r.cell("mock", "model_b", StrategyKind::Cot).unwrap().accuracy.unwrap();
    assert_eq!(a, 1.0);
    assert!(b < a);
    assert!(r.dispersion[0].std > 0.0);
}
