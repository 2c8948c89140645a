//! A mock reasoner mis-judges `-33 > 10`; chain-of-thought keeps the wrong
//! count while the mutate, trace and inspect loop repairs it.

use reasonlab::backend::{FaultKind, FaultSpec, MockBackend};
use reasonlab::corpus;
use reasonlab::pipeline::{evaluate_instance, parse_test, Instance, Strategy, StrategyKind};

fn main() {
    let p = corpus::find("special_filter").unwrap();
    let instance = Instance {
        id: "special_filter".into(),
        task: None,
        entry_point: p.entry.into(),
        solutions: [("human".to_string(), p.source.to_string())].into(),
        tests: vec![parse_test("[[71, -2, -33, 75, 21, 19]] => 3").unwrap()],
    };
    let fault = FaultSpec {
        id: "minus-33".into(),
        program_id: instance.program_id("human"),
        input: None,
        kind: FaultKind::WrongBranch,
        site: 4,
        delta: 0,
    };
    let mock = MockBackend::new(vec![fault]);
    for kind in [StrategyKind::Cot, StrategyKind::Remind] {
        let e = evaluate_instance(&instance, "human", &Strategy::with_defaults(kind), &mock);
        let v = &e.run.verdicts[0];
        let out = v.predicted.as_ref().map(|o| o.to_string()).unwrap_or_default();
        println!("{kind:<8} OUTPUT {out} (correct: {}, rounds: {}, calls: {})", v.correct, v.rounds, e.run.calls);
        for x in &e.transcript {
            if x.role == "refine" {
                println!("--- refined answer\n{}", x.response.trim_end());
            }
        }
    }
}
