//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test --test acceptance -- --nocapture` to see the results.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reasonlab::backend::{FaultKind, FaultSpec, MockBackend};
use reasonlab::inspector::{check_trace, validate_trace, DiagnosisKind};
use reasonlab::lang::{parse, run_program, EvalStatus, Value, DEFAULT_STEP_BUDGET};
use reasonlab::mutator::{mutate_deterministic, verify_mutant, Equivalence, MutationOp};
use reasonlab::pipeline::{
    accuracy, cross_matrix, dataset_origins, fault_plan, filter_benchmark, read_dataset, NamedBackend, Strategy,
    StrategyKind,
};
use reasonlab::trace::{oracle_trace, FinalOutput};

use common::{args, cases, corpus_instance};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn golden() -> Outcome {
    let checks = [
        ("def specialFilter(nums):\n    count = 0\n    for num in nums:\n        if num > 10:\n            num_str = str(abs(num))\n            first_digit = int(num_str[0])\n            last_digit = int(num_str[-1])\n            if first_digit % 2 == 1 and last_digit % 2 == 1:\n                count += 1\n    return count\n", "specialFilter", "[[71, -2, -33, 75, 21, 19]]", Value::Int(3)),
        ("def minSubArraySum(nums):\n    min_sum = float('inf')\n    cur_sum = 0\n    for num in nums:\n        cur_sum += num\n        if cur_sum < min_sum:\n            min_sum = cur_sum\n        if cur_sum > 0:\n            cur_sum = 0\n    return min_sum\n", "minSubArraySum", "[[100, -33, 32, -1, 0, -2]]", Value::Int(-33)),
        ("def incr_list(l):\n    return [e + 1 for e in l]\n", "incr_list", "[[1, 2, 2, 1]]", Value::list(vec![Value::Int(2), Value::Int(3), Value::Int(3), Value::Int(2)])),
    ];
    let mut bad = Vec::new();
    for (src, entry, input, expected) in checks {
        let out = run_program(&parse(src).unwrap(), entry, &args(input), DEFAULT_STEP_BUDGET);
        match out.status {
            EvalStatus::Returned(v) if v == expected && v.type_name() == expected.type_name() => {}
            other => bad.push(format!("{entry}: {other:?}")),
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "3/3 exact".to_string() } else { bad.join("; ") })
}

fn zero_false_positives() -> Outcome {
    let cs = cases();
    let mut traces = 0;
    let mut flagged = Vec::new();
    for c in &cs {
        for input in &c.inputs {
            let mut t = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            traces += 1;
            if !validate_trace(&mut t, &c.cfg, &c.unit).is_empty() {
                flagged.push(format!("{}{}", c.program.name, Value::list(input.clone())));
            }
        }
    }
    let pass = cs.len() >= 30 && flagged.is_empty();
    outcome(pass, format!("{} programs, {traces} traces, {} flagged {:?}", cs.len(), flagged.len(), flagged))
}

fn fault_localization() -> Outcome {
    let (mut decidable, mut located, mut undecidable) = (0, 0, 0);
    let (mut relevant, mut surfaced) = (0, 0);
    let mut misses = Vec::new();
    for c in &cases() {
        for input in &c.inputs {
            let truth = oracle_trace(&c.unit, c.program.entry, input, DEFAULT_STEP_BUDGET);
            let fault = |kind, site| FaultSpec { id: "f".into(), program_id: "p".into(), input: None, kind, site, delta: 0 };
            for site in 1.. {
                let (Some(t), realized) =
                    MockBackend::simulate(&c.unit, &c.cfg, c.program.entry, input, &[fault(FaultKind::WrongBranch, site)])
                else {
                    break;
                };
                let Some(hit) = realized.first() else { break };
                let report = check_trace(&t, &c.cfg, &c.unit);
                if report.undecidable_steps().contains(&hit.step) {
                    undecidable += 1;
                    continue;
                }
                decidable += 1;
                let node = hit.node.clone().unwrap_or_default();
                if report.diagnoses.iter().any(|d| d.kind == DiagnosisKind::ConditionMismatch && d.step == hit.step && d.node == node) {
                    located += 1;
                } else {
                    misses.push(format!("{} wrong_branch#{site}", c.program.name));
                }
            }
            for site in 1..=truth.steps.len() {
                let (Some(t), realized) =
                    MockBackend::simulate(&c.unit, &c.cfg, c.program.entry, input, &[fault(FaultKind::StaleUpdate, site)])
                else {
                    continue;
                };
                let Some(hit) = realized.first() else { continue };
                let changes_output = match (&t.final_output, &truth.final_output) {
                    (Some(a), Some(b)) => !a.matches(b),
                    _ => true,
                };
                if !changes_output {
                    continue;
                }
                relevant += 1;
                let report = check_trace(&t, &c.cfg, &c.unit);
                if report.diagnoses.iter().any(|d| d.kind == DiagnosisKind::StateMismatch && d.step >= 1 && d.step <= hit.step) {
                    surfaced += 1;
                } else {
                    misses.push(format!("{} stale_update@{site}", c.program.name));
                }
            }
        }
    }
    let pass = decidable > 0 && located == decidable && surfaced == relevant;
    misses.truncate(5);
    outcome(
        pass,
        format!(
            "wrong_branch {located}/{decidable} decidable sites ({undecidable} undecidable); stale_update {surfaced}/{relevant} output-changing {misses:?}"
        ),
    )
}

fn case_study() -> Outcome {
    let inst = {
        let mut i = corpus_instance("special_filter", &["human"]);
        i.tests.truncate(1);
        i
    };
    let fault = FaultSpec {
        id: "minus-33".into(),
        program_id: inst.program_id("human"),
        input: None,
        kind: FaultKind::WrongBranch,
        site: 4,
        delta: 0,
    };
    let mock = MockBackend::new(vec![fault]);
    let cot = reasonlab::pipeline::evaluate_instance(&inst, "human", &Strategy::with_defaults(StrategyKind::Cot), &mock);
    let remind = reasonlab::pipeline::evaluate_instance(&inst, "human", &Strategy::with_defaults(StrategyKind::Remind), &mock);
    let cot_out = cot.run.verdicts[0].predicted.clone();
    let rem = &remind.run.verdicts[0];
    let pass = cot_out == Some(FinalOutput::Value(Value::Int(4)))
        && rem.predicted == Some(FinalOutput::Value(Value::Int(3)))
        && rem.rounds <= 2
        && remind.run.calls <= 1 + 3 + 2;
    let show = |o: &Option<FinalOutput>| o.as_ref().map(|o| o.to_string()).unwrap_or_default();
    outcome(
        pass,
        format!("cot OUTPUT {}, remind OUTPUT {} after {} round(s), {} calls", show(&cot_out), show(&rem.predicted), rem.rounds, remind.run.calls),
    )
}

/// Independent recomputation: count rows without a zero.
fn brute_force_accuracy(matrix: &[Vec<bool>]) -> f64 {
    let mut passed = 0u64;
    for row in matrix {
        let mut product = 1u64;
        for &c in row {
            product *= u64::from(c);
        }
        passed += product;
    }
    if matrix.is_empty() {
        0.0
    } else {
        passed as f64 / matrix.len() as f64
    }
}

fn accuracy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let p_fail: f64 = rng.random_range(0.0..0.3);
        let matrix: Vec<Vec<bool>> =
            (0..n).map(|_| (0..rng.random_range(1..16)).map(|_| !rng.random_bool(p_fail)).collect()).collect();
        if accuracy(&matrix) != brute_force_accuracy(&matrix) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 matrices, {mismatches} mismatches"))
}

fn mutant_equivalence() -> Outcome {
    let (mut applied, mut equivalent) = (0, 0);
    let mut deviants = Vec::new();
    for c in &cases() {
        for op in MutationOp::all_default() {
            for seed in 0..3 {
                let Ok(m) = mutate_deterministic(&c.unit, c.program.entry, &op, seed) else { continue };
                applied += 1;
                match verify_mutant(&c.unit, c.program.entry, &m, &c.inputs) {
                    Equivalence::Equivalent => equivalent += 1,
                    other => deviants.push(format!("{} {} {other:?}", c.program.name, op.name())),
                }
            }
        }
    }
    outcome(applied > 0 && equivalent == applied, format!("{equivalent}/{applied} equivalent {deviants:?}"))
}

fn ablation_ordering() -> Outcome {
    let instances = read_dataset(&common::sample_path()).expect("sample dataset");
    let origins = dataset_origins(&instances);
    let run = |seed: u64| {
        let plan = fault_plan(&instances, &origins, 0.4, seed);
        let backends = [NamedBackend::new("mock", Arc::new(MockBackend { faults: plan.clone(), seed }))];
        let strategies: Vec<Strategy> = StrategyKind::ALL.iter().map(|k| Strategy::with_defaults(*k)).collect();
        (plan, cross_matrix(&instances, &origins, &strategies, &backends, 4).report)
    };
    let (plan, report) = run(17);
    let (plan2, again) = run(17);
    let acc = |k| report.strategy_accuracy(k).unwrap_or(-1.0);
    let (remind, no_mut, no_insp, vote, cot) = (
        acc(StrategyKind::Remind),
        acc(StrategyKind::RemindNoMutator),
        acc(StrategyKind::RemindNoInspector),
        acc(StrategyKind::MutationVote),
        acc(StrategyKind::Cot),
    );
    let faulted: std::collections::BTreeSet<&str> =
        plan.iter().map(|f| f.program_id.split('@').next().unwrap_or_default()).collect();
    let rate_ok = faulted.len() == (instances.len() as f64 * 0.4).round() as usize;
    let deterministic = plan == plan2 && report == again;
    let pass = rate_ok && deterministic && remind >= no_mut && no_mut >= no_insp && no_insp == vote && vote >= cot && remind > cot;
    outcome(
        pass,
        format!(
            "remind {remind:.3} >= no_mutator {no_mut:.3} >= no_inspector {no_insp:.3} (= vote {vote:.3}) >= cot {cot:.3}; {}/{} instances faulted; deterministic={deterministic}",
            faulted.len(),
            instances.len()
        ),
    )
}

fn filter_idempotence() -> Outcome {
    let raw = read_dataset(&common::raw_path()).expect("raw dataset");
    let origins = dataset_origins(&raw);
    let (kept, drops) = filter_benchmark(&raw, &origins, DEFAULT_STEP_BUDGET);
    let (again, drops2) = filter_benchmark(&kept, &origins, DEFAULT_STEP_BUDGET);
    let pass = !kept.is_empty() && again == kept && drops2.is_empty();
    outcome(pass, format!("first pass {}/{} ({} drops), second pass {}/{} ({} drops)", kept.len(), raw.len(), drops.len(), again.len(), kept.len(), drops2.len()))
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("interpreter golden outputs", Duration::from_secs(1), golden),
        ("inspector zero false positives", Duration::from_secs(10), zero_false_positives),
        ("fault detection and localization", Duration::from_secs(30), fault_localization),
        ("case study end to end (mock)", Duration::from_secs(5), case_study),
        ("accuracy metric oracle equivalence", Duration::from_secs(1), accuracy_oracle),
        ("deterministic mutant equivalence", Duration::from_secs(10), mutant_equivalence),
        ("ablation ordering under seeded faults", Duration::from_secs(60), ablation_ordering),
        ("filter protocol idempotence", Duration::from_secs(5), filter_idempotence),
    ];
    let start = Instant::now();
    let mut failed = Vec::new();
    for (name, limit, check) in criteria {
        let t0 = Instant::now();
        let o = check();
        let took = t0.elapsed();
        let pass = o.pass && took <= limit;
        println!("{} {name} [{:.2}s / {}s] {}", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64(), limit.as_secs(), o.detail);
        if !pass {
            failed.push(name);
        }
    }
    let total = start.elapsed();
    let suite_ok = total <= Duration::from_secs(120);
    println!(
        "{} offline suite under two minutes [{:.2}s of acceptance checks; live smoke test is #[ignore]d]",
        if suite_ok { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    if !suite_ok {
        failed.push("offline suite under two minutes");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
