//! Runs the built-in corpus under the reference interpreter.

use reasonlab::corpus;
use reasonlab::lang::{parse, parse_literal, run_program, EvalStatus, Value, DEFAULT_STEP_BUDGET};

fn main() {
    for p in corpus::programs() {
        let unit = parse(p.source).expect("corpus parses");
        for (args, expected) in p.tests {
            let Ok(Value::List(args)) = parse_literal(args) else { panic!("bad args {args}") };
            let out = run_program(&unit, p.entry, &args, DEFAULT_STEP_BUDGET);
            let shown = match &out.status {
                EvalStatus::Returned(v) => v.to_string(),
                other => format!("{other:?}"),
            };
            let mark = if shown == *expected { "ok" } else { "MISMATCH" };
            println!("{:<24} {}{} = {shown} [{mark}, {} steps]", p.name, p.entry, Value::List(args.clone()), out.steps_executed);
        }
    }
}
