//! Applies every deterministic mutation to a program and checks equivalence.

use reasonlab::corpus;
use reasonlab::lang::{parse, parse_literal, Value};
use reasonlab::mutator::{mutate_deterministic, verify_mutant, MutationOp};

fn main() {
    let p = corpus::find("special_filter").unwrap();
    let unit = parse(p.source).unwrap();
    let tests: Vec<Vec<Value>> = p
        .tests
        .iter()
        .map(|(a, _)| match parse_literal(a) {
            Ok(Value::List(items)) => items.as_ref().clone(),
            _ => unreachable!(),
        })
        .collect();
    for op in MutationOp::all_default() {
        match mutate_deterministic(&unit, p.entry, &op, 3) {
            Ok(m) => {
                println!("== {} (coverage {:.2})", op.name(), m.correspondence.coverage);
                print!("{}", m.text);
                println!("-> {:?}\n", verify_mutant(&unit, p.entry, &m, &tests));
            }
            Err(e) => println!("== {}: {e}\n", op.name()),
        }
    }
}
