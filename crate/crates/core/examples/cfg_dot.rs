//! Prints the control-flow graph of a program as Graphviz DOT.
//!
//! `cargo run --example cfg_dot [file.py]` (defaults to a corpus program).

use reasonlab::cfg::build_all;
use reasonlab::corpus;
use reasonlab::lang::parse;

fn main() {
    let source = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable source"),
        None => corpus::find("special_filter").unwrap().source.to_string(),
    };
    let unit = parse(&source).unwrap_or_else(|e| panic!("{e}"));
    for cfg in build_all(&unit) {
        println!("{}", cfg.to_dot());
    }
}
