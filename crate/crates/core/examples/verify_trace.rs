//! Validates an oracle trace, then a copy with the `-33` branch flipped.

use reasonlab::cfg::build_cfg;
use reasonlab::corpus;
use reasonlab::inspector::{synthesize_feedback, validate_trace};
use reasonlab::lang::{parse, parse_literal, Value, DEFAULT_STEP_BUDGET};
use reasonlab::trace::{oracle_trace, parse_trace_text_with, render_trace};

fn main() {
    let p = corpus::find("special_filter").unwrap();
    let unit = parse(p.source).unwrap();
    let cfg = build_cfg(&unit, p.entry).unwrap();
    let Ok(Value::List(args)) = parse_literal("[[71, -2, -33, 75, 21, 19]]") else { unreachable!() };

    let mut truth = oracle_trace(&unit, p.entry, &args, DEFAULT_STEP_BUDGET);
    let text = render_trace(&truth).unwrap();
    println!("{text}");
    println!("oracle diagnoses: {}", validate_trace(&mut truth, &cfg, &unit).len());

    let doctored: String = text
        .lines()
        .map(|l| if l.contains("LINE 4 ") && l.contains("num=-33") { l.replace("BRANCH false", "BRANCH true") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let initial = truth.steps[0].pre_state.clone();
    let mut parsed = parse_trace_text_with(&doctored, &cfg, &initial).trace.unwrap();
    let diags = validate_trace(&mut parsed, &cfg, &unit);
    println!("doctored verdict: {:?}", parsed.verdict);
    print!("{}", synthesize_feedback(&diags, &cfg).unwrap().render());
}
