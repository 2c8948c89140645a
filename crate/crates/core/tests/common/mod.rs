#![allow(dead_code)]

use reasonlab::cfg::{build_cfg, Cfg};
use reasonlab::corpus::{self, CorpusProgram};
use reasonlab::lang::{parse, parse_literal, AstUnit, Value};
use reasonlab::pipeline::{parse_test, Instance};

pub struct Case {
    pub program: &'static CorpusProgram,
    pub unit: AstUnit,
    pub cfg: Cfg,
    pub inputs: Vec<Vec<Value>>,
}

pub fn args(literal: &str) -> Vec<Value> {
    match parse_literal(literal) {
        Ok(Value::List(items)) => items.as_ref().clone(),
        other => panic!("bad argument list {literal}: {other:?}"),
    }
}

pub fn cases() -> Vec<Case> {
    corpus::programs()
        .iter()
        .map(|p| {
            let unit = parse(p.source).expect("corpus parses");
            let cfg = build_cfg(&unit, p.entry).expect("entry exists");
            Case { program: p, unit, cfg, inputs: p.tests.iter().map(|(a, _)| args(a)).collect() }
        })
        .collect()
}

pub fn corpus_instance(name: &str, origins: &[&str]) -> Instance {
    let p = corpus::find(name).expect("corpus program");
    Instance {
        id: name.to_string(),
        task: None,
        entry_point: p.entry.to_string(),
        solutions: origins.iter().map(|o| (o.to_string(), p.source.to_string())).collect(),
        tests: p.tests.iter().map(|(a, e)| parse_test(&format!("{a} => {e}")).expect("test")).collect(),
    }
}

pub fn sample_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample.jsonl")
}

pub fn raw_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/raw.jsonl")
}
