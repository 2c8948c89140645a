mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reasonlab::corpus;
use reasonlab::lang::{parse, DEFAULT_STEP_BUDGET};
use reasonlab::pipeline::{read_dataset, write_dataset};
use reasonlab::trace::{oracle_trace, render_trace};

fn reasonlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reasonlab"))
        .args(args)
        .env_remove("RLAB_API_KEY")
        .env_remove("RLAB_BACKEND")
        .env_remove("RLAB_DATASET")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_dataset(dir: &Path) -> String {
    let all = read_dataset(&common::sample_path()).unwrap();
    let keep: Vec<_> = all.into_iter().filter(|i| ["special_filter", "fib", "below_zero"].contains(&i.id.as_str())).collect();
    let path = dir.join("small.jsonl");
    write_dataset(&path, &keep).unwrap();
    path.display().to_string()
}

#[test]
fn filter_writes_retained_set_and_drop_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let raw = common::raw_path();
    let o = reasonlab(&["filter", "--dataset", raw.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_dataset(&out.join("filtered.jsonl")).unwrap().len(), 12);
    let drops = fs::read_to_string(out.join("drops.jsonl")).unwrap();
    assert!(drops.contains("special_filter_off_by_one") && drops.contains("test_failure"));
    assert!(drops.contains("incr_list_lambda") && drops.contains("subset"));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let o = reasonlab(&["filter", "--dataset", "/nonexistent/data.jsonl", "--out", "/tmp/unused"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistent"));
    assert_eq!(code(&reasonlab(&["frobnicate"])), 2);
    assert_eq!(code(&reasonlab(&["run", "--strategy", "magic", "--dataset", "x"])), 2);
}

#[test]
fn clean_mock_run_scores_one_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = reasonlab(&["run", "--dataset", &data, "--out", out.to_str().unwrap(), "--strategy", "remind", "--seed", "3"]);
        (o, out)
    };
    let (o, out) = run("a");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("accuracy remind = 1.0000"));
    let (_, out2) = run("b");
    for f in ["verdicts.jsonl", "matrix.csv", "std.csv", "heatmap.csv", "traces.jsonl", "transcripts.jsonl"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f}");
    }
    let report = reasonlab(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&report), 0);
    assert_eq!(fs::read_to_string(out.join("matrix.csv")).unwrap(), fs::read_to_string(out2.join("matrix.csv")).unwrap());
}

#[test]
fn fault_plan_separates_cot_from_remind() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("out");
    let o = reasonlab(&[
        "run", "--dataset", &data, "--out", out.to_str().unwrap(), "--strategy", "cot,remind", "--fault-rate", "1.0", "--seed", "5",
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let acc = |k: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("accuracy {k} "))).unwrap();
        line.rsplit(' ').next().unwrap().parse().unwrap()
    };
    assert!(acc("remind") > acc("cot"), "{text}");
    assert!(out.join("faults.jsonl").exists());
}

#[test]
fn live_backend_without_key_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("out");
    let o = reasonlab(&["run", "--backend", "live", "--dataset", &data, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.join("verdicts.jsonl").exists());
}

#[test]
fn cfg_writes_one_dot_per_function_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("primes.py");
    fs::write(&src, corpus::find("count_primes").unwrap().source).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&reasonlab(&["cfg", src.to_str().unwrap(), "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&reasonlab(&["cfg", src.to_str().unwrap(), "--out", b.to_str().unwrap()])), 0);
    for f in ["is_prime.dot", "count_primes.dot"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let bad = dir.path().join("bad.py");
    fs::write(&bad, "def f(:\n").unwrap();
    let o = reasonlab(&["cfg", bad.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.py: line "));
}

#[test]
fn verify_trace_reports_healthy_flipped_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let p = corpus::find("special_filter").unwrap();
    let src = dir.path().join("special.py");
    fs::write(&src, p.source).unwrap();
    let unit = parse(p.source).unwrap();
    let text = render_trace(&oracle_trace(&unit, p.entry, &common::args("[[71, -2, -33, 75, 21, 19]]"), DEFAULT_STEP_BUDGET)).unwrap();
    let good = dir.path().join("good.txt");
    fs::write(&good, &text).unwrap();
    let o = reasonlab(&["verify-trace", src.to_str().unwrap(), good.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("healthy"));

    let flipped: Vec<String> = text
        .lines()
        .map(|l| if l.contains("LINE 4 ") && l.contains("num=-33") { l.replace("BRANCH false", "BRANCH true") } else { l.to_string() })
        .collect();
    let bad = dir.path().join("flipped.txt");
    fs::write(&bad, flipped.join("\n")).unwrap();
    let o = reasonlab(&["verify-trace", src.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("kind=condition_mismatch"), "{}", stdout(&o));

    let junk = dir.path().join("junk.txt");
    fs::write(&junk, "the answer is probably 3\n").unwrap();
    assert_eq!(code(&reasonlab(&["verify-trace", src.to_str().unwrap(), junk.to_str().unwrap()])), 2);
}
