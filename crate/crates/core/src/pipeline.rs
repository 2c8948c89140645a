//! Benchmark filtering, strategy runners, accuracy and report generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatRequest, FaultKind, FaultSpec, MockBackend, Reasoner};
use crate::cfg::{build_cfg, Cfg};
use crate::executor::{refine, trace_bundle, trace_once, Attempt, Prompting, TraceBundle, Traceable};
use crate::inspector::{cross_check, majority_output, synthesize_feedback, validate_trace, Diagnosis, DiagnosisKind};
use crate::lang::{parse_literal, run_program, AstUnit, EvalStatus, Value, DEFAULT_STEP_BUDGET};
use crate::mutator::{mutate_llm, MutantProgram, MutateError, NodeCorrespondence};
use crate::program::SourceProgram;
use crate::prompts::{parse_program_block, template_role};
use crate::trace::{oracle_trace, FinalOutput, Trace};

/// Tests kept per instance after filtering.
pub const MAX_TESTS: usize = 15;

mod literal_list {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::lang::{parse_literal, Value};

    pub fn serialize<S: Serializer>(args: &[Value], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&Value::list(args.to_vec()).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Value>, D::Error> {
        let text = String::deserialize(d)?;
        match parse_literal(&text) {
            Ok(Value::List(items)) => Ok(items.as_ref().clone()),
            Ok(_) => Err(serde::de::Error::custom("args must be a list literal")),
            Err(e) => Err(serde::de::Error::custom(format!("bad args literal {text:?}: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    /// Argument list, written as a list literal (`"[[1, 2], 3]"`).
    #[serde(with = "literal_list")]
    pub args: Vec<Value>,
    pub expected: Value,
}

/// One benchmark task with a solution per code origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub entry_point: String,
    pub solutions: BTreeMap<String, String>,
    pub tests: Vec<TestCase>,
}

impl Instance {
    pub fn program_id(&self, origin: &str) -> String {
        format!("{}@{origin}", self.id)
    }

    pub fn program(&self, origin: &str) -> Option<SourceProgram> {
        let text = self.solutions.get(origin)?;
        Some(SourceProgram::new(self.program_id(origin), origin, text.clone(), self.entry_point.clone()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| DatasetError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let mut w = io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Instance>, DatasetError> {
    read_jsonl(path)
}

pub fn write_dataset(path: &Path, instances: &[Instance]) -> Result<(), DatasetError> {
    write_jsonl(path, instances)
}

/// Every origin named by any instance, sorted.
pub fn dataset_origins(instances: &[Instance]) -> Vec<String> {
    let set: BTreeSet<&String> = instances.iter().flat_map(|i| i.solutions.keys()).collect();
    set.into_iter().cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Source does not parse.
    Parse,
    /// Source uses a construct outside the subject language.
    Subset,
    /// A solution returns the wrong value, raises, or times out.
    TestFailure,
    /// No solution for a requested origin.
    MissingOrigin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub instance: String,
    pub origin: Option<String>,
    pub reason: DropReason,
    pub detail: String,
}

fn is_subset_violation(message: &str) -> bool {
    message.contains("not supported") || message.contains("unsupported")
}

fn check_solution(inst: &Instance, origin: &str, tests: &[TestCase], budget: u64) -> Result<(), DropEntry> {
    let drop = |reason, detail: String| DropEntry { instance: inst.id.clone(), origin: Some(origin.to_string()), reason, detail };
    let Some(program) = inst.program(origin) else {
        return Err(drop(DropReason::MissingOrigin, "no solution".into()));
    };
    let unit = match program.parse() {
        Ok(u) => u,
        Err(e) => {
            let msg = e.to_string();
            let reason = if is_subset_violation(&msg) { DropReason::Subset } else { DropReason::Parse };
            return Err(drop(reason, msg));
        }
    };
    for (i, t) in tests.iter().enumerate() {
        let outcome = run_program(&unit, &inst.entry_point, &t.args, budget);
        match outcome.status {
            EvalStatus::Returned(v) if v.lang_eq(&t.expected) => {}
            EvalStatus::Returned(v) => {
                return Err(drop(DropReason::TestFailure, format!("test {}: expected {}, got {v}", i + 1, t.expected)))
            }
            EvalStatus::RuntimeError(e) => return Err(drop(DropReason::TestFailure, format!("test {}: {e}", i + 1))),
            EvalStatus::StepBudgetExceeded => {
                return Err(drop(DropReason::TestFailure, format!("test {}: step budget exceeded", i + 1)))
            }
        }
    }
    Ok(())
}

/// Keeps instances whose solution for every origin parses and passes every
/// test under the interpreter, truncating tests to the first [`MAX_TESTS`].
pub fn filter_benchmark(raw: &[Instance], origins: &[String], budget: u64) -> (Vec<Instance>, Vec<DropEntry>) {
    let mut kept = Vec::new();
    let mut drops = Vec::new();
    for inst in raw {
        let tests: Vec<TestCase> = inst.tests.iter().take(MAX_TESTS).cloned().collect();
        let failures: Vec<DropEntry> = origins.iter().filter_map(|o| check_solution(inst, o, &tests, budget).err()).collect();
        if failures.is_empty() {
            let mut solutions = inst.solutions.clone();
            solutions.retain(|o, _| origins.contains(o));
            kept.push(Instance { tests, solutions, ..inst.clone() });
        } else {
            drops.extend(failures);
        }
    }
    (kept, drops)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Cot,
    MutationVote,
    Remind,
    RemindNoMutator,
    RemindNoInspector,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Cot,
        StrategyKind::MutationVote,
        StrategyKind::Remind,
        StrategyKind::RemindNoMutator,
        StrategyKind::RemindNoInspector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Cot => "cot",
            StrategyKind::MutationVote => "mutation_vote",
            StrategyKind::Remind => "remind",
            StrategyKind::RemindNoMutator => "remind_no_mutator",
            StrategyKind::RemindNoInspector => "remind_no_inspector",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        StrategyKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = StrategyKind::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown strategy '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// A strategy with its variant count `k` and refinement rounds `rounds`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub k: usize,
    pub rounds: usize,
}

impl Strategy {
    pub fn new(kind: StrategyKind, k: usize, rounds: usize) -> Self {
        Strategy { kind, k, rounds }
    }

    pub fn with_defaults(kind: StrategyKind) -> Self {
        Strategy::new(kind, 2, 2)
    }

    /// Variants actually requested.
    pub fn variants(&self) -> usize {
        match self.kind {
            StrategyKind::Cot | StrategyKind::RemindNoMutator => 0,
            _ => self.k,
        }
    }

    /// Refinement rounds actually allowed.
    pub fn refinement_rounds(&self) -> usize {
        match self.kind {
            StrategyKind::Remind | StrategyKind::RemindNoMutator => self.rounds,
            _ => 0,
        }
    }

    fn inspects(&self) -> bool {
        matches!(self.kind, StrategyKind::Remind | StrategyKind::RemindNoMutator)
    }

    /// Most backend calls one instance may use:
    /// `1 + (1 + k)·tests + R·tests`.
    pub fn call_ceiling(&self, tests: usize) -> usize {
        1 + (1 + self.variants()) * tests + self.refinement_rounds() * tests
    }
}

/// One request/response pair, kept for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: String,
    pub program: String,
    pub response: String,
}

/// Counts calls, refuses calls beyond a ceiling and records a transcript.
struct Budgeted<'a> {
    inner: &'a dyn Reasoner,
    ceiling: usize,
    calls: AtomicUsize,
    transcript: Mutex<Vec<Exchange>>,
}

impl<'a> Budgeted<'a> {
    fn new(inner: &'a dyn Reasoner, ceiling: usize) -> Self {
        Budgeted { inner, ceiling, calls: AtomicUsize::new(0), transcript: Mutex::new(Vec::new()) }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst).min(self.ceiling)
    }
}

impl Reasoner for Budgeted<'_> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.ceiling {
            return Err(BackendError::Transport("call budget exhausted".into()));
        }
        let result = self.inner.complete(request);
        let role = request.messages.first().and_then(|m| template_role(&m.content)).map(|r| format!("{r:?}").to_lowercase());
        let program = request.messages.get(1).and_then(|m| parse_program_block(&m.content)).map(|b| b.id);
        let response = match &result {
            Ok(text) => text.clone(),
            Err(e) => format!("<error: {e}>"),
        };
        let phase = if request.messages.len() > 2 { "refine".to_string() } else { role.unwrap_or_default() };
        self.transcript.lock().expect("transcript lock").push(Exchange { role: phase, program: program.unwrap_or_default(), response });
        result
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Outcome for one test input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub test: usize,
    pub expected: Value,
    pub predicted: Option<FinalOutput>,
    pub correct: bool,
    pub rounds: usize,
    /// Diagnoses still open on the final original trace.
    pub open_diagnoses: usize,
}

/// Verdicts for one (instance, origin, strategy, backend) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRun {
    pub instance: String,
    pub origin: String,
    pub strategy: StrategyKind,
    pub backend: String,
    pub calls: usize,
    pub verdicts: Vec<TestVerdict>,
    /// Set when the evaluation could not run (the verdicts are then all
    /// wrong, or empty when the backend is unavailable).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub unavailable: bool,
}

impl InstanceRun {
    pub fn passed(&self) -> bool {
        !self.unavailable && self.verdicts.iter().all(|v| v.correct)
    }
}

/// Everything produced by [`evaluate_instance`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub run: InstanceRun,
    pub bundles: Vec<TraceBundle>,
    pub transcript: Vec<Exchange>,
}

struct Prepared {
    program: SourceProgram,
    unit: AstUnit,
    cfg: Cfg,
}

struct PreparedVariant {
    program: SourceProgram,
    cfg: Cfg,
    unit: AstUnit,
    correspondence: NodeCorrespondence,
}

impl PreparedVariant {
    fn from_mutant(m: MutantProgram, index: usize, origin: &str) -> PreparedVariant {
        let program = SourceProgram::new(format!("{}#m{}", m.base_id, index + 1), origin, m.text.clone(), m.entry.clone());
        let cfg = m.cfg();
        PreparedVariant { program, cfg, unit: m.ast, correspondence: m.correspondence }
    }
}

fn is_fatal(e: &BackendError) -> bool {
    matches!(e, BackendError::Auth(_) | BackendError::Config(_))
}

fn answer_correct(predicted: Option<&FinalOutput>, expected: &Value) -> bool {
    matches!(predicted, Some(FinalOutput::Value(v)) if crate::trace::outputs_equal(v, expected))
}

/// Majority answer over the bundle; ties go to the original.
fn vote(bundle: &TraceBundle) -> Option<FinalOutput> {
    let mut outputs: Vec<Option<&FinalOutput>> = vec![bundle.original.final_output.as_ref()];
    outputs.extend(bundle.variants.iter().map(|(_, t)| t.final_output.as_ref()));
    majority_output(&outputs).or_else(|| bundle.original.final_output.clone())
}

struct Inspected {
    cfg_diagnoses: Vec<Diagnosis>,
    all: Vec<Diagnosis>,
}

fn inspect(bundle: &mut TraceBundle, original: &Prepared, variants: &[PreparedVariant]) -> Inspected {
    let cfg_diagnoses = validate_trace(&mut bundle.original, &original.cfg, &original.unit);
    let mut all = cfg_diagnoses.clone();
    if !variants.is_empty() {
        let mut cfgs: Vec<&Cfg> = vec![&original.cfg];
        cfgs.extend(variants.iter().map(|v| &v.cfg));
        let corr: Vec<NodeCorrespondence> = variants.iter().map(|v| v.correspondence.clone()).collect();
        all.extend(cross_check(bundle, &cfgs, &corr));
    }
    Inspected { cfg_diagnoses, all }
}

/// Traces, inspects and refines one test; returns the verdict and bundle.
fn run_test(
    backend: &dyn Reasoner,
    strategy: &Strategy,
    original: &Prepared,
    variants: &[PreparedVariant],
    index: usize,
    test: &TestCase,
) -> Result<(TestVerdict, TraceBundle), BackendError> {
    let orig_t = Traceable { program: &original.program, unit: &original.unit, cfg: &original.cfg };
    if strategy.kind == StrategyKind::Cot {
        let a = trace_once(backend, &orig_t, &test.args, Prompting::Cot)?;
        let predicted = a.trace.final_output.clone();
        let bundle = TraceBundle { input: test.args.clone(), original: a.trace, variants: Vec::new(), rounds: 0 };
        let correct = answer_correct(predicted.as_ref(), &test.expected);
        return Ok((TestVerdict { test: index, expected: test.expected.clone(), predicted, correct, rounds: 0, open_diagnoses: 0 }, bundle));
    }
    let var_t: Vec<Traceable<'_>> =
        variants.iter().map(|v| Traceable { program: &v.program, unit: &v.unit, cfg: &v.cfg }).collect();
    let (mut bundle, mut attempt, _) = trace_bundle(backend, &orig_t, &var_t, &test.args)?;
    let mut open = 0;
    let predicted = if strategy.inspects() {
        let mut inspected = inspect(&mut bundle, original, variants);
        while !inspected.all.is_empty() && bundle.rounds < strategy.refinement_rounds() {
            let Some(feedback) = synthesize_feedback(&inspected.all, &original.cfg) else { break };
            let next: Attempt = refine(backend, &orig_t, &attempt, &feedback.render())?;
            bundle.original = next.trace.clone();
            bundle.rounds += 1;
            attempt = next;
            inspected = inspect(&mut bundle, original, variants);
        }
        open = inspected.all.len();
        let disagreement = inspected.all.iter().any(|d| d.kind == DiagnosisKind::CrossVariantDisagreement);
        if inspected.cfg_diagnoses.is_empty() && disagreement {
            vote(&bundle)
        } else {
            bundle.original.final_output.clone()
        }
    } else {
        vote(&bundle)
    };
    let correct = answer_correct(predicted.as_ref(), &test.expected);
    let rounds = bundle.rounds;
    Ok((TestVerdict { test: index, expected: test.expected.clone(), predicted, correct, rounds, open_diagnoses: open }, bundle))
}

fn failed_verdicts(instance: &Instance) -> Vec<TestVerdict> {
    instance
        .tests
        .iter()
        .enumerate()
        .map(|(i, t)| TestVerdict { test: i, expected: t.expected.clone(), predicted: None, correct: false, rounds: 0, open_diagnoses: 0 })
        .collect()
}

/// Runs `strategy` on one origin's solution of `instance`. Backend failures
/// mark tests wrong; authentication and configuration failures mark the run
/// unavailable.
pub fn evaluate_instance(instance: &Instance, origin: &str, strategy: &Strategy, backend: &dyn Reasoner) -> Evaluation {
    let budgeted = Budgeted::new(backend, strategy.call_ceiling(instance.tests.len()));
    let mut run = InstanceRun {
        instance: instance.id.clone(),
        origin: origin.to_string(),
        strategy: strategy.kind,
        backend: backend.name(),
        calls: 0,
        verdicts: Vec::new(),
        error: None,
        unavailable: false,
    };
    let mut bundles = Vec::new();
    let prepared = instance.program(origin).ok_or_else(|| format!("no solution for origin '{origin}'")).and_then(|program| {
        let unit = program.parse().map_err(|e| e.to_string())?;
        let cfg = build_cfg(&unit, &program.entry_point).map_err(|e| e.to_string())?;
        Ok(Prepared { program, unit, cfg })
    });
    let original = match prepared {
        Ok(p) => p,
        Err(e) => {
            run.error = Some(e);
            run.verdicts = failed_verdicts(instance);
            return Evaluation { run, bundles, transcript: Vec::new() };
        }
    };
    let mut variants = Vec::new();
    if strategy.variants() > 0 {
        match mutate_llm(&original.program, &budgeted, strategy.variants()) {
            Ok((mutants, _)) => {
                variants = mutants.into_iter().enumerate().map(|(i, m)| PreparedVariant::from_mutant(m, i, origin)).collect();
            }
            Err(MutateError::Backend(e)) if is_fatal(&e) => {
                run.unavailable = true;
                run.error = Some(e.to_string());
            }
            Err(e) => log::warn!("{}: no variants ({e})", original.program.id),
        }
    }
    if !run.unavailable {
        for (i, test) in instance.tests.iter().enumerate() {
            match run_test(&budgeted, strategy, &original, &variants, i, test) {
                Ok((verdict, bundle)) => {
                    run.verdicts.push(verdict);
                    bundles.push(bundle);
                }
                Err(e) if is_fatal(&e) => {
                    run.unavailable = true;
                    run.error = Some(e.to_string());
                    run.verdicts.clear();
                    break;
                }
                Err(e) => {
                    run.error.get_or_insert_with(|| e.to_string());
                    run.verdicts.push(TestVerdict {
                        test: i,
                        expected: test.expected.clone(),
                        predicted: None,
                        correct: false,
                        rounds: 0,
                        open_diagnoses: 0,
                    });
                }
            }
        }
    }
    run.calls = budgeted.calls();
    let transcript = budgeted.transcript.into_inner().expect("transcript lock");
    Evaluation { run, bundles, transcript }
}

/// `(1/N)·Σᵢ Πⱼ correctᵢⱼ`; 0 for an empty matrix.
pub fn accuracy(verdicts: &[Vec<bool>]) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    let passed = verdicts.iter().filter(|row| row.iter().all(|&c| c)).count();
    passed as f64 / verdicts.len() as f64
}

/// Accuracy over the available runs; `None` when none are available.
pub fn runs_accuracy<'a>(runs: impl IntoIterator<Item = &'a InstanceRun>) -> Option<f64> {
    let matrix: Vec<Vec<bool>> =
        runs.into_iter().filter(|r| !r.unavailable).map(|r| r.verdicts.iter().map(|v| v.correct).collect()).collect();
    (!matrix.is_empty()).then(|| accuracy(&matrix))
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub backend: String,
    pub origin: String,
    pub strategy: StrategyKind,
    /// `None` marks a gap (backend unavailable).
    pub accuracy: Option<f64>,
    pub instances: usize,
    pub calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub backend: String,
    pub strategy: StrategyKind,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<InstanceRun>,
    pub cells: Vec<Cell>,
    pub dispersion: Vec<Dispersion>,
}

impl RunReport {
    /// Aggregates raw runs; the result depends only on the set of runs.
    pub fn from_runs(mut runs: Vec<InstanceRun>) -> RunReport {
        runs.sort_by(|a, b| {
            (&a.backend, &a.origin, a.strategy, &a.instance).cmp(&(&b.backend, &b.origin, b.strategy, &b.instance))
        });
        let mut groups: BTreeMap<(String, String, StrategyKind), Vec<&InstanceRun>> = BTreeMap::new();
        for r in &runs {
            groups.entry((r.backend.clone(), r.origin.clone(), r.strategy)).or_default().push(r);
        }
        let cells: Vec<Cell> = groups
            .into_iter()
            .map(|((backend, origin, strategy), rs)| Cell {
                accuracy: runs_accuracy(rs.iter().copied()),
                instances: rs.iter().filter(|r| !r.unavailable).count(),
                calls: rs.iter().map(|r| r.calls).sum(),
                backend,
                origin,
                strategy,
            })
            .collect();
        let mut by_row: BTreeMap<(String, StrategyKind), Vec<f64>> = BTreeMap::new();
        for c in &cells {
            if let Some(a) = c.accuracy {
                by_row.entry((c.backend.clone(), c.strategy)).or_default().push(a);
            }
        }
        let dispersion = by_row
            .into_iter()
            .map(|((backend, strategy), accs)| Dispersion {
                mean: accs.iter().sum::<f64>() / accs.len() as f64,
                std: population_std(&accs),
                backend,
                strategy,
            })
            .collect();
        RunReport { runs, cells, dispersion }
    }

    pub fn cell(&self, backend: &str, origin: &str, strategy: StrategyKind) -> Option<&Cell> {
        self.cells.iter().find(|c| c.backend == backend && c.origin == origin && c.strategy == strategy)
    }

    /// Accuracy of a strategy over every run of it.
    pub fn strategy_accuracy(&self, strategy: StrategyKind) -> Option<f64> {
        runs_accuracy(self.runs.iter().filter(|r| r.strategy == strategy))
    }

    pub fn any_failure(&self) -> bool {
        self.runs.iter().any(|r| !r.passed())
    }

    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("backend,origin,strategy,accuracy,instances,calls\n");
        for c in &self.cells {
            let acc = c.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{acc},{},{}\n", c.backend, c.origin, c.strategy, c.instances, c.calls));
        }
        out
    }

    pub fn std_csv(&self) -> String {
        let mut out = String::from("backend,strategy,mean,std\n");
        for d in &self.dispersion {
            out.push_str(&format!("{},{},{:.4},{:.4}\n", d.backend, d.strategy, d.mean, d.std));
        }
        out
    }

    /// Rows are backends, columns origins; each value is relative to the
    /// backend's accuracy on its own code (blank without a diagonal cell).
    pub fn heatmap_csv(&self) -> String {
        let origins: BTreeSet<&str> = self.cells.iter().map(|c| c.origin.as_str()).collect();
        let rows: BTreeSet<(StrategyKind, &str)> = self.cells.iter().map(|c| (c.strategy, c.backend.as_str())).collect();
        let mut out = String::from("strategy,backend");
        for o in &origins {
            out.push(',');
            out.push_str(o);
        }
        out.push('\n');
        for (strategy, backend) in rows {
            out.push_str(&format!("{strategy},{backend}"));
            let diag = self.cell(backend, backend, strategy).and_then(|c| c.accuracy);
            for o in &origins {
                out.push(',');
                let value = self.cell(backend, o, strategy).and_then(|c| c.accuracy);
                if let (Some(v), Some(d)) = (value, diag) {
                    if d > 0.0 {
                        out.push_str(&format!("{:.2}", v / d));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A named backend taking part in a grid.
#[derive(Clone)]
pub struct NamedBackend {
    pub name: String,
    pub backend: Arc<dyn Reasoner>,
}

impl NamedBackend {
    pub fn new(name: impl Into<String>, backend: Arc<dyn Reasoner>) -> Self {
        NamedBackend { name: name.into(), backend }
    }
}

/// Full grid output, including per-run bundles and transcripts.
#[derive(Clone, Debug, Default)]
pub struct GridOutput {
    pub report: RunReport,
    pub bundles: Vec<(String, TraceBundle)>,
    pub transcripts: Vec<(String, Exchange)>,
}

/// Evaluates every (instance, origin, strategy, backend) combination on a
/// pool of `workers` threads.
pub fn cross_matrix(
    instances: &[Instance],
    origins: &[String],
    strategies: &[Strategy],
    backends: &[NamedBackend],
    workers: usize,
) -> GridOutput {
    let mut jobs = Vec::new();
    for b in backends {
        for s in strategies {
            for o in origins {
                for inst in instances {
                    jobs.push((b, s, o, inst));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
    let evaluations: Vec<Evaluation> = pool.install(|| {
        jobs.par_iter()
            .map(|(b, s, o, inst)| {
                let mut e = evaluate_instance(inst, o, s, b.backend.as_ref());
                e.run.backend = b.name.clone();
                e
            })
            .collect()
    });
    let mut out = GridOutput::default();
    let mut runs = Vec::with_capacity(evaluations.len());
    for e in evaluations {
        let key = format!("{}/{}/{}/{}", e.run.backend, e.run.strategy, e.run.origin, e.run.instance);
        out.bundles.extend(e.bundles.into_iter().map(|b| (key.clone(), b)));
        out.transcripts.extend(e.transcript.into_iter().map(|x| (key.clone(), x)));
        runs.push(e.run);
    }
    out.report = RunReport::from_runs(runs);
    out
}

pub fn write_runs(path: &Path, runs: &[InstanceRun]) -> Result<(), DatasetError> {
    write_jsonl(path, runs)
}

pub fn read_runs(path: &Path) -> Result<Vec<InstanceRun>, DatasetError> {
    read_jsonl(path)
}

pub fn write_drops(path: &Path, drops: &[DropEntry]) -> Result<(), DatasetError> {
    write_jsonl(path, drops)
}

/// Writes `verdicts.jsonl`, `matrix.csv`, `std.csv` and `heatmap.csv`.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_runs(&dir.join("verdicts.jsonl"), &report.runs)?;
    for (name, text) in [("matrix.csv", report.matrix_csv()), ("std.csv", report.std_csv()), ("heatmap.csv", report.heatmap_csv())] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn write_faults(path: &Path, faults: &[FaultSpec]) -> Result<(), DatasetError> {
    write_jsonl(path, faults)
}

pub fn read_faults(path: &Path) -> Result<Vec<FaultSpec>, DatasetError> {
    read_jsonl(path)
}

/// A fault is usable when it changes the final output and the validator
/// reports its first problem exactly where the fault took effect.
fn decidable_fault(unit: &AstUnit, cfg: &Cfg, entry: &str, args: &[Value], spec: &FaultSpec) -> bool {
    let truth = oracle_trace(unit, entry, args, DEFAULT_STEP_BUDGET);
    let (Some(mut faulty), realized) = MockBackend::simulate(unit, cfg, entry, args, std::slice::from_ref(spec)) else {
        return false;
    };
    let [hit] = realized.as_slice() else { return false };
    let changed = match (&truth.final_output, &faulty.final_output) {
        (Some(a), Some(b)) => !a.matches(b),
        _ => false,
    };
    if !changed {
        return false;
    }
    let diags = validate_trace(&mut faulty, cfg, unit);
    let first = diags.iter().min_by_key(|d| (if d.step == 0 { usize::MAX } else { d.step }, d.kind));
    first.is_some_and(|d| d.step == hit.step && d.node == hit.node.clone().unwrap_or_default())
}

fn candidate_faults(unit: &AstUnit, cfg: &Cfg, entry: &str, program_id: &str, args: &[Value]) -> Vec<FaultSpec> {
    let truth: Trace = oracle_trace(unit, entry, args, DEFAULT_STEP_BUDGET);
    let decisions = truth.steps.iter().filter(|s| s.branch.is_some()).count();
    let mut out = Vec::new();
    let spec = |kind, site, delta| FaultSpec {
        id: format!("{program_id}:{kind:?}:{site}"),
        program_id: program_id.to_string(),
        input: Some(args.to_vec()),
        kind,
        site,
        delta,
    };
    for site in 1..=decisions {
        out.push(spec(FaultKind::WrongBranch, site, 0));
    }
    for site in 1..=truth.steps.len() {
        out.push(spec(FaultKind::StaleUpdate, site, 0));
    }
    out.retain(|f| decidable_fault(unit, cfg, entry, args, f));
    out
}

/// Seeded fault plan: a `rate` fraction of instances get one decidable,
/// output-changing fault per origin on the original program, at a randomly
/// chosen site of the first test that has one.
pub fn fault_plan(instances: &[Instance], origins: &[String], rate: f64, seed: u64) -> Vec<FaultSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut rng);
    let target = (instances.len() as f64 * rate.clamp(0.0, 1.0)).round() as usize;
    let mut plan = Vec::new();
    let mut chosen = 0;
    for i in order {
        if chosen == target {
            break;
        }
        let inst = &instances[i];
        let mut faults = Vec::new();
        for origin in origins {
            let Some(program) = inst.program(origin) else { continue };
            let Ok(unit) = program.parse() else { continue };
            let Ok(cfg) = build_cfg(&unit, &inst.entry_point) else { continue };
            let picked = inst.tests.iter().find_map(|t| {
                let c = candidate_faults(&unit, &cfg, &inst.entry_point, &program.id, &t.args);
                (!c.is_empty()).then(|| c[rng.random_range(0..c.len())].clone())
            });
            faults.extend(picked);
        }
        if !faults.is_empty() {
            plan.extend(faults);
            chosen += 1;
        }
    }
    plan
}

/// Parses a test written as `args => expected` (both literals).
pub fn parse_test(text: &str) -> Option<TestCase> {
    let (args, expected) = text.split_once("=>")?;
    match parse_literal(args.trim()).ok()? {
        Value::List(items) => Some(TestCase { args: items.as_ref().clone(), expected: parse_literal(expected.trim()).ok()? }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn corpus_instance(name: &str) -> Instance {
        let p = corpus::find(name).unwrap();
        Instance {
            id: name.to_string(),
            task: None,
            entry_point: p.entry.to_string(),
            solutions: [("a".to_string(), p.source.to_string()), ("b".to_string(), p.source.to_string())].into(),
            tests: p.tests.iter().map(|(a, e)| parse_test(&format!("{a} => {e}")).unwrap()).collect(),
        }
    }

    fn origins() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[vec![true, true], vec![true]]), 1.0);
        let m = vec![vec![true; 5], vec![true, true, false, true, true], vec![true; 3], vec![true]];
        assert_eq!(accuracy(&m), 0.75);
    }

    #[test]
    fn filter_caps_tests_and_logs_drops() {
        let mut inst = corpus_instance("special_filter");
        let t = inst.tests[0].clone();
        inst.tests = vec![t; 20];
        let mut bad = corpus_instance("special_filter");
        bad.id = "bad".into();
        bad.tests[0].expected = Value::Int(99);
        let mut subset = corpus_instance("special_filter");
        subset.id = "subset".into();
        subset.solutions.insert("b".into(), "import os\ndef specialFilter(nums):\n    return 0\n".into());
        let (kept, drops) = filter_benchmark(&[inst, bad, subset], &origins(), DEFAULT_STEP_BUDGET);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].tests.len(), MAX_TESTS);
        assert!(drops.iter().any(|d| d.instance == "bad" && d.reason == DropReason::TestFailure));
        assert!(drops.iter().any(|d| d.instance == "subset" && d.reason == DropReason::Subset));
    }

    #[test]
    fn clean_mock_remind_is_all_correct() {
        let inst = corpus_instance("special_filter");
        let strategy = Strategy::with_defaults(StrategyKind::Remind);
        let e = evaluate_instance(&inst, "a", &strategy, &MockBackend::default());
        assert!(e.run.passed(), "{:?}", e.run);
        assert_eq!(e.run.calls, 1 + 3 * inst.tests.len());
        assert!(e.run.calls <= strategy.call_ceiling(inst.tests.len()));
    }

    #[test]
    fn fault_plan_is_seeded_and_decidable() {
        let insts: Vec<Instance> = ["special_filter", "min_sub_array_sum"].iter().map(|n| corpus_instance(n)).collect();
        let a = fault_plan(&insts, &origins(), 0.5, 7);
        assert_eq!(a, fault_plan(&insts, &origins(), 0.5, 7));
        assert_eq!(a.len(), 2);
        let inst = insts.iter().find(|i| a[0].program_id.starts_with(&format!("{}@", i.id))).unwrap();
        let mock = MockBackend::new(a.clone());
        let cot = evaluate_instance(inst, "a", &Strategy::with_defaults(StrategyKind::Cot), &mock);
        let remind = evaluate_instance(inst, "a", &Strategy::with_defaults(StrategyKind::Remind), &mock);
        assert!(!cot.run.passed());
        assert!(remind.run.passed(), "{:?}", remind.run);
    }

    #[test]
    fn report_gaps_and_std() {
        let inst = corpus_instance("special_filter");
        let faults = fault_plan(std::slice::from_ref(&inst), &["b".to_string()], 1.0, 1);
        let backends = [NamedBackend::new("mock", Arc::new(MockBackend::new(faults)))];
        let grid = cross_matrix(&[inst], &origins(), &[Strategy::with_defaults(StrategyKind::Cot)], &backends, 2);
        let r = &grid.report;
        assert_eq!(r.cell("mock", "a", StrategyKind::Cot).unwrap().accuracy, Some(1.0));
        assert_eq!(r.cell("mock", "b", StrategyKind::Cot).unwrap().accuracy, Some(0.0));
        assert_eq!(r.dispersion[0].std, 0.5);
        assert!(cross_matrix(&[], &origins(), &[], &backends, 1).report.cells.is_empty());
    }
}
