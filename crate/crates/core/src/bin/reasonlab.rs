use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use reasonlab::backend::{CachedBackend, LiveBackend, LiveConfig, MockBackend, Reasoner};
use reasonlab::cfg::{build_all, build_cfg};
use reasonlab::inspector::{check_trace, synthesize_feedback};
use reasonlab::lang::{parse, parse_literal, Env, Value, DEFAULT_STEP_BUDGET};
use reasonlab::pipeline::{
    cross_matrix, dataset_origins, fault_plan, filter_benchmark, read_dataset, read_faults, read_runs, write_dataset,
    write_drops, write_faults, write_report, NamedBackend, RunReport, Strategy, StrategyKind,
};
use reasonlab::trace::{parse_trace_text_with, write_traces_jsonl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    Mock,
    Live,
}

#[derive(Parser, Debug)]
#[command(name = "reasonlab", version, about = "Trace, inspect and score program reasoning")]
struct Cli {
    /// Dataset (JSON Lines, one instance per line).
    #[arg(long, global = true, env = "RLAB_DATASET")]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "RLAB_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, env = "RLAB_BACKEND", value_enum, default_value = "mock")]
    backend: BackendChoice,
    /// Comma-separated strategies.
    #[arg(long, global = true, env = "RLAB_STRATEGY", default_value = "remind")]
    strategy: String,
    /// Variants per instance.
    #[arg(long, global = true, env = "RLAB_K", default_value_t = 2)]
    k: usize,
    /// Refinement rounds per test.
    #[arg(long, global = true, env = "RLAB_ROUNDS", default_value_t = 2)]
    rounds: usize,
    #[arg(long, global = true, env = "RLAB_WORKERS", default_value_t = 4)]
    workers: usize,
    #[arg(long, global = true, env = "RLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Disable the response cache of the live backend.
    #[arg(long, global = true, env = "RLAB_NO_CACHE")]
    no_cache: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Keep instances whose every solution passes every test.
    Filter {
        /// Comma-separated origins (default: all in the dataset).
        #[arg(long)]
        origins: Option<String>,
    },
    /// Evaluate strategies and write verdicts and reports.
    Run {
        #[arg(long)]
        origins: Option<String>,
        /// Mock fault plan (JSON Lines of fault specs).
        #[arg(long)]
        faults: Option<PathBuf>,
        /// Generate a seeded fault plan over this fraction of instances.
        #[arg(long)]
        fault_rate: Option<f64>,
    },
    /// Recompute reports from a verdicts file.
    Report {
        /// Defaults to `<out>/verdicts.jsonl`.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Write one DOT graph per function.
    Cfg { source: PathBuf },
    /// Check a trace against a program.
    VerifyTrace {
        source: PathBuf,
        trace: PathBuf,
        /// Function the trace starts in (default: the first one).
        #[arg(long)]
        entry: Option<String>,
        /// Argument list literal; taken from the first step when omitted.
        #[arg(long)]
        input: Option<String>,
    },
}

/// Failure that maps to exit code 2.
fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("{e}")
}

fn origins_arg(arg: &Option<String>, dataset: &[reasonlab::pipeline::Instance]) -> Vec<String> {
    match arg {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => dataset_origins(dataset),
    }
}

fn strategies(cli: &Cli) -> Result<Vec<Strategy>> {
    cli.strategy
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| Ok(Strategy::new(s.parse::<StrategyKind>().map_err(usage)?, cli.k, cli.rounds)))
        .collect()
}

fn dataset(cli: &Cli) -> Result<Vec<reasonlab::pipeline::Instance>> {
    let path = cli.dataset.as_ref().ok_or_else(|| usage("--dataset is required"))?;
    Ok(read_dataset(path)?)
}

fn cmd_filter(cli: &Cli, origins: &Option<String>) -> Result<bool> {
    let raw = dataset(cli)?;
    let origins = origins_arg(origins, &raw);
    let (kept, drops) = filter_benchmark(&raw, &origins, DEFAULT_STEP_BUDGET);
    fs::create_dir_all(&cli.out).with_context(|| cli.out.display().to_string())?;
    write_dataset(&cli.out.join("filtered.jsonl"), &kept)?;
    write_drops(&cli.out.join("drops.jsonl"), &drops)?;
    println!("retained {} of {} instances ({} drop entries)", kept.len(), raw.len(), drops.len());
    for d in &drops {
        println!("drop {} origin={} reason={:?}: {}", d.instance, d.origin.as_deref().unwrap_or("-"), d.reason, d.detail);
    }
    Ok(false)
}

fn make_backend(cli: &Cli, faults: Vec<reasonlab::backend::FaultSpec>) -> Result<NamedBackend> {
    match cli.backend {
        BackendChoice::Mock => Ok(NamedBackend::new("mock", Arc::new(MockBackend { faults, seed: cli.seed }))),
        BackendChoice::Live => {
            let config = LiveConfig::from_env();
            let name = config.model.clone();
            let endpoint = config.endpoint();
            let live = LiveBackend::new(config).map_err(usage)?;
            let backend: Arc<dyn Reasoner> = if cli.no_cache {
                Arc::new(live)
            } else {
                Arc::new(CachedBackend::new(live, cli.out.join("cache"), endpoint))
            };
            Ok(NamedBackend::new(name, backend))
        }
    }
}

fn print_report(report: &RunReport) {
    print!("{}", report.matrix_csv());
    for kind in StrategyKind::ALL {
        if let Some(acc) = report.strategy_accuracy(kind) {
            println!("accuracy {kind} = {acc:.4}");
        }
    }
}

fn cmd_run(cli: &Cli, origins: &Option<String>, faults: &Option<PathBuf>, fault_rate: Option<f64>) -> Result<bool> {
    let strategies = strategies(cli)?;
    let instances = dataset(cli)?;
    let origins = origins_arg(origins, &instances);
    let mut plan = match faults {
        Some(path) => read_faults(path)?,
        None => Vec::new(),
    };
    if let Some(rate) = fault_rate {
        plan.extend(fault_plan(&instances, &origins, rate, cli.seed));
    }
    let backend = make_backend(cli, plan.clone())?;
    fs::create_dir_all(&cli.out).with_context(|| cli.out.display().to_string())?;
    if cli.backend == BackendChoice::Mock && !plan.is_empty() {
        write_faults(&cli.out.join("faults.jsonl"), &plan)?;
    }
    let grid = cross_matrix(&instances, &origins, &strategies, &[backend], cli.workers);
    write_report(&cli.out, &grid.report)?;
    let traces: Vec<_> = grid.bundles.iter().map(|(_, b)| b.original.clone()).collect();
    write_traces_jsonl(&cli.out.join("traces.jsonl"), &traces)?;
    let transcript: Vec<String> = grid
        .transcripts
        .iter()
        .map(|(key, x)| serde_json::json!({ "run": key, "role": x.role, "program": x.program, "response": x.response }).to_string())
        .collect();
    fs::write(cli.out.join("transcripts.jsonl"), transcript.join("\n") + "\n")?;
    print_report(&grid.report);
    Ok(grid.report.any_failure())
}

fn cmd_report(cli: &Cli, verdicts: &Option<PathBuf>) -> Result<bool> {
    let path = verdicts.clone().unwrap_or_else(|| cli.out.join("verdicts.jsonl"));
    let report = RunReport::from_runs(read_runs(&path)?);
    write_report(&cli.out, &report)?;
    print_report(&report);
    Ok(report.any_failure())
}

fn read_source(path: &Path) -> Result<reasonlab::lang::AstUnit> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn cmd_cfg(cli: &Cli, source: &Path) -> Result<bool> {
    let unit = read_source(source)?;
    fs::create_dir_all(&cli.out).with_context(|| cli.out.display().to_string())?;
    for cfg in build_all(&unit) {
        let path = cli.out.join(format!("{}.dot", cfg.function));
        fs::write(&path, cfg.to_dot()).with_context(|| path.display().to_string())?;
        println!("{}", path.display());
    }
    Ok(false)
}

fn cmd_verify(source: &Path, trace: &Path, entry: &Option<String>, input: &Option<String>) -> Result<bool> {
    let unit = read_source(source)?;
    let entry = match entry {
        Some(e) => e.clone(),
        None => unit.functions.first().map(|f| f.name.clone()).ok_or_else(|| usage("source defines no function"))?,
    };
    let cfg = build_cfg(&unit, &entry).map_err(usage)?;
    let func = unit.function(&entry).expect("cfg built");
    let text = fs::read_to_string(trace).with_context(|| trace.display().to_string())?;
    let initial: Env = match input {
        Some(lit) => match parse_literal(lit).map_err(usage)? {
            Value::List(args) => func.params.iter().cloned().zip(args.iter().cloned()).collect(),
            _ => bail!("--input must be a list literal"),
        },
        None => {
            let first = parse_trace_text_with(&text, &cfg, &Env::new());
            let state = first.trace.and_then(|t| t.steps.first().map(|s| s.post_state.clone())).unwrap_or_default();
            func.params.iter().filter_map(|p| state.get(p).map(|v| (p.clone(), v.clone()))).collect()
        }
    };
    let report = parse_trace_text_with(&text, &cfg, &initial);
    let Some(t) = report.trace else {
        bail!("{}: {}", trace.display(), report.fatal.unwrap_or_else(|| "unreadable trace".into()));
    };
    let checked = check_trace(&t, &cfg, &unit);
    for note in &checked.notes {
        println!("note step={} node={}: {}", note.step, note.node, note.message);
    }
    match synthesize_feedback(&checked.diagnoses, &cfg) {
        None => {
            println!("healthy");
            Ok(false)
        }
        Some(fb) => {
            print!("{}", fb.render());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Filter { origins } => cmd_filter(&cli, origins),
        Command::Run { origins, faults, fault_rate } => cmd_run(&cli, origins, faults, *fault_rate),
        Command::Report { verdicts } => cmd_report(&cli, verdicts),
        Command::Cfg { source } => cmd_cfg(&cli, source),
        Command::VerifyTrace { source, trace, entry, input } => cmd_verify(source, trace, entry, input),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
