//! `rwgrade` command-line tool.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error,
//! 3 transport error (an endpoint could not be reached).

pub mod settings;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rwgrade_core::arena::{ArenaStore, TrueSkillParams};
use rwgrade_core::corpus::{load_corpus, parse_records, CitationSet, CorpusError};
use rwgrade_core::judge::Judge;
use rwgrade_core::llm::{probe, ChatTextModel, OpenAiChat, RetryPolicy, TextModel};
use rwgrade_core::metrics::PositioningStyle;
use rwgrade_core::par::Parallelism;
use rwgrade_core::pipeline::stub::{heuristic_judge, StubFeedback, StubGenerator, StubMode};
use rwgrade_core::pipeline::{evaluate_draft, run_many, EvalTarget, Participants, RunConfig, RunTrace, Scenario};
use rwgrade_core::reporting::{aggregate, delta_table, write_file};
use serde::Serialize;
use thiserror::Error;

use settings::{EndpointArgs, Endpoints, FileConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "rwgrade", version, about = "Evaluate generated related-work sections")]
pub struct Cli {
    /// TOML file with defaults for any flag; flags and environment win.
    #[arg(long, global = true, env = "RWGRADE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus file and report every paper.
    Validate {
        corpus: PathBuf,
    },
    /// Run the generate-evaluate-feedback loop over a corpus.
    Run(RunArgs),
    /// Evaluate one draft against one paper.
    Eval(EvalArgs),
    /// Serve the expert arena HTTP API.
    Arena(ArenaArgs),
    /// Aggregate saved traces into score and delta tables.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory for traces and tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the built-in stub generator, feedback writer and judge; no network.
    #[arg(long)]
    pub stub: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Papers processed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// full, new-paper or style-change.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Iteration at which the scenario intervenes; defaults to 3, or K if K < 3.
    #[arg(long)]
    pub intervention_iteration: Option<usize>,
    /// Expected positioning style before any style change: per-paragraph or final-paragraph.
    #[arg(long)]
    pub style: Option<PositioningStyle>,
    /// Evaluate papers one after another on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub endpoints: EndpointArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub paper: String,
    /// UTF-8 text file with the draft; `-` reads stdin.
    #[arg(long)]
    pub draft: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub stub: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub style: Option<PositioningStyle>,
    #[command(flatten)]
    pub endpoints: EndpointArgs,
}

#[derive(Debug, Args)]
pub struct ArenaArgs {
    /// Directory holding the event log and snapshot.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<String>,
    /// Corpus used to annotate drafts and check paper ids.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Seed for Model 1 / Model 2 side assignment in a new store.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Files or directories searched recursively for trace JSON.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_target(false)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate { corpus } => validate(&corpus),
        Command::Run(args) => run(args, &file),
        Command::Eval(args) => eval(args, &file),
        Command::Arena(args) => arena(args, &file),
        Command::Export(args) => export(&args.traces, &args.out),
    }
}

fn read_corpus(path: Option<PathBuf>, file: &FileConfig) -> Result<Vec<CitationSet>, CliError> {
    let path = path
        .or(file.corpus.clone())
        .ok_or_else(|| CliError::Config("no corpus given; pass --corpus or set it in the config file".into()))?;
    load_corpus(&path).map_err(|e| match e {
        CorpusError::Io { .. } => CliError::Config(e.to_string()),
        _ => CliError::Validation(format!("{}: {e}", path.display())),
    })
}

fn validate(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let records = parse_records(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if records.is_empty() {
        log::warn!("{}: corpus contains zero papers", path.display());
        println!("0 papers");
        return Ok(());
    }
    let mut failed = 0;
    let mut ids = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        match r {
            Ok(set) if !ids.insert(set.id().to_string()) => {
                failed += 1;
                println!("FAIL {}: paper id appears more than once", set.id());
            }
            Ok(set) => println!("ok   {} ({} cited papers)", set.id(), set.len()),
            Err(CorpusError::Validation { paper_id, rule }) => {
                failed += 1;
                println!("FAIL {paper_id}: {rule}");
            }
            Err(e) => {
                failed += 1;
                println!("FAIL record {i}: {e}");
            }
        }
    }
    println!("{} papers, {failed} invalid", records.len());
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} of {} papers are invalid", records.len())));
    }
    Ok(())
}

/// Fails with a transport error if any distinct endpoint does not answer.
fn probe_all(endpoints: &Endpoints) -> Result<(), CliError> {
    let mut seen = BTreeSet::new();
    for e in [&endpoints.judge, &endpoints.generator, &endpoints.feedback] {
        if seen.insert(e.url.clone()) {
            probe(&e.config(), Duration::from_secs(10))
                .map_err(|err| CliError::Transport(format!("endpoint {} unreachable: {err}", e.url)))?;
        }
    }
    Ok(())
}

fn remote_judge(endpoints: &Endpoints) -> Result<Judge, CliError> {
    Judge::remote(endpoints.judge_config()).map_err(|e| CliError::Config(e.to_string()))
}

fn chat_model(name: &str, endpoint: &settings::Endpoint) -> Result<ChatTextModel, CliError> {
    let backend = OpenAiChat::new(&endpoint.config()).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(ChatTextModel::new(name, Arc::new(backend), endpoint.temperature, RetryPolicy::default()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    stub: bool,
    jobs: usize,
    papers: Vec<&'a str>,
    endpoints: Option<&'a Endpoints>,
}

fn run(args: RunArgs, file: &FileConfig) -> Result<(), CliError> {
    let iterations = args.iterations.or(file.iterations).unwrap_or(5);
    let scenario = match args.scenario {
        Some(s) => s,
        None => match &file.scenario {
            Some(s) => s.parse().map_err(|e| CliError::Config(format!("scenario: {e}")))?,
            None => Scenario::Full,
        },
    };
    let style = match args.style {
        Some(s) => s,
        None => match &file.style {
            Some(s) => s.parse().map_err(|e| CliError::Config(format!("style: {e}")))?,
            None => PositioningStyle::PerParagraph,
        },
    };
    let config = RunConfig {
        iterations,
        scenario,
        holdout_fraction: args.holdout_fraction.or(file.holdout_fraction).unwrap_or(0.25),
        intervention_iteration: args
            .intervention_iteration
            .or(file.intervention_iteration)
            .unwrap_or(iterations.min(3)),
        expected_style: style,
        tolerance: args.tolerance.or(file.tolerance).unwrap_or(0.25),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let jobs = args
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let out = args
        .out
        .or(file.out.clone())
        .ok_or_else(|| CliError::Config("no output directory; pass --out".into()))?;
    let corpus = read_corpus(args.corpus, file)?;
    if corpus.is_empty() {
        return Err(CliError::Validation("corpus contains zero papers".into()));
    }

    let endpoints = if args.stub {
        None
    } else {
        let e = args.endpoints.resolve(file)?;
        probe_all(&e)?;
        Some(e)
    };
    let (generator, feedback, judge): (Box<dyn TextModel>, Box<dyn TextModel>, Judge) = match &endpoints {
        None => (
            Box::new(StubGenerator::new("stub-generator", StubMode::CiteAll, config.seed)),
            Box::new(StubFeedback),
            heuristic_judge(config.seed),
        ),
        Some(e) => (
            Box::new(chat_model(&e.generator.model, &e.generator)?),
            Box::new(chat_model(&e.feedback.model, &e.feedback)?),
            remote_judge(e)?,
        ),
    };
    let mode = if args.sequential { Parallelism::Sequential } else { Parallelism::Parallel };
    let judge = judge.with_parallelism(mode);
    let who = Participants {
        generator: generator.as_ref(),
        feedback: feedback.as_ref(),
        judge: &judge,
    };

    let manifest = Manifest {
        config: &config,
        stub: args.stub,
        jobs,
        papers: corpus.iter().map(CitationSet::id).collect(),
        endpoints: endpoints.as_ref(),
    };
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join("run.json"), &manifest).map_err(|e| CliError::Config(e.to_string()))?;

    log::info!(
        "running {} papers, K = {}, scenario {}, seed {}",
        corpus.len(),
        config.iterations,
        config.scenario,
        config.seed
    );
    let results = run_many(&corpus, who, &config, jobs, mode);
    let trace_dir = out.join("traces");
    let mut traces = Vec::new();
    let mut truncated = Vec::new();
    for (set, result) in corpus.iter().zip(results) {
        let trace = result.map_err(|e| CliError::Config(format!("{}: {e}", set.id())))?;
        let path = trace.save(&trace_dir).map_err(|e| CliError::Config(e.to_string()))?;
        log::info!("{}: {} iterations -> {}", set.id(), trace.iterations.len(), path.display());
        if let Some(reason) = &trace.truncated {
            truncated.push(format!("{}: {reason}", set.id()));
        }
        traces.push(trace);
    }
    if !truncated.is_empty() {
        return Err(CliError::Transport(format!(
            "generation stopped early, tables not written: {}",
            truncated.join("; ")
        )));
    }
    write_tables(&traces, &out)
}

fn write_tables(traces: &[RunTrace], out: &Path) -> Result<(), CliError> {
    let table = aggregate(traces).map_err(|e| CliError::Validation(e.to_string()))?;
    let w = |name: &str, text: &str| write_file(&out.join(name), text).map_err(|e| CliError::Config(e.to_string()));
    w("scores.csv", &table.to_csv())?;
    w("scores.json", &table.to_json())?;
    if traces[0].config.iterations >= 2 {
        let deltas = delta_table(traces).map_err(|e| CliError::Validation(e.to_string()))?;
        w("deltas.csv", &deltas.to_csv())?;
    }
    log::info!("tables written to {}", out.display());
    Ok(())
}

fn eval(args: EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    let corpus = read_corpus(args.corpus, file)?;
    let set = corpus
        .iter()
        .find(|s| s.id() == args.paper)
        .ok_or_else(|| CliError::Validation(format!("unknown paper id `{}`", args.paper)))?;
    let draft = if args.draft.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin()).map_err(|e| io(Path::new("<stdin>"), e))?
    } else {
        std::fs::read_to_string(&args.draft).map_err(|e| io(&args.draft, e))?
    };
    let judge = if args.stub {
        heuristic_judge(args.seed.or(file.seed).unwrap_or(0))
    } else {
        let e = args.endpoints.resolve(file)?;
        probe(&e.judge.config(), Duration::from_secs(10))
            .map_err(|err| CliError::Transport(format!("endpoint {} unreachable: {err}", e.judge.url)))?;
        remote_judge(&e)?
    };
    let style = match args.style {
        Some(s) => s,
        None => match &file.style {
            Some(s) => s.parse().map_err(|e| CliError::Config(format!("style: {e}")))?,
            None => PositioningStyle::PerParagraph,
        },
    };
    let tolerance = args.tolerance.or(file.tolerance).unwrap_or(0.25);
    let provided = set.indices();
    let target = EvalTarget {
        set,
        provided: &provided,
        expected_style: style,
        tolerance,
    };
    let report = evaluate_draft(1, &draft, &target, &judge).map_err(|e| CliError::Validation(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match args.out {
        Some(path) => write_file(&path, &json).map_err(|e| CliError::Config(e.to_string())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn arena(args: ArenaArgs, file: &FileConfig) -> Result<(), CliError> {
    let dir = args
        .dir
        .or(file.arena.dir.clone())
        .ok_or_else(|| CliError::Config("no arena directory; pass --dir".into()))?;
    let addr = args
        .addr
        .or(file.arena.addr.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let corpus = match args.corpus.or(file.corpus.clone()) {
        Some(p) => Some(read_corpus(Some(p), file)?),
        None => None,
    };
    let store = ArenaStore::open(&dir, args.seed.or(file.seed).unwrap_or(0), TrueSkillParams::default())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut state = rwgrade_arena::AppState::new(Arc::new(store));
    if let Some(c) = corpus {
        state = state.with_corpus(c);
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Config(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Config(e.to_string()))?;
        log::info!("arena listening on http://{local}/v1");
        rwgrade_arena::serve(listener, state, rwgrade_arena::shutdown_signal())
            .await
            .map_err(|e| CliError::Config(e.to_string()))
    })
}

fn collect_traces(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() || p.extension().is_some_and(|x| x == "json") {
                collect_traces(&p, out)?;
            }
        }
    } else if path.exists() {
        out.push(path.to_path_buf());
    } else {
        return Err(CliError::Config(format!("{} does not exist", path.display())));
    }
    Ok(())
}

fn export(paths: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut files = Vec::new();
    for p in paths {
        collect_traces(p, &mut files)?;
    }
    let mut traces = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| io(f, e))?;
        // Other JSON files (tables, manifests) may sit next to the traces.
        if !text.contains(rwgrade_core::pipeline::TRACE_SCHEMA) {
            continue;
        }
        traces.push(RunTrace::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", f.display())))?);
    }
    if traces.is_empty() {
        return Err(CliError::Validation("no traces found".into()));
    }
    log::info!("aggregating {} traces", traces.len());
    write_tables(&traces, out)
}
