//! `dialact`: corpus preparation, training, evaluation, offline analysis and
//! both servers behind one binary. Payloads go to stdout, diagnostics to stderr.

use std::io::{IsTerminal, Read};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dialact_core::analysis::DEFAULT_TOP_K;
use dialact_core::corpus::{
    canonical_test_ids, load_swda, most_common_class_baseline, read_id_list, read_prepared, split_corpus,
    write_prepared, Conversation, CorpusSplit, SplitLists, DEFAULT_VALIDATION_CONVERSATIONS,
};
use dialact_core::models::{load_model, load_no_context, save_context, save_no_context, LoadedModel};
use dialact_core::training::{
    context_sweep, evaluate, train_context, train_no_context, BoundaryPolicy, ContextPredictor, EvalReport,
    ResultsTable, TrainConfig,
};
use dialact_server::model_server::{DEFAULT_MAX_UTTERANCES, DEFAULT_MAX_UTTERANCE_CHARS};
use dialact_server::{serve_gateway, serve_model, GatewayConfig, ModelService, ServerConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dialact", version, about = "Dialogue-act recognition with context-aware LSTMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a SwDA release, split it and write normalized JSONL plus split lists.
    PrepareCorpus(PrepareArgs),
    /// Train the no-context classifier or a context model on a prepared corpus.
    Train(TrainArgs),
    /// Score a model (or the most-common-class baseline) on one split.
    Evaluate(EvaluateArgs),
    /// Train context models for several n over one frozen encoder.
    Sweep(SweepArgs),
    /// Analyze a conversation (one utterance per line) from a file or stdin.
    Analyze(AnalyzeArgs),
    /// Run the model server.
    ServeModel(ServeModelArgs),
    /// Run the web gateway.
    ServeWeb(ServeWebArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    swda_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Test conversation ids, one per line (default: the bundled 19-conversation list).
    #[arg(long)]
    test_list: Option<PathBuf>,
    /// Training conversation ids (default: every remaining conversation).
    #[arg(long)]
    train_list: Option<PathBuf>,
    /// Conversations to leave out of the default training set.
    #[arg(long, conflicts_with = "train_list")]
    exclude_list: Option<PathBuf>,
    /// Conversations carved from the end of the training list for validation.
    #[arg(long, default_value_t = DEFAULT_VALIDATION_CONVERSATIONS)]
    validation: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Phase {
    NoContext,
    Context,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Skip,
    Pad,
}

impl From<Policy> for BoundaryPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Skip => BoundaryPolicy::Skip,
            Policy::Pad => BoundaryPolicy::Pad,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Validation,
    Test,
}

/// Training settings: a TOML file of `TrainConfig` fields, overridden by flags.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    policy: Option<Policy>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.max_epochs = epochs;
        }
        if let Some(policy) = self.policy {
            config.boundary_policy = policy.into();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    phase: Phase,
    /// Directory written by `prepare-corpus`.
    #[arg(long)]
    data: PathBuf,
    /// Context size n (context phase; defaults to the config's `context_size`).
    #[arg(long)]
    n: Option<usize>,
    /// Trained no-context model used as the frozen encoder (context phase).
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    out_model: PathBuf,
    /// Write the JSON training report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    settings: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Add the most-common-class row.
    #[arg(long)]
    baseline: bool,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    #[arg(long, value_enum, default_value = "skip")]
    policy: Policy,
    /// Write the JSON report (table plus per-tag metrics) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    encoder: PathBuf,
    /// Context sizes to train, e.g. `--n 1,2,3,4`.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4])]
    n: Vec<usize>,
    /// Save each context model as `context-n<N>.dwm` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    settings: ConfigArgs,
}

#[derive(Args)]
struct ModelPaths {
    #[arg(long)]
    no_context_model: PathBuf,
    #[arg(long)]
    context_model: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    models: ModelPaths,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    /// Conversation file; stdin when absent or `-`.
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ServeModelArgs {
    #[arg(long, default_value = "127.0.0.1:8081")]
    bind: SocketAddr,
    #[command(flatten)]
    models: ModelPaths,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_UTTERANCES)]
    max_utterances: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_UTTERANCE_CHARS)]
    max_utterance_chars: usize,
}

#[derive(Args)]
struct ServeWebArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// TOML file listing the model server backends.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built UI assets (must contain index.html).
    #[arg(long)]
    assets_dir: Option<PathBuf>,
    #[arg(long)]
    timeout_secs: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::PrepareCorpus(args) => prepare_corpus(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Sweep(args) => sweep(args),
        Command::Analyze(args) => analyze(args),
        Command::ServeModel(args) => serve_model_cmd(args),
        Command::ServeWeb(args) => serve_web(args),
    }
}

fn utterance_count(convs: &[Conversation]) -> usize {
    convs.iter().map(Conversation::len).sum()
}

fn prepare_corpus(args: PrepareArgs) -> Result<()> {
    let all = load_swda(&args.swda_dir)?;
    let test = match &args.test_list {
        Some(path) => read_id_list(path)?,
        None => canonical_test_ids(),
    };
    let lists = match (&args.train_list, &args.exclude_list) {
        (Some(path), _) => SplitLists { train: read_id_list(path)?, test, validation_count: args.validation },
        (None, exclude) => {
            let excluded = exclude.as_deref().map(read_id_list).transpose()?.unwrap_or_default();
            SplitLists::remaining(&all, test, &excluded, args.validation)
        }
    };
    let split = split_corpus(&all, &lists)?;
    write_prepared(&args.out, &split)?;

    let stats = split.stats();
    let (train_convs, train_utts) = stats.full_train();
    let unused = all.len() - train_convs - stats.test_conversations;
    tracing::info!(loaded = all.len(), unused, out = %args.out.display(), "corpus prepared");
    println!("{:<24}{:>14}{:>12}", "Split", "Conversations", "Utterances");
    println!("{:<24}{:>14}{:>12}", "Train", train_convs, train_utts);
    println!(
        "{:<24}{:>14}{:>12}",
        "  (validation carve-out)", stats.validation_conversations, stats.validation_utterances
    );
    println!("{:<24}{:>14}{:>12}", "Test", stats.test_conversations, stats.test_utterances);
    Ok(())
}

fn load_split(data: &Path) -> Result<CorpusSplit> {
    read_prepared(data).with_context(|| format!("loading prepared corpus from {}", data.display()))
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = args.settings.resolve()?;
    if let Some(n) = args.n {
        config.context_size = n;
    }
    let split = load_split(&args.data)?;
    let run = match args.phase {
        Phase::NoContext => {
            let (model, run) = train_no_context(&split, &config)?;
            save_no_context(&model, &args.out_model)?;
            run
        }
        Phase::Context => {
            let Some(encoder_path) = &args.encoder else {
                bail!("the context phase needs a trained no-context model: pass --encoder <file>");
            };
            let encoder = Arc::new(load_no_context(encoder_path)?);
            let (model, run) = train_context(&split, encoder, config.context_size, &config)?;
            save_context(&model, &args.out_model)?;
            run
        }
    };
    tracing::info!(
        model = %run.model_id,
        best_epoch = run.best_epoch,
        test_accuracy = run.test.accuracy_percent(),
        out = %args.out_model.display(),
        "training finished"
    );
    emit_json(&run, args.report.as_deref())
}

#[derive(Serialize)]
struct EvaluationOutput {
    table: ResultsTable,
    reports: Vec<EvalReport>,
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    if args.model.is_none() && !args.baseline {
        bail!("nothing to evaluate: pass --model <file> and/or --baseline");
    }
    let split = load_split(&args.data)?;
    let (name, convs) = match args.split {
        SplitName::Train => ("train", &split.train),
        SplitName::Validation => ("validation", &split.validation),
        SplitName::Test => ("test", &split.test),
    };
    let mut table = ResultsTable::new(name);
    let mut reports = Vec::new();
    if args.baseline {
        let scored =
            CorpusSplit { train: split.train.clone(), validation: split.validation.clone(), test: convs.clone() };
        table.push_baseline(most_common_class_baseline(&scored)?, utterance_count(convs));
    }
    if let Some(path) = &args.model {
        match load_model(path)? {
            LoadedModel::NoContext(model) => {
                let report = evaluate(&model, convs, name)?;
                table.push_no_context(&report);
                reports.push(report);
            }
            LoadedModel::Context(model) => {
                let report = evaluate(&ContextPredictor { model: &model, policy: args.policy.into() }, convs, name)?;
                table.push_context(model.context_size(), &report);
                reports.push(report);
            }
        }
    }
    println!("{}", table.render_text());
    if let Some(path) = &args.report {
        emit_json(&EvaluationOutput { table, reports }, Some(path))?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    if args.n.is_empty() || args.n.contains(&0) {
        bail!("--n takes positive context sizes");
    }
    let config = args.settings.resolve()?;
    let split = load_split(&args.data)?;
    let encoder = Arc::new(load_no_context(&args.encoder)?);

    let mut table = ResultsTable::new("test");
    table.push_baseline(most_common_class_baseline(&split)?, utterance_count(&split.test));
    let encoder_report = evaluate(encoder.as_ref(), &split.test, "test")?;
    table.push_no_context(&encoder_report);
    let result = context_sweep(&split, encoder, &args.n, &config)?;
    table.rows.extend(result.table.rows.iter().cloned());

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for model in &result.models {
            save_context(model, &dir.join(format!("context-n{}.dwm", model.context_size())))?;
        }
    }
    println!("{}", table.render_text());
    if let Some(path) = &args.report {
        let mut reports = vec![encoder_report];
        reports.extend(result.runs.iter().map(|r| r.test.clone()));
        emit_json(&EvaluationOutput { table, reports }, Some(path))?;
    }
    Ok(())
}

fn read_input(input: Option<&Path>) -> Result<String> {
    let mut text = String::new();
    match input {
        Some(path) if path != Path::new("-") => {
            text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        }
        _ => {
            std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
        }
    }
    Ok(text)
}

fn server_config(models: &ModelPaths) -> ServerConfig {
    ServerConfig::new(&models.no_context_model, &models.context_model)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let config = ServerConfig { top_k: args.top_k, ..server_config(&args.models) };
    let service = ModelService::load(&config)?;
    let text = read_input(args.input.as_deref())?;
    let lines: Vec<&str> = text.lines().collect();
    let body = serde_json::json!({ "api_version": dialact_core::analysis::API_VERSION, "utterances": lines });
    let reply = service.analyze_body(body.to_string().as_bytes());
    let body = String::from_utf8(reply.body).expect("JSON is UTF-8");
    if !reply.status.is_success() {
        bail!("analysis rejected ({}): {body}", reply.status.as_u16());
    }
    println!("{body}");
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting async runtime")
}

fn serve_model_cmd(args: ServeModelArgs) -> Result<()> {
    let config = ServerConfig {
        bind: args.bind,
        top_k: args.top_k,
        max_utterances: args.max_utterances,
        max_utterance_chars: args.max_utterance_chars,
        ..server_config(&args.models)
    };
    runtime()?.block_on(serve_model(config))?;
    Ok(())
}

fn serve_web(args: ServeWebArgs) -> Result<()> {
    let Some(path) = &args.config else {
        bail!("no model server backends configured: pass --config <file.toml>");
    };
    let mut config = GatewayConfig::load(path)?;
    if let Some(secs) = args.timeout_secs {
        config.timeout_secs = secs;
    }
    runtime()?.block_on(serve_gateway(args.bind, config, args.assets_dir))?;
    Ok(())
}
