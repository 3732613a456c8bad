mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anchorkit::backend::{CompletionProvider, HashEmbedder, MockProvider};
use anchorkit::build::{self, BuildConfig, BuildMode, EPOCH_TIMESTAMP};
use anchorkit::injection::{self, HostMemories, DEFAULT_QUERY_BUDGET};
use anchorkit::kb::{self, AnchorKb, UsageSummary};
use anchorkit::par::Exec;
use anchorkit::retrieval::{self, RetrievalConfig};
use anchorkit::{gain, ingest};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Build and query structured memory anchors for long conversations.
#[derive(Debug, Parser)]
#[command(name = "anchorkit", version)]
struct Cli {
    /// Optional TOML config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract anchors from a conversation and write a knowledge base.
    Build(BuildArgs),
    /// Select anchors for a query and print them, expansion queries or a prompt.
    Query(QueryArgs),
    /// Regress gains on base accuracy and test per-host slopes.
    Analyze(AnalyzeArgs),
    /// Print store sizes and provider usage of a knowledge base.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Default,
    Parallel,
    Triple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderArg {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Selection,
    Queries,
    Prompt,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Conversation JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Output knowledge-base directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    batch_entity: Option<usize>,
    #[arg(long)]
    batch_event: Option<usize>,
    #[arg(long)]
    batch_topic: Option<usize>,
    /// Topic-batch overlap fraction in [0, 1).
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    /// Mock fixture directory (default: the input file's directory).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Event dedup threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    cooccur_threshold: Option<u32>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Knowledge-base directory.
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    query: String,
    /// Anchors per module.
    #[arg(long)]
    k: Option<usize>,
    /// Minimum similarity.
    #[arg(long)]
    sigma: Option<f64>,
    /// Expansion-query budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum, default_value = "selection")]
    emit: Emit,
    /// Host memories: a file with one `## <speaker>` section per speaker.
    #[arg(long)]
    memories: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// CSV with columns host,metric,base,delta (default: bundled table).
    csv: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long, default_value = "gain_report.json")]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    kb: PathBuf,
}

const EXIT_MISSING: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_INTERNAL: u8 = 70;

fn exit_code(err: &anyhow::Error) -> u8 {
    use anchorkit::Error as E;
    let Some(e) = err.downcast_ref::<E>() else {
        return EXIT_INTERNAL;
    };
    match e {
        E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
        E::Argument(_) => EXIT_USAGE,
        E::Version { .. } => EXIT_DATA,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

fn category(code: u8) -> &'static str {
    match code {
        EXIT_MISSING => "missing-input",
        EXIT_USAGE => "usage",
        EXIT_DATA => "data",
        _ => "internal",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            match stdout
                .write_all(out.as_bytes())
                .and_then(|()| stdout.flush())
            {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    eprintln!("error[internal]: writing output: {e}");
                    ExitCode::from(EXIT_INTERNAL)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error[{}]: {err}", category(code));
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Build(a) => cmd_build(a, &cfg),
        Command::Query(a) => cmd_query(a, &cfg),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn usage_error(msg: impl Into<String>) -> anyhow::Error {
    anchorkit::Error::Argument(msg.into()).into()
}

fn build_config(a: &BuildArgs, file: &config::BuildSection) -> BuildConfig {
    let d = BuildConfig::default();
    BuildConfig {
        batch_entity: a
            .batch_entity
            .or(file.batch_entity)
            .unwrap_or(d.batch_entity),
        batch_event: a.batch_event.or(file.batch_event).unwrap_or(d.batch_event),
        batch_topic: a.batch_topic.or(file.batch_topic).unwrap_or(d.batch_topic),
        overlap: a.overlap.or(file.overlap).unwrap_or(d.overlap),
        tau: a.tau.or(file.tau).unwrap_or(d.tau),
        cooccur_threshold: a
            .cooccur_threshold
            .or(file.cooccur_threshold)
            .unwrap_or(d.cooccur_threshold),
    }
}

fn build_mode(a: Option<ModeArg>, file: Option<&str>) -> anyhow::Result<BuildMode> {
    Ok(match a {
        Some(ModeArg::Default) => BuildMode::Default,
        Some(ModeArg::Parallel) => BuildMode::Parallel,
        Some(ModeArg::Triple) => BuildMode::Triple,
        None => match file {
            Some(s) => s.parse()?,
            None => BuildMode::Default,
        },
    })
}

fn provider_kind(a: Option<ProviderArg>, file: Option<&str>) -> anyhow::Result<ProviderArg> {
    Ok(match (a, file) {
        (Some(p), _) => p,
        (None, None | Some("mock")) => ProviderArg::Mock,
        (None, Some("remote")) => ProviderArg::Remote,
        (None, Some(other)) => return Err(usage_error(format!("unknown provider {other:?}"))),
    })
}

#[cfg(feature = "remote")]
fn remote_provider(cfg: &config::FileConfig) -> anyhow::Result<Box<dyn CompletionProvider>> {
    use anchorkit::backend::{RemoteConfig, RemoteProvider};
    let r = cfg
        .remote
        .as_ref()
        .ok_or_else(|| usage_error("the remote provider needs a [remote] config section"))?;
    let mut rc = RemoteConfig {
        endpoint: r.endpoint.clone(),
        model: r.model.clone(),
        api_key_env: r.api_key_env.clone(),
        ..RemoteConfig::default()
    };
    if let Some(m) = &r.embedding_model {
        rc.embedding_model = m.clone();
    }
    Ok(Box::new(RemoteProvider::new(rc)?))
}

#[cfg(not(feature = "remote"))]
fn remote_provider(_: &config::FileConfig) -> anyhow::Result<Box<dyn CompletionProvider>> {
    Err(usage_error(
        "this binary was built without the `remote` feature",
    ))
}

fn cmd_build(a: BuildArgs, cfg: &config::FileConfig) -> anyhow::Result<String> {
    let config = build_config(&a, &cfg.build);
    let mode = build_mode(a.mode, cfg.build.mode.as_deref())?;
    let kind = provider_kind(a.provider, cfg.build.provider.as_deref())?;
    let conversation = ingest::load_conversation(&a.input)?;
    let (provider, created_at): (Box<dyn CompletionProvider>, String) = match kind {
        ProviderArg::Mock => {
            let dir = a
                .fixtures
                .clone()
                .or_else(|| cfg.build.fixtures.clone())
                .unwrap_or_else(|| a.input.parent().unwrap_or(Path::new(".")).to_path_buf());
            (
                Box::new(MockProvider::from_dir(dir)),
                EPOCH_TIMESTAMP.to_string(),
            )
        }
        ProviderArg::Remote => (remote_provider(cfg)?, build::timestamp_now()),
    };
    let out = build::build_kb(&conversation, &config, mode, provider.as_ref(), &created_at)?;
    kb::save_kb(&out.kb, &a.out)?;
    let mut text = build_summary(&out.kb, out.wall_ms, out.warnings.len());
    let _ = writeln!(text, "wrote {}", a.out.display());
    Ok(text)
}

fn usage_table(usage: &UsageSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>12} {:>14} {:>12} {:>10}",
        "stage", "prompt_chars", "response_chars", "approx_tok", "wall_ms"
    );
    let rows = usage.by_mode.iter().map(|(m, u)| (m.as_str(), u));
    for (name, u) in rows.chain(std::iter::once(("total", &usage.total))) {
        let _ = writeln!(
            s,
            "{:<16} {:>12} {:>14} {:>12} {:>10}",
            name, u.prompt_chars, u.response_chars, u.approx_tokens, u.wall_ms
        );
    }
    s
}

fn store_counts(kb: &AnchorKb) -> String {
    format!(
        "conversation {} ({} utterances, mode {}): {} entities, {} events, {} traces, {} topics\n",
        kb.manifest.conversation_id,
        kb.manifest.utterance_seq_ids.len(),
        kb.manifest.build_mode.as_str(),
        kb.entities.len(),
        kb.events.events.len(),
        kb.events.traces.len(),
        kb.topics.len()
    )
}

fn build_summary(kb: &AnchorKb, wall_ms: u64, warnings: usize) -> String {
    let mut s = store_counts(kb);
    s.push_str(&usage_table(&kb.usage));
    let _ = writeln!(s, "build wall time: {wall_ms} ms; warnings: {warnings}");
    s
}

fn retrieval_config(a: &QueryArgs, file: &config::QuerySection) -> RetrievalConfig {
    let k =
        a.k.or(file.k)
            .unwrap_or(RetrievalConfig::default().k_entity);
    let mut c = RetrievalConfig::with_k(k);
    c.sigma = a.sigma.or(file.sigma).unwrap_or(c.sigma);
    c.candidate_cap = file.candidate_cap.unwrap_or(c.candidate_cap);
    c.temporal_reserved = file.temporal_reserved.unwrap_or(c.temporal_reserved);
    c
}

fn cmd_query(a: QueryArgs, cfg: &config::FileConfig) -> anyhow::Result<String> {
    if a.query.trim().is_empty() {
        return Err(usage_error("--query must not be empty"));
    }
    let rcfg = retrieval_config(&a, &cfg.query);
    let budget = a
        .budget
        .or(cfg.query.budget)
        .unwrap_or(DEFAULT_QUERY_BUDGET);
    let kb = kb::load_kb(&a.kb)?;
    let selection =
        retrieval::select_anchors(&kb, &HashEmbedder, &a.query, &rcfg, Exec::default())?;
    let mut text = String::new();
    match a.emit {
        Emit::Selection => text = serde_json::to_string_pretty(&selection)? + "\n",
        Emit::Queries => {
            let set = injection::expand_queries(&selection, budget);
            for (q, tag) in set.queries.iter().zip(&set.provenance) {
                let tag = serde_json::to_value(tag)?;
                let _ = writeln!(text, "{}\t{q}", tag.as_str().unwrap_or_default());
            }
        }
        Emit::Prompt => {
            let memories = match &a.memories {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| anchorkit::Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    HostMemories::parse(&text)?
                }
                None => HostMemories::default(),
            };
            let ctx = injection::format_injection(&selection);
            text = injection::assemble_prompt(&a.query, &memories, &ctx)? + "\n";
        }
    }
    Ok(text)
}

fn cmd_analyze(a: AnalyzeArgs) -> anyhow::Result<String> {
    let points = match &a.csv {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| anchorkit::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            gain::read_points(file)?
        }
        None => gain::bundled_points(),
    };
    let report = gain::analyze(&points)?;
    let mut text = report.render();
    let json = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::write(&a.report, json).map_err(|e| anchorkit::Error::Io {
        path: a.report.clone(),
        source: e,
    })?;
    let _ = writeln!(text, "wrote {}", a.report.display());
    Ok(text)
}

fn cmd_stats(a: StatsArgs) -> anyhow::Result<String> {
    let kb = kb::load_kb(&a.kb)?;
    let mut text = store_counts(&kb);
    let inferred = kb
        .entities
        .iter()
        .flat_map(|p| &p.relations)
        .filter(|r| r.inferred)
        .count();
    let multi = kb
        .events
        .traces
        .iter()
        .filter(|t| t.event_ids.len() > 1)
        .count();
    let _ = writeln!(
        text,
        "inferred relations: {inferred}; multi-event traces: {multi}"
    );
    text.push_str(&usage_table(&kb.usage));
    Ok(text)
}
