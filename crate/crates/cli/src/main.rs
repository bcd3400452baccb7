mod config;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use linkpilot::corpus::load_corpus;
use linkpilot::eval::{evaluate, read_report, report, report_bytes, run_id_for, write_error_file, ErrorType, Report};
use linkpilot::kb::{AliasTable, Entity, EntityStore, LinkCount};
use linkpilot::llm::{BackendFamily, Cassette, ClientMode, HttpBackend, LlmClient};
use linkpilot::pipeline::{write_artifact, Linker, PipelineConfig, SelectionMode, Stores};
use linkpilot::prompts::TemplateSet;
use linkpilot::retrieval::{HttpRetriever, LexicalIndex, Retriever};
use linkpilot_review::{ReviewStore, RunSource};

use config::FileConfig;

const DEFAULT_OPENAI_URL: &str = "https://api.openai.com/v1/chat/completions";
const DEFAULT_ANTHROPIC_URL: &str = "https://api.anthropic.com/v1/messages";

#[derive(Parser)]
#[command(name = "linkpilot", version, about = "Prompt-driven entity disambiguation toolkit")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the alias table and entity store from hyperlink counts.
    BuildKb(BuildKbArgs),
    /// Link every mention of a corpus and write a run artifact.
    Run(Box<RunArgs>),
    /// Score a run artifact against its corpus and write a report.
    Eval(EvalArgs),
    /// Flatten a report into one error record per line.
    Errors(ErrorsArgs),
    /// Serve the review API.
    Serve(ServeArgs),
    /// Merge reports into a comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct BuildKbArgs {
    /// `surface \t entity_id \t count` per line.
    #[arg(long)]
    counts: PathBuf,
    /// Optional `entity_id \t description` per line.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    alias_table: PathBuf,
    #[arg(long)]
    entities: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    alias_table: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Serve every completion from the cassette; never touch the network.
    #[arg(long, group = "mode")]
    replay: bool,
    /// Call the backend on cassette misses and append the responses.
    #[arg(long, group = "mode")]
    record: bool,
    /// Call the backend for every completion.
    #[arg(long, group = "mode")]
    live: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_candidates: Option<usize>,
    #[arg(long)]
    no_retrieval: bool,
    #[arg(long)]
    no_augmentation: bool,
    /// Answer with the most frequent alias entity; no model calls.
    #[arg(long)]
    prior_only: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Directory holding `<version>/` template folders.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    template_version: Option<String>,
    /// Remote retriever endpoint; the built-in lexical index is used otherwise.
    #[arg(long)]
    retriever_url: Option<String>,
    #[arg(long)]
    backend_url: Option<String>,
    /// `openai-chat` or `anthropic-messages`.
    #[arg(long, value_parser = parse_family)]
    backend_family: Option<BackendFamily>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run artifact.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Report destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to a digest of the artifact bytes.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct ErrorsArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long = "type")]
    error_type: Option<ErrorType>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Run artifact; add more runs through the config file.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    #[arg(long)]
    addr: Option<String>,
    /// Directory with the review UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files, one table row each.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with a stable kind for scripts to branch on.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { kind: "error", code: 1, error: e.into() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = serde_json::json!({"error": {"kind": f.kind, "message": format!("{:#}", f.error)}});
            eprintln!("{msg}");
            ExitCode::from(f.code)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::BuildKb(a) => build_kb(a),
        Command::Run(a) => run(*a, file),
        Command::Eval(a) => eval(a, file),
        Command::Errors(a) => errors(a),
        Command::Serve(a) => serve(a, file),
        Command::Report(a) => compare(a),
    }
}

fn parse_family(s: &str) -> Result<BackendFamily, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown backend family {s:?}"))
}

fn required(value: Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    value.ok_or_else(|| anyhow!("--{name} is required (or set it in the config file)"))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(bytes)?;
            w.flush()?;
        }
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn build_kb(a: BuildKbArgs) -> Result<(), Failure> {
    let reader = BufReader::new(std::fs::File::open(&a.counts).with_context(|| format!("opening {}", a.counts.display()))?);
    let mut counts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(s), Some(e), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(anyhow!("{} line {}: expected surface, entity_id and count separated by tabs", a.counts.display(), i + 1).into());
        };
        let count = c.trim().parse().with_context(|| format!("{} line {}: bad count {c:?}", a.counts.display(), i + 1))?;
        counts.push(LinkCount::new(s, e, count));
    }
    let table = AliasTable::build(&counts)?;
    let mut store = match &a.descriptions {
        Some(p) => EntityStore::load(p)?,
        None => EntityStore::new(),
    };
    for c in &counts {
        if !store.contains(&c.entity_id) {
            store.insert(Entity::new(c.entity_id.clone(), ""))?;
        }
    }
    let mut w = create(&a.alias_table)?;
    table.write(&mut w)?;
    w.flush()?;
    let mut w = create(&a.entities)?;
    store.write(&mut w)?;
    w.flush()?;
    log::info!("{} surfaces, {} entities", table.len(), store.len());
    Ok(())
}

fn run(a: RunArgs, file: FileConfig) -> Result<(), Failure> {
    let f = file.run;
    let corpus_path = required(a.corpus.or(f.corpus), "corpus")?;
    let alias_path = required(a.alias_table.or(f.alias_table), "alias-table")?;
    let entities_path = required(a.entities.or(f.entities), "entities")?;
    let out = required(a.out.or(f.out), "out")?;
    let mode = if a.replay {
        ClientMode::Replay
    } else if a.record {
        ClientMode::Record
    } else if a.live {
        ClientMode::Live
    } else {
        f.mode.unwrap_or(ClientMode::Replay)
    };

    let prior_only = a.prior_only || f.prior_only.unwrap_or(false);
    let mut cfg = if prior_only { PipelineConfig::prior_only() } else { PipelineConfig::default() };
    if let Some(n) = a.max_candidates.or(f.max_candidates) {
        cfg.max_candidates = n;
    }
    cfg.prior_k = f.prior_k;
    cfg.retrieval_k = f.retrieval_k;
    if !prior_only {
        cfg.use_retrieval = !a.no_retrieval && f.use_retrieval.unwrap_or(true);
        cfg.use_augmentation = !a.no_augmentation && f.use_augmentation.unwrap_or(true);
    }
    if let Some(m) = a.model.or(f.model) {
        cfg.prompt.model_id = m;
    }
    if let Some(t) = f.temperature {
        cfg.prompt.temperature = t;
    }
    cfg.prompt.excerpt_window = f.excerpt_window;
    cfg.parallelism = a.parallelism.or(f.parallelism).unwrap_or(1);
    if let Some(v) = a.template_version.or(f.template_version) {
        cfg.template_version = v;
    }
    cfg.validate()?;

    let templates = TemplateSet::load(a.templates.or(f.templates).as_deref(), &cfg.template_version)?;
    let corpus = load_corpus(&corpus_path)?;
    let alias = AliasTable::load(&alias_path)?;
    let entities = EntityStore::load(&entities_path)?;
    let retriever: Option<Box<dyn Retriever>> = if !cfg.use_retrieval {
        None
    } else if let Some(url) = a.retriever_url.or(f.retriever_url) {
        Some(Box::new(HttpRetriever::new(url, Duration::from_secs(30))?))
    } else {
        Some(Box::new(LexicalIndex::build(&entities)?))
    };
    let stores = Stores { alias, entities, retriever };

    let backend_cfg = file.backend;
    let client = {
        let cassette_path = a.cassette.or(f.cassette);
        let family = a.backend_family.or(backend_cfg.family).unwrap_or_default();
        let backend = || -> anyhow::Result<Arc<HttpBackend>> {
            let url = a.backend_url.clone().or(backend_cfg.url.clone()).unwrap_or_else(|| match family {
                BackendFamily::OpenaiChat => DEFAULT_OPENAI_URL.into(),
                BackendFamily::AnthropicMessages => DEFAULT_ANTHROPIC_URL.into(),
            });
            let timeout = Duration::from_secs(backend_cfg.timeout_secs.unwrap_or(60));
            Ok(Arc::new(HttpBackend::from_env(family, url, timeout).map_err(|e| anyhow!("{e:?}"))?))
        };
        let client = match mode {
            // Prior-only runs issue no completions and need no cassette.
            ClientMode::Replay if prior_only && cassette_path.is_none() => {
                LlmClient::replay(Arc::new(Cassette::in_memory()))
            }
            ClientMode::Replay => {
                let p = required(cassette_path, "cassette")?;
                LlmClient::replay(Arc::new(Cassette::load(&p)?))
            }
            ClientMode::Record => {
                let p = required(cassette_path, "cassette")?;
                LlmClient::record(backend()?, Arc::new(Cassette::open_append(&p)?))
            }
            ClientMode::Live => LlmClient::live(backend()?),
        };
        let client = match backend_cfg.retry {
            Some(r) => client.with_retry(r),
            None => client,
        };
        let limit = backend_cfg.rate_limit.unwrap_or(linkpilot::llm::RateLimit {
            max_in_flight: cfg.parallelism,
            ..Default::default()
        });
        client.with_rate_limit(limit)
    };

    let mentions = linkpilot::corpus::mention_count(&corpus);
    log::info!(
        "linking {mentions} mentions in {} documents ({mode:?}, parallelism {}, retrieval {}, augmentation {}{})",
        corpus.len(),
        cfg.parallelism,
        cfg.use_retrieval,
        cfg.use_augmentation,
        if cfg.selection == SelectionMode::PriorOnly { ", prior only" } else { "" }
    );
    let linker = Linker::new(cfg, templates, &stores, &client)?;
    let result = linker.link_corpus(&corpus);
    let mut w = create(&out)?;
    write_artifact(&mut w, &result)?;
    log::info!(
        "{} predictions, {} completions, {:.2}s -> {}",
        result.predictions.len(),
        result.counters.completions,
        result.elapsed.as_secs_f64(),
        out.display()
    );
    if let Some(ab) = &result.aborted {
        let kind = if ab.error.contains("cassette miss") { "cassette_miss" } else { "run_aborted" };
        return Err(Failure {
            kind,
            code: 3,
            error: anyhow!("run aborted: {}", ab.error),
        });
    }
    Ok(())
}

fn eval(a: EvalArgs, file: FileConfig) -> Result<(), Failure> {
    let corpus_path = required(a.corpus.or(file.run.corpus), "corpus")?;
    let bytes = std::fs::read(&a.run).with_context(|| format!("reading {}", a.run.display()))?;
    let artifact = linkpilot::pipeline::read_artifact(bytes.as_slice())?;
    let corpus = load_corpus(&corpus_path)?;
    let run_id = a.run_id.unwrap_or_else(|| run_id_for(&bytes));
    let r = report(&evaluate(&artifact, &corpus, &run_id)?);
    let m = &r.metrics;
    let summary = format!(
        "run {} precision {:.4} recall {:.4} f1 {:.4} gold_coverage {:.4} errors {}",
        r.run_id, m.precision, m.recall, m.f1, r.gold_coverage, r.total_errors
    );
    match &a.out {
        Some(p) => {
            output(Some(p), &report_bytes(&r))?;
            println!("{summary}");
        }
        None => {
            eprintln!("{summary}");
            output(None, &report_bytes(&r))?;
        }
    }
    Ok(())
}

fn load_report(path: &Path) -> anyhow::Result<Report> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_report(&bytes).with_context(|| format!("parsing report {}", path.display()))
}

fn errors(a: ErrorsArgs) -> Result<(), Failure> {
    let mut r = load_report(&a.report)?;
    if let Some(t) = a.error_type {
        for d in &mut r.per_document {
            d.errors.retain(|e| e.error_type == t);
        }
    }
    let mut buf = Vec::new();
    write_error_file(&mut buf, &r)?;
    output(a.out.as_deref(), &buf)?;
    Ok(())
}

fn serve(a: ServeArgs, file: FileConfig) -> Result<(), Failure> {
    let mut sources = file.serve.runs;
    if let Some(artifact) = a.run {
        let corpus = required(a.corpus.or(file.run.corpus), "corpus")?;
        sources.push(RunSource { artifact, corpus, entities: a.entities, cassette: a.cassette });
    }
    if sources.is_empty() {
        return Err(anyhow!("no runs to serve: pass --run or list [[serve.runs]] in the config").into());
    }
    let store = ReviewStore::open(&sources)?;
    let addr = a.addr.or(file.serve.addr).unwrap_or_else(|| "127.0.0.1:8080".into());
    let static_dir = a.static_dir.or(file.serve.static_dir);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(linkpilot_review::serve(store, &addr, static_dir.as_deref()))?;
    Ok(())
}

/// Markdown table, one row per report, in argument order.
fn comparison_table(rows: &[(String, Report)]) -> String {
    let mut out = String::from(
        "| report | run | retrieval | augmentation | max_candidates | precision | recall | f1 | gold_coverage | ALTERNATIVE_ENTITY | FAIL_TO_REJECT | MISS_GT | MISS_CANDIDATE |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for (name, r) in rows {
        let m = &r.metrics;
        let counts: Vec<String> = ErrorType::ALL.iter().map(|t| r.errors_by_type.get(t).copied().unwrap_or(0).to_string()).collect();
        out.push_str(&format!(
            "| {name} | {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |\n",
            r.run_id,
            r.config.use_retrieval,
            r.config.use_augmentation,
            r.config.max_candidates,
            m.precision,
            m.recall,
            m.f1,
            r.gold_coverage,
            counts.join(" | ")
        ));
    }
    out
}

fn compare(a: ReportArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for p in &a.reports {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push((name, load_report(p)?));
    }
    output(a.out.as_deref(), comparison_table(&rows).as_bytes())?;
    Ok(())
}
