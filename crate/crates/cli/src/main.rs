use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kgmcqa_core::backends::{
    CachedExtractor, EmbeddingBackend, ExtractionBackend, FixtureManifest, HttpBackend, HttpBackendConfig,
};
use kgmcqa_core::kg::DEFAULT_SUMMARY_CAP;
use kgmcqa_core::run::{check_consistency, run_dataset, write_outputs, RunOptions, RunSummary};
use kgmcqa_core::store::sha256_hex;
use kgmcqa_core::template::parse_dataset;
use kgmcqa_core::transport::{HttpTransport, OfflineTransport, Transport, TransportConfig};
use kgmcqa_core::wiki::{FixtureWiki, MediaWikiClient, MediaWikiConfig, WikiSource, DEFAULT_ENDPOINT};
use kgmcqa_core::{Engine, EngineConfig, Execution};

#[derive(Parser)]
#[command(name = "kgmcqa", version, about = "Answer cloze multiple-choice questions by knowledge-graph verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a dataset and write the summary and per-item reports.
    Run(RunArgs),
    /// Recompute a finished run's statistics from its reports.
    Check {
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a dataset file without evaluating it.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Fixture,
    Http,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WikiKind {
    Fixture,
    Live,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,

    #[arg(long, value_enum, default_value = "fixture")]
    backend: BackendKind,

    /// Directory holding manifest.json and wiki.json for the fixture backends.
    #[arg(long, default_value = "fixtures")]
    fixtures: PathBuf,

    /// Base URL of the inference service.
    #[arg(long, env = "KGMCQA_ENDPOINT", default_value = "http://127.0.0.1:8000")]
    endpoint: String,

    /// Where extraction and Wikipedia responses are cached.
    #[arg(long, env = "KGMCQA_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Skip the entity-linking pass.
    #[arg(long)]
    no_el: bool,

    #[arg(long)]
    out: PathBuf,

    /// Also write one DOT graph and knowledge sidecar per option.
    #[arg(long)]
    export_dot: bool,

    /// Fail on the first lookup or item error instead of recording it.
    #[arg(long)]
    strict: bool,

    /// Knowledge source; defaults to the fixture snapshot for the fixture backend.
    #[arg(long, value_enum)]
    wiki: Option<WikiKind>,

    #[arg(long, env = "KGMCQA_WIKI_ENDPOINT", default_value = DEFAULT_ENDPOINT)]
    wiki_endpoint: String,

    /// Serve Wikipedia from the cache only.
    #[arg(long)]
    offline: bool,

    /// Items evaluated concurrently (default: CPU count).
    #[arg(long)]
    jobs: Option<usize>,

    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,

    /// Minimum similarity for a residual node pair to be matched; "none" disables it.
    #[arg(long, default_value = "0", value_parser = parse_threshold)]
    threshold: Threshold,

    #[arg(long, default_value_t = DEFAULT_SUMMARY_CAP)]
    summary_cap: usize,

    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,

    #[arg(long, default_value_t = 2)]
    retries: u32,

    /// Concurrent requests to the inference service.
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Clone, Copy, Debug)]
struct Threshold(Option<f64>);

fn parse_threshold(s: &str) -> std::result::Result<Threshold, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Threshold(None));
    }
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(-1.0..=1.0).contains(&v) {
        return Err("threshold must lie in [-1, 1]".into());
    }
    Ok(Threshold(Some(v)))
}

struct Backends {
    extractor: Arc<dyn ExtractionBackend>,
    embedder: Arc<dyn EmbeddingBackend>,
    wiki: Arc<dyn WikiSource>,
}

fn build_backends(args: &RunArgs) -> Result<Backends> {
    let transport_cfg = TransportConfig {
        timeout: Duration::from_secs(args.timeout_secs),
        retries: args.retries,
        ..Default::default()
    };
    let http: Arc<dyn Transport> = Arc::new(HttpTransport::new(&transport_cfg));

    let (extractor, embedder): (Arc<dyn ExtractionBackend>, Arc<dyn EmbeddingBackend>) = match args.backend {
        BackendKind::Fixture => {
            let path = args.fixtures.join("manifest.json");
            let manifest = FixtureManifest::load(&path).with_context(|| format!("loading {}", path.display()))?;
            (Arc::new(manifest.extractor()?), Arc::new(manifest.embedder()?))
        }
        BackendKind::Http => {
            let cfg = HttpBackendConfig {
                endpoint: args.endpoint.clone(),
                max_in_flight: args.max_in_flight.max(1),
            };
            let service = Arc::new(
                HttpBackend::connect(http.clone(), &cfg)
                    .with_context(|| format!("inference service at {}", args.endpoint))?,
            );
            log::info!("connected to {}: {:?}", args.endpoint, service.health());
            let extractor: Arc<dyn ExtractionBackend> = match &args.cache_dir {
                Some(dir) => Arc::new(CachedExtractor::new(service.clone(), dir)),
                None => service.clone(),
            };
            (extractor, service)
        }
    };

    let wiki_kind = args.wiki.unwrap_or(match args.backend {
        BackendKind::Fixture => WikiKind::Fixture,
        BackendKind::Http => WikiKind::Live,
    });
    let wiki: Arc<dyn WikiSource> = match wiki_kind {
        WikiKind::Fixture => {
            let path = args.fixtures.join("wiki.json");
            let wiki = FixtureWiki::load(&path).with_context(|| format!("loading {}", path.display()))?;
            Arc::new(wiki.strict(args.strict))
        }
        WikiKind::Live => {
            let transport: Arc<dyn Transport> = if args.offline {
                Arc::new(OfflineTransport::new())
            } else {
                http
            };
            let config = MediaWikiConfig {
                endpoint: args.wiki_endpoint.clone(),
                cache_dir: args.cache_dir.clone(),
            };
            Arc::new(MediaWikiClient::new(transport, config))
        }
    };
    Ok(Backends {
        extractor,
        embedder,
        wiki,
    })
}

fn print_summary(summary: &RunSummary) {
    println!(
        "{:<20} {:>5} {:>7} {:>9} {:>12} {:>6} {:>9} {:>9}",
        "category", "total", "correct", "incorrect", "unselectable", "failed", "det. acc", "accuracy"
    );
    let rows = summary
        .categories
        .iter()
        .map(|(c, s)| (c.as_str(), s))
        .chain(std::iter::once(("overall", &summary.overall)));
    for (name, s) in rows {
        println!(
            "{:<20} {:>5} {:>7} {:>9} {:>12} {:>6} {:>8.1}% {:>8.1}%",
            name,
            s.total,
            s.correct,
            s.incorrect,
            format!("{} ({})", s.unselectable, s.unselectable_resolved_correct),
            s.failed,
            100.0 * s.deterministic_accuracy,
            100.0 * s.accuracy
        );
    }
}

fn load_items(path: &Path) -> Result<(Vec<kgmcqa_core::McqItem>, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let items = parse_dataset(&text, path)?;
    Ok((items, sha256_hex(text.as_bytes())))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let (items, digest) = load_items(&args.dataset)?;
    let backends = build_backends(&args)?;
    let config = EngineConfig {
        entity_linking: !args.no_el,
        similarity_threshold: args.threshold.0,
        summary_cap: args.summary_cap,
        strict: args.strict,
        execution: if args.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    let engine = Engine::new(backends.extractor, backends.embedder, backends.wiki, config);
    let options = RunOptions {
        seed: args.seed,
        jobs: args.jobs,
    };
    let output = run_dataset(&engine, &items, &digest, &options)?;
    write_outputs(&args.out, &output, args.export_dot)?;
    print_summary(&output.summary);

    let failed = output.summary.failed();
    if failed > 0 {
        eprintln!("{failed} item(s) could not be evaluated; see {}", args.out.join("summary.json").display());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Check { out } => check_consistency(&out).map_err(Into::into).and_then(|problems| {
            if problems.is_empty() {
                println!("consistent");
                return Ok(ExitCode::SUCCESS);
            }
            for p in &problems {
                println!("{p}");
            }
            bail!("{} inconsistencies in {}", problems.len(), out.display())
        }),
        Command::Validate { dataset } => load_items(&dataset).map(|(items, digest)| {
            println!("{} items, sha256 {digest}", items.len());
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
