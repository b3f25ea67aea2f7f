use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow_lite::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use tarag_core::annotation::AnnotationCache;
use tarag_core::config::{Config, EmbedderConfig};
use tarag_core::eval::{compare_methods, import_eval_set, load_eval_set, Comparison};
use tarag_core::ingest::{build_corpus_index, load_documents, CorpusIndex};
use tarag_core::retrieval::{retrieve, Method, RetrievalRequest};
use tarag_core::Granularity;

/// Minimal error plumbing: every failure becomes a message with context.
mod anyhow_lite {
    pub type Result<T> = std::result::Result<T, String>;

    pub trait Context<T> {
        fn context(self, what: impl std::fmt::Display) -> Result<T>;
    }

    impl<T, E: std::fmt::Display> Context<T> for std::result::Result<T, E> {
        fn context(self, what: impl std::fmt::Display) -> Result<T> {
            self.map_err(|e| format!("{what}: {e}"))
        }
    }
}

#[derive(Parser)]
#[command(name = "tarag", version, about = "Temporally-aware retrieval and MCQA evaluation")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate, chunk and embed a JSON-lines corpus into an index file.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Annotation cache; defaults to `<out>.cache.jsonl`.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, conflicts_with = "cache")]
        no_cache: bool,
        /// Write the build report (per-document outcome) here as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Fixed manifest timestamp, for byte-identical rebuilds.
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Retrieve for one question and print the result as JSON.
    Query {
        #[command(flatten)]
        common: IndexArgs,
        #[arg(long, default_value = "ta_rag")]
        method: Method,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        question: String,
        #[arg(long)]
        granularity: Option<Granularity>,
        #[arg(long)]
        max_anchors: Option<usize>,
    },
    /// Evaluate one method at one or more k.
    Eval {
        #[command(flatten)]
        common: IndexArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "ta_rag")]
        method: Method,
    },
    /// Evaluate several methods at several k.
    Compare {
        #[command(flatten)]
        common: IndexArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "ta_rag,naive,bm25")]
        methods: Vec<Method>,
    },
    /// Convert a third-party MCQA file using the config's field mapping.
    ImportEval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    index: PathBuf,
    /// Without a config, the stub providers are used with the index's
    /// embedding dimension.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    eval_set: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50")]
    k: Vec<usize>,
    /// Defaults to the config's `eval.runs`.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Accuracy-vs-k figure.
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).context(format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn open_index(args: &IndexArgs) -> Result<(CorpusIndex, Config)> {
    let index = CorpusIndex::load(&args.index).context(format!("loading {}", args.index.display()))?;
    let mut config = load_config(args.config.as_deref())?;
    if args.config.is_none() {
        config.embedder = EmbedderConfig::Stub {
            dim: index.manifest().dim,
        };
    }
    Ok((index, config))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing")?;
    std::fs::write(path, text + "\n").context(format!("writing {}", path.display()))
}

fn run_grid(common: &IndexArgs, run: &RunArgs, methods: &[Method]) -> Result<()> {
    let (index, config) = open_index(common)?;
    let providers = config.providers().context("configuring providers")?;
    if let Some(w) = index.check_embedder(providers.embedder.as_ref()) {
        warn!("{w}");
    }
    let generator = config.generator(&providers);
    let items = load_eval_set(&run.eval_set).context("loading evaluation set")?;
    let runs = run.runs.unwrap_or(config.eval.runs);
    let cmp: Comparison = compare_methods(
        &index,
        &providers,
        generator.as_ref(),
        &items,
        methods,
        &run.k,
        runs,
        &config.eval_options(),
    )
    .context("evaluation")?;
    for r in &cmp.reports {
        r.validate().context(format!("report {} k={}", r.method, r.k))?;
    }
    print!("{}", cmp.to_table());
    write_json(&run.out, &cmp)?;
    if let Some(plot) = &run.plot {
        std::fs::write(plot, cmp.to_svg()).context(format!("writing {}", plot.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            corpus,
            out,
            config,
            cache,
            no_cache,
            report,
            timestamp,
        } => {
            let mut config = load_config(config.as_deref())?;
            if timestamp.is_some() {
                config.ingest.build_timestamp = timestamp;
            }
            let providers = config.providers().context("configuring providers")?;
            let docs = load_documents(&corpus).context("loading corpus")?;
            let cache = if no_cache {
                None
            } else {
                let path = cache.unwrap_or_else(|| {
                    let mut p = out.clone().into_os_string();
                    p.push(".cache.jsonl");
                    PathBuf::from(p)
                });
                Some(AnnotationCache::open(&path).context(format!("opening cache {}", path.display()))?)
            };
            let (index, build) = build_corpus_index(&docs, &providers, &config.ingest, cache.as_ref())
                .context("building index (finished work is cached; rerun to resume)")?;
            index.save(&out).context(format!("writing {}", out.display()))?;
            for r in build.rejected() {
                eprintln!("rejected {}: {}", r.doc_id, r.rejection.as_deref().unwrap_or(""));
            }
            eprintln!(
                "{} chunks from {} documents ({} rejected, {} cache hits) -> {}",
                index.len(),
                build.accepted().count(),
                build.rejected().count(),
                build.cache_hits,
                out.display()
            );
            if let Some(p) = report {
                write_json(&p, &build)?;
            }
            Ok(())
        }
        Command::Query {
            common,
            method,
            k,
            question,
            granularity,
            max_anchors,
        } => {
            let (index, config) = open_index(&common)?;
            let providers = config.providers().context("configuring providers")?;
            let mut overrides = config.retrieval.overrides();
            overrides.granularity = granularity.or(overrides.granularity);
            overrides.max_anchors = max_anchors.or(overrides.max_anchors);
            let req = RetrievalRequest::new(question, k, method).with_overrides(overrides);
            let result = retrieve(&index, &providers, &req).context("retrieval")?;
            let hits: Vec<serde_json::Value> = result
                .hits
                .iter()
                .map(|h| {
                    let c = index.chunk(h.chunk_id).expect("hit resolves");
                    serde_json::json!({
                        "chunk_id": h.chunk_id,
                        "score": h.score,
                        "doc_id": c.doc_id,
                        "seq": c.seq,
                        "pub_time_est": c.pub_time_est,
                        "event_intervals": c.event_intervals,
                        "text": c.text,
                    })
                })
                .collect();
            let out = serde_json::json!({
                "method": result.method,
                "k": result.k,
                "hits": hits,
                "resolved_intervals": result.resolved_intervals,
                "decomposition": result.decomposition,
                "diagnostics": result.diagnostics,
            });
            println!("{}", serde_json::to_string_pretty(&out).context("serializing")?);
            Ok(())
        }
        Command::Eval { common, run, method } => run_grid(&common, &run, &[method]),
        Command::Compare { common, run, methods } => run_grid(&common, &run, &methods),
        Command::ImportEval { input, out, config } => {
            let config = load_config(config.as_deref())?;
            let items = import_eval_set(&input, &config.eval.field_map).context("importing")?;
            let mut text = String::new();
            for item in &items {
                text.push_str(&serde_json::to_string(item).context("serializing")?);
                text.push('\n');
            }
            std::fs::write(&out, text).context(format!("writing {}", out.display()))?;
            eprintln!("{} items -> {}", items.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
