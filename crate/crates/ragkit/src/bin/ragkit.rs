use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ragkit::backends::{unix_millis, ConfigBackends, SystemClock};
use ragkit::io::{
    append_jsonl, config_version, ingest_manifest, load_config, read_json, read_jsonl, read_testset, write_json,
};
use ragkit::service::{compare_configs, Service};
use ragkit::store::Store;
use ragkit_core::config::PipelineConfig;
use ragkit_core::corpus::corpus_stats;
use ragkit_core::diagnosis::{auto_diagnose_run, diagnosis_report, record_manual_finding, IssueClass, IssueFinding};
use ragkit_core::evaluation::{check_targets, EvaluationRun};
use ragkit_core::pipeline::EvalOptions;

#[derive(Parser)]
#[command(name = "ragkit", version, about = "Retrieval-augmented question answering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the documents a manifest lists into a store.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Pipeline config (JSON or TOML) to store alongside the documents.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Chunk and index the ingested documents.
    Index {
        #[arg(long)]
        store: PathBuf,
    },
    /// Answer one question from the stored index.
    Query {
        #[arg(long)]
        store: PathBuf,
        /// Print the full JSON response.
        #[arg(long)]
        json: bool,
        question: String,
    },
    /// Run a test set through the stored pipeline.
    Eval {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: EvalArgs,
    },
    /// Diagnose an evaluation run: targets, Pareto of issues, corrective actions.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
        /// Manual findings (JSONL) to merge with the automatic ones.
        #[arg(long)]
        findings: Option<PathBuf>,
        /// Config whose targets and thresholds apply (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record a manual finding for a query of a run.
    Finding {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        query: String,
        /// One of the issue class names, e.g. data_access.
        #[arg(long)]
        issue: String,
        #[arg(long, default_value = "")]
        note: String,
        /// Findings file to append to.
        #[arg(long)]
        findings: PathBuf,
    },
    /// Evaluate two configs on the same test set and compare them.
    Compare {
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: EvalArgs,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Bearer token required on every request.
        #[arg(long, env = "RAGKIT_TOKEN")]
        token: Option<String>,
    },
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Repeat each query N times to measure prompt agreement.
    #[arg(long)]
    agreement: Option<usize>,
    /// Compute answer relevance (extra model calls).
    #[arg(long)]
    relevance: bool,
    /// Judge faithfulness with the language model.
    #[arg(long)]
    judge: bool,
}

impl EvalArgs {
    fn options(&self) -> anyhow::Result<EvalOptions> {
        if self.agreement.is_some_and(|n| n < 2) {
            bail!("--agreement needs at least 2 repetitions");
        }
        Ok(EvalOptions {
            n_agreement: self.agreement,
            compute_relevance: self.relevance,
            judge_faithfulness: self.judge,
            ..EvalOptions::default()
        })
    }
}

fn open_service(store: &Path) -> anyhow::Result<Service> {
    let store = Store::open(store)?;
    Ok(Service::open(store, Arc::new(ConfigBackends))?)
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

fn print_run(run: &EvaluationRun, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let a = &run.aggregates;
    println!("run {} (config {})", run.run_id, run.config_version);
    println!(
        "records {}  correct {} ({:.3})  acceptable {} ({:.3})  incorrect {} ({:.3})  contradictions {}",
        a.records,
        a.correct,
        a.correct_rate,
        a.acceptable,
        a.acceptable_rate,
        a.incorrect,
        a.incorrect_rate,
        a.contradiction_count
    );
    println!(
        "mean latency {:.1} ms  total cost {:.6}",
        a.mean_latency_ms, a.total_cost
    );
    let m = &a.metrics;
    println!(
        "precision {}  recall {}  faithfulness {}  relevance {}  agreement {}",
        fmt_opt(m.context_precision),
        fmt_opt(m.context_recall),
        fmt_opt(m.faithfulness),
        fmt_opt(m.answer_relevance),
        fmt_opt(m.prompt_agreement)
    );
    let report = check_targets(run, &cfg.targets)?;
    println!("targets {}", if report.pass { "PASS" } else { "FAIL" });
    for v in &report.violations {
        println!("  {:?}: {:.3} (limit {:.3})", v.target, v.actual, v.limit);
    }
    Ok(())
}

fn run_id() -> String {
    format!("run-{}", unix_millis())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest {
            manifest,
            store,
            config,
        } => {
            let store = Store::open(&store)?;
            let mut cfg = match config {
                Some(p) => load_config(&p)?,
                None => store.load_config()?,
            };
            let manifest = std::path::absolute(&manifest)?;
            let docs = ingest_manifest(&manifest)?;
            cfg.corpus_manifest = Some(manifest.to_string_lossy().into_owned());
            store.save_config(&cfg)?;
            store.save_documents(&docs)?;
            let stats = corpus_stats(&docs)?;
            println!(
                "ingested {} documents, {} tokens (config {})",
                docs.len(),
                stats.total_tokens,
                config_version(&cfg)
            );
        }
        Command::Index { store } => {
            let out = open_service(&store)?.index_stored()?;
            print_json(&out)?;
        }
        Command::Query { store, json, question } => {
            let resp = open_service(&store)?.answer(&question)?;
            if json {
                print_json(&resp)?;
            } else {
                println!("{}", resp.answer);
                for s in &resp.sources {
                    println!("  [{}] {} ({:.3})", s.chunk_id, s.doc_title, s.score);
                }
                println!(
                    "{:.1} ms, cost {:.6}, config {}",
                    resp.latency_ms, resp.cost, resp.config_version
                );
            }
        }
        Command::Eval {
            store,
            testset,
            out,
            opts,
        } => {
            let service = open_service(&store)?;
            let testset = read_testset(&testset)?;
            let run = service.evaluate(&testset, &opts.options()?, run_id())?;
            write_json(&out, &run)?;
            print_run(&run, &service.store().load_config()?)?;
        }
        Command::Diagnose {
            run,
            findings,
            config,
            out,
        } => {
            let run: EvaluationRun = read_json(&run)?;
            let cfg = match config {
                Some(p) => load_config(&p)?,
                None => PipelineConfig::default(),
            };
            let mut all = auto_diagnose_run(&run, &cfg.thresholds);
            if let Some(p) = findings {
                let manual: Vec<IssueFinding> = read_jsonl(&p)?;
                for f in &manual {
                    if run.record(&f.query_id).is_none() {
                        bail!("finding refers to unknown query {:?}", f.query_id);
                    }
                }
                all.extend(manual);
            }
            let report = diagnosis_report(&run, check_targets(&run, &cfg.targets)?, all);
            print!("{}", report.render_text());
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
        }
        Command::Finding {
            run,
            query,
            issue,
            note,
            findings,
        } => {
            let run: EvaluationRun = read_json(&run)?;
            let Some(issue) = IssueClass::from_name(&issue) else {
                let names: Vec<&str> = IssueClass::ALL.iter().map(|c| c.name()).collect();
                bail!("unknown issue {issue:?}; expected one of {}", names.join(", "));
            };
            let f = record_manual_finding(&run, &query, issue, &note)?;
            append_jsonl(&findings, &f)?;
            print_json(&f)?;
        }
        Command::Compare {
            config_a,
            config_b,
            testset,
            out,
            opts,
        } => {
            let a = load_config(&config_a).context("config a")?;
            let b = load_config(&config_b).context("config b")?;
            let testset = read_testset(&testset)?;
            let report = compare_configs(
                &a,
                &b,
                &testset,
                &ConfigBackends,
                &opts.options()?,
                &SystemClock::default(),
            )?;
            println!("{:<20} {:>12} {:>12} {:>12}", "metric", "a", "b", "delta");
            for d in &report.deltas {
                println!(
                    "{:<20} {:>12} {:>12} {:>12}",
                    d.name,
                    fmt_opt(d.a),
                    fmt_opt(d.b),
                    fmt_opt(d.delta)
                );
            }
            println!(
                "a: {} targets {}",
                report.a.config_version,
                if report.a.targets.pass { "PASS" } else { "FAIL" }
            );
            println!(
                "b: {} targets {}",
                report.b.config_version,
                if report.b.targets.pass { "PASS" } else { "FAIL" }
            );
            println!("winner: {:?}", report.winner);
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
        }
        Command::Serve {
            store,
            port,
            host,
            token,
        } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .init();
            let service = Arc::new(open_service(&store)?);
            let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
            let app = ragkit::api::router(service, token);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!(%addr, "listening");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
    }
    Ok(())
}
