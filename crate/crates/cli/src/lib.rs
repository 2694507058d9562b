//! Command line and HTTP front end for the hashscope pipeline.

pub mod api;

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hashscope_core::corpus::{generate_synthetic, GeneratorSpec};
use hashscope_core::lexicon::{Category, TermStatus, Verdict};
use hashscope_core::pipeline::{ReportKind, RunConfig};
use hashscope_core::service::PipelineService;

#[derive(Debug, Parser)]
#[command(name = "hashscope", version, about = "Hashtag drug-pattern mining pipeline")]
pub struct Cli {
    /// Workspace directory holding the lexicon log, corpora and runs.
    #[arg(short, long, global = true, default_value = "hashscope-workspace")]
    pub workspace: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted patterns.
    Synth {
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Generator spec, inline JSON or a file; omitted fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        drug_users: Option<usize>,
        #[arg(long)]
        drug_posts_per_user: Option<usize>,
    },
    /// Import a corpus directory into the workspace under a name.
    Ingest {
        /// Directory with posts.jsonl and optional sidecar files.
        source: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Execute one mining round.
    Run {
        /// Imported corpus name or a corpus directory.
        corpus: String,
        /// Run configuration, inline JSON or a file; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        request_id: Option<String>,
    },
    /// Print one report of a run as JSON.
    Report {
        kind: ReportKind,
        /// Run id; the most recent run when omitted.
        #[arg(long)]
        run: Option<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static console bundle served under /console.
        #[arg(long)]
        console: Option<PathBuf>,
    },
    /// Inspect or curate the lexicon.
    #[command(subcommand)]
    Lexicon(LexiconCommand),
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    List {
        #[arg(long)]
        status: Option<TermStatus>,
    },
    Decide {
        term: String,
        verdict: Verdict,
        /// Required when accepting.
        #[arg(long)]
        category: Option<Category>,
        #[arg(long, default_value = "cli")]
        actor: String,
        #[arg(long)]
        request_id: Option<String>,
    },
}

/// Accepts inline JSON or the path of a JSON file.
fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let inline = path.to_str().filter(|s| s.trim_start().starts_with('{'));
    let text = match inline {
        Some(s) => s.to_string(),
        None => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
    };
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

/// Executes every command except `serve`, writing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth {
            out: dir,
            seed,
            spec,
            drug_users,
            drug_posts_per_user,
        } => {
            let mut spec: GeneratorSpec = match spec {
                Some(p) => read_json(p)?,
                None => GeneratorSpec::default(),
            };
            if let Some(n) = drug_users {
                spec.drug_users = *n;
            }
            if let Some(n) = drug_posts_per_user {
                spec.drug_posts_per_user = *n;
            }
            let bundle = generate_synthetic(&spec, *seed)?;
            bundle.write_bundle(dir)?;
            writeln!(
                out,
                "wrote {} posts ({} follow edges) to {}",
                bundle.posts.len(),
                bundle.edges.len(),
                dir.display()
            )?;
        }
        Command::Ingest { source, name } => {
            let svc = PipelineService::open(&cli.workspace)?;
            let report = svc.store().import_corpus(name, source)?;
            print_json(out, &report)?;
        }
        Command::Run {
            corpus,
            config,
            request_id,
        } => {
            let config: RunConfig = match config {
                Some(p) => read_json(p)?,
                None => RunConfig::default(),
            };
            let svc = PipelineService::open(&cli.workspace)?;
            let sub = svc.submit_run(corpus, config, request_id.as_deref())?;
            print_json(out, &sub)?;
        }
        Command::Report { kind, run } => {
            let svc = PipelineService::open(&cli.workspace)?;
            let id = match run {
                Some(id) => id.clone(),
                None => match svc.list_runs()?.pop() {
                    Some(r) => r.run_id,
                    None => bail!("no runs in {}", cli.workspace.display()),
                },
            };
            print_json(out, &svc.get_report(&id, *kind)?)?;
        }
        Command::Lexicon(LexiconCommand::List { status }) => {
            let svc = PipelineService::open(&cli.workspace)?;
            writeln!(out, "# lexicon version {}", svc.lexicon().version())?;
            for t in svc.list_terms(*status) {
                let support = t.support_at_proposal.map(|s| format!("\t{s:.4}")).unwrap_or_default();
                writeln!(out, "{}\t{:?}\t{}{}", t.text, t.status, t.category, support)?;
            }
        }
        Command::Lexicon(LexiconCommand::Decide {
            term,
            verdict,
            category,
            actor,
            request_id,
        }) => {
            let svc = PipelineService::open(&cli.workspace)?;
            let d = svc.decide(term, *verdict, *category, actor, request_id.as_deref())?;
            print_json(out, &d)?;
        }
        Command::Serve { .. } => bail!("serve runs through `serve`"),
    }
    Ok(())
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(workspace: &Path, addr: SocketAddr, console: Option<PathBuf>) -> Result<()> {
    let svc = Arc::new(PipelineService::open(workspace)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, api::router(svc, console))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
