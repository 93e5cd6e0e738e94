use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use evtab_cli::commands::{self, EvaluateArgs, ExtractArgs, LedgerFormat};
use evtab_cli::service;
use evtab_core::clock::SystemClock;
use evtab_core::pipeline::PipelineMode;
use evtab_core::store::Store;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "evtab", version, about = "Evidence-table extraction with provenance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract an evidence table from each document into the store.
    Extract {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// full, agent_a_only or parsed_single; overrides the config.
        #[arg(long)]
        mode: Option<PipelineMode>,
        #[arg(required = true)]
        documents: Vec<PathBuf>,
    },
    /// Score stored predictions against gold annotations.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long = "gold", required = true)]
        gold: Vec<PathBuf>,
        #[arg(long)]
        doc: Option<String>,
        #[arg(long)]
        run: Option<u32>,
        /// Score a baseline mode's predictions instead of the reconciled run.
        #[arg(long)]
        baseline: Option<PipelineMode>,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the review service.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        ui_origin: Option<String>,
    },
    /// Write preference and supervision records as JSON lines.
    ExportSupervision {
        #[arg(long)]
        store: PathBuf,
        #[arg(long = "doc")]
        docs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a run's usage ledger.
    Ledger {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        run: Option<u32>,
        #[arg(long, value_enum, default_value = "csv")]
        format: LedgerFormat,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let clock = Arc::new(SystemClock);
    match cli.command {
        Command::Extract {
            config,
            schema,
            store,
            mode,
            documents,
        } => {
            let report = commands::extract(
                &ExtractArgs {
                    config,
                    schema,
                    documents,
                    store,
                    mode,
                },
                clock,
            )?;
            for done in &report.completed {
                match done.run {
                    Some(v) => println!("{}: run {v} ({} calls)", done.doc_id, done.api_calls),
                    None => println!("{}: {} ({} calls)", done.doc_id, done.path.display(), done.api_calls),
                }
            }
            for (path, error) in &report.failed {
                eprintln!("{}: FAILED: {error}", path.display());
            }
            Ok(report.ok())
        }
        Command::Evaluate {
            config,
            store,
            gold,
            doc,
            run,
            baseline,
            label,
            out,
        } => {
            let evaluation = commands::evaluate(
                &EvaluateArgs {
                    config,
                    store,
                    gold,
                    doc,
                    run,
                    baseline,
                    label,
                    out: out.clone(),
                },
                clock,
            )?;
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
            let all = &evaluation.report.all;
            println!(
                "correctness {} completeness {} overall {} (reports in {})",
                fmt(all.correctness),
                fmt(all.completeness),
                fmt(all.overall),
                out.display()
            );
            Ok(true)
        }
        Command::Serve { store, addr, ui_origin } => {
            let store = Arc::new(Store::open(store)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(store, &addr, ui_origin.as_deref()))?;
            Ok(true)
        }
        Command::ExportSupervision { store, docs, out } => {
            let text = commands::export_supervision(&store, &docs)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Ledger { store, doc, run, format } => {
            print!("{}", commands::ledger(&store, &doc, run, format)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
