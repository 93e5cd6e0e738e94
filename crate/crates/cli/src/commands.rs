//! Subcommand implementations. Each returns its result so tests can drive
//! them without a process boundary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use evtab_core::agents::AgentContext;
use evtab_core::backend::{UsageLedger, UsageRecord};
use evtab_core::clock::Clock;
use evtab_core::docmodel::load_any_document;
use evtab_core::evaluation::{
    fig3_csv, fig3_rows, load_gold, score_run, table1_csv, table1_rows, EvalError, Evaluation, GoldSet, JudgeContext,
    Prediction,
};
use evtab_core::pipeline::{Pipeline, PipelineMode, RetryLimits};
use evtab_core::schema::{load_schema, Schema};
use evtab_core::store::{BaselineRun, RunManifest, Store};

use crate::config::load_config;

#[derive(Debug, Clone)]
pub struct ExtractArgs {
    pub config: Option<PathBuf>,
    pub schema: PathBuf,
    pub documents: Vec<PathBuf>,
    pub store: PathBuf,
    pub mode: Option<PipelineMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completed {
    pub doc_id: String,
    /// Run version for full runs; `None` for baselines.
    pub run: Option<u32>,
    pub path: PathBuf,
    pub api_calls: u64,
}

#[derive(Debug, Default)]
pub struct ExtractReport {
    pub completed: Vec<Completed>,
    pub failed: Vec<(PathBuf, String)>,
}

impl ExtractReport {
    pub fn ok(&self) -> bool {
        self.failed.is_empty()
    }
}

fn doc_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "document".into())
}

/// Runs the pipeline over every document. Startup problems (config, schema,
/// backends) are errors; per-document problems are collected in the report.
pub fn extract(args: &ExtractArgs, clock: Arc<dyn Clock>) -> Result<ExtractReport> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(mode) = args.mode {
        config.pipeline.mode = mode;
    }
    let schema_text =
        fs::read_to_string(&args.schema).with_context(|| format!("reading schema {}", args.schema.display()))?;
    let schema = load_schema(&schema_text).with_context(|| format!("loading schema {}", args.schema.display()))?;
    let extraction = config.extraction_backend()?;
    let reconciliation = config.reconciliation_backend()?;
    let embedder = config.embedder()?;
    let prompts = config.prompts()?;
    let store = Store::with_clock(&args.store, clock.clone())?;
    let pipeline = Pipeline {
        schema: &schema,
        extraction: extraction.as_ref(),
        reconciliation: reconciliation.as_ref(),
        embedder: embedder.as_ref(),
        prompts: &prompts,
        clock: clock.as_ref(),
        options: config.pipeline.clone(),
        retry_limits: RetryLimits {
            extraction: config.backend.retry_limit,
            reconciliation: config.reconciliation.as_ref().unwrap_or(&config.backend).retry_limit,
        },
    };

    let mut report = ExtractReport::default();
    for path in &args.documents {
        let outcome = (|| -> Result<Completed> {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let doc = load_any_document(&text, &doc_id_from_path(path))?;
            let run = pipeline.run_document(&doc)?;
            let api_calls = run.manifest.ledger.total.api_calls;
            if run.mode == PipelineMode::Full {
                let version = store.persist_run(&doc, &run.cells, run.manifest, &run.ledger)?;
                Ok(Completed {
                    path: store.root().join(&doc.doc_id),
                    doc_id: doc.doc_id,
                    run: Some(version),
                    api_calls,
                })
            } else {
                let baseline = BaselineRun {
                    manifest: run.manifest,
                    predictions: run.predictions,
                };
                let path = store.persist_baseline(&doc, &baseline, &run.ledger)?;
                Ok(Completed {
                    doc_id: doc.doc_id,
                    run: None,
                    path,
                    api_calls,
                })
            }
        })();
        match outcome {
            Ok(done) => {
                tracing::info!(doc = %done.doc_id, calls = done.api_calls, "stored");
                report.completed.push(done);
            }
            Err(e) => {
                tracing::error!(path = %path.display(), error = %format!("{e:#}"), "document failed");
                report.failed.push((path.clone(), format!("{e:#}")));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub config: Option<PathBuf>,
    pub store: PathBuf,
    pub gold: Vec<PathBuf>,
    /// When set, every gold file must be for this document.
    pub doc: Option<String>,
    pub run: Option<u32>,
    /// Score a baseline instead of the reconciled run.
    pub baseline: Option<PipelineMode>,
    pub label: Option<String>,
    pub out: PathBuf,
}

fn schema_of(manifest: &RunManifest) -> Schema {
    Schema {
        name: manifest.schema_name.clone(),
        version: manifest.schema_version.clone(),
        columns: manifest.columns.clone(),
    }
}

fn load_predictions(store: &Store, doc_id: &str, args: &EvaluateArgs) -> Result<(Schema, Vec<Prediction>)> {
    match args.baseline.filter(|m| *m != PipelineMode::Full) {
        Some(mode) => {
            let baseline = store.load_baseline(doc_id, mode.as_str())?;
            Ok((schema_of(&baseline.manifest), baseline.predictions))
        }
        None => {
            let table = store.load(doc_id, args.run)?;
            let predictions = table.records.iter().map(Prediction::from_record).collect();
            Ok((schema_of(&table.manifest), predictions))
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
        .collect()
}

/// Scores stored predictions against gold files and writes both report
/// shapes plus the per-cell verdict log into `args.out`.
pub fn evaluate(args: &EvaluateArgs, clock: Arc<dyn Clock>) -> Result<Evaluation> {
    if args.gold.is_empty() {
        bail!("no gold files given");
    }
    let config = load_config(args.config.as_deref())?;
    let store = Store::with_clock(&args.store, clock.clone())?;
    let mut golds: Vec<GoldSet> = Vec::new();
    for path in &args.gold {
        let text = fs::read_to_string(path).with_context(|| format!("reading gold {}", path.display()))?;
        let gold = load_gold(&text).with_context(|| format!("loading gold {}", path.display()))?;
        if let Some(doc) = &args.doc {
            if *doc != gold.doc_id {
                return Err(EvalError::DocMismatch {
                    gold: gold.doc_id,
                    run: doc.clone(),
                }
                .into());
            }
        }
        golds.push(gold);
    }
    let mut schema: Option<Schema> = None;
    let mut predictions = Vec::new();
    for gold in &golds {
        let (s, p) = load_predictions(&store, &gold.doc_id, args)?;
        match &schema {
            Some(existing) if existing.columns != s.columns => {
                bail!("document `{}` was extracted with a different schema", gold.doc_id)
            }
            Some(_) => {}
            None => schema = Some(s),
        }
        predictions.push(p);
    }
    let schema = schema.expect("at least one gold file");

    let judge_backend = config.judge_backend()?;
    let prompts = config.prompts()?;
    let ledger = UsageLedger::new();
    let judge = judge_backend.as_ref().map(|backend| JudgeContext {
        agent: AgentContext {
            backend: backend.as_ref(),
            ledger: &ledger,
            clock: clock.as_ref(),
            prompts: &prompts,
            retry_limit: config.judge.as_ref().map_or(0, |j| j.retry_limit),
        },
    });
    let label = args.label.clone().unwrap_or_else(|| {
        args.baseline.unwrap_or(PipelineMode::Full).as_str().to_string()
    });
    let docs: Vec<(&GoldSet, &[Prediction])> = golds.iter().zip(&predictions).map(|(g, p)| (g, p.as_slice())).collect();
    let evaluation = score_run(&label, &docs, &schema, judge.as_ref(), config.evaluation)?;
    evaluation
        .report
        .check_overall_identity()
        .map_err(|e| anyhow!("inconsistent report: {e}"))?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let reports = std::slice::from_ref(&evaluation.report);
    write(&args.out.join("report.json"), pretty(&evaluation.report))?;
    write(&args.out.join("table1.csv"), table1_csv(reports)?)?;
    write(&args.out.join("table1.json"), pretty(&table1_rows(reports)))?;
    write(&args.out.join("fig3.csv"), fig3_csv(reports)?)?;
    write(&args.out.join("fig3.json"), pretty(&fig3_rows(reports)))?;
    write(&args.out.join("verdicts.jsonl"), jsonl(&evaluation.verdicts))?;
    if judge.is_some() {
        write(&args.out.join("judge_ledger.jsonl"), ledger.to_jsonl())?;
    }
    if evaluation.report.unevaluated > 0 {
        tracing::warn!(cells = evaluation.report.unevaluated, "cells could not be judged");
    }
    Ok(evaluation)
}

/// Supervision records as JSON lines; all documents when `docs` is empty.
pub fn export_supervision(store: &Path, docs: &[String]) -> Result<String> {
    let store = Store::open(store)?;
    let ids = if docs.is_empty() { store.document_ids()? } else { docs.to_vec() };
    Ok(jsonl(&store.export_supervision(&ids)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LedgerFormat {
    Csv,
    Jsonl,
}

pub fn ledger(store: &Path, doc: &str, run: Option<u32>, format: LedgerFormat) -> Result<String> {
    let store = Store::open(store)?;
    let records: Vec<UsageRecord> = store.load_ledger(doc, run)?;
    let ledger = UsageLedger::from_records(records);
    Ok(match format {
        LedgerFormat::Csv => ledger.report_csv(),
        LedgerFormat::Jsonl => ledger.to_jsonl(),
    })
}
