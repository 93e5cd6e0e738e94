//! On-disk run store with an append-only review log.
//!
//! Layout under the store root:
//!
//! ```text
//! <doc_id>/document.json
//! <doc_id>/runs/run-0001.json          manifest + reconciled cells
//! <doc_id>/runs/run-0001.ledger.jsonl  usage records
//! <doc_id>/reviews.jsonl               review events, each naming its run
//! ```
//!
//! A run becomes visible when its `run-NNNN.json` is renamed into place,
//! after the ledger, so readers never observe half a run.

mod supervision;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Attribution, Extraction, Extractor};
use crate::backend::{LedgerReport, UsageRecord};
use crate::clock::{Clock, SystemClock};
use crate::docmodel::{get_page, ParsedDocument, PageView};
use crate::evaluation::Prediction;
use crate::reconciler::{ReconciledCell, VerificationLabel};
use crate::schema::ColumnDef;
use crate::text::is_not_reported;

pub use supervision::{export_supervision_records, Candidate, SignalSource, SupervisionRecord};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid document id `{0}`")]
    InvalidId(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Unreviewed,
    AcceptedA,
    AcceptedB,
    AcceptedReconciled,
    HumanCorrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReviewAction {
    AcceptA {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    AcceptB {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    AcceptReconciled {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Correct {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

impl ReviewAction {
    pub fn validate(&self) -> Result<(), StoreError> {
        match self {
            ReviewAction::Correct { value, .. } if value.trim().is_empty() => Err(StoreError::Validation(vec![
                "a correction needs a non-empty value".into(),
            ])),
            _ => Ok(()),
        }
    }

    fn note(&self) -> Option<&String> {
        match self {
            ReviewAction::AcceptA { note }
            | ReviewAction::AcceptB { note }
            | ReviewAction::AcceptReconciled { note }
            | ReviewAction::Correct { note, .. } => note.as_ref(),
        }
    }
}

/// Decodes and validates a review action body.
pub fn parse_review_action(source: &str) -> Result<ReviewAction, StoreError> {
    let action: ReviewAction = serde_json::from_str(source).map_err(|source| StoreError::Json {
        path: PathBuf::from("<review action>"),
        source,
    })?;
    action.validate()?;
    Ok(action)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellState {
    pub status: ReviewStatus,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    /// Position in the document's review log, from 1.
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub run: u32,
    pub column_id: String,
    pub action: ReviewAction,
    pub before: CellState,
    pub after: CellState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub doc_id: String,
    pub column_id: String,
    pub reconciled: ReconciledCell,
    pub review_status: ReviewStatus,
    pub human_value: Option<String>,
    pub reviewer_note: Option<String>,
    pub history: Vec<HistoryEvent>,
}

impl CellRecord {
    pub fn new(doc_id: &str, reconciled: ReconciledCell) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            column_id: reconciled.column_id.clone(),
            reconciled,
            review_status: ReviewStatus::Unreviewed,
            human_value: None,
            reviewer_note: None,
            history: Vec::new(),
        }
    }

    fn status_value(&self, status: ReviewStatus) -> &str {
        match status {
            ReviewStatus::HumanCorrected => self.human_value.as_deref().unwrap_or(&self.reconciled.final_value),
            ReviewStatus::AcceptedA => &self.reconciled.inputs.a.value,
            ReviewStatus::AcceptedB => &self.reconciled.inputs.b.value,
            ReviewStatus::Unreviewed | ReviewStatus::AcceptedReconciled => &self.reconciled.final_value,
        }
    }

    /// The value a reader should use after review.
    pub fn effective_value(&self) -> &str {
        self.status_value(self.review_status)
    }

    pub fn effective_attribution(&self) -> Option<&Attribution> {
        match self.review_status {
            ReviewStatus::HumanCorrected => None,
            ReviewStatus::AcceptedA => self.reconciled.inputs.a.attribution.as_ref(),
            ReviewStatus::AcceptedB => self.reconciled.inputs.b.attribution.as_ref(),
            _ => self.reconciled.attribution.as_ref(),
        }
    }

    pub fn state(&self) -> CellState {
        CellState {
            status: self.review_status,
            value: self.effective_value().to_string(),
        }
    }

    /// Applies `action` without recording it.
    fn transition(&mut self, action: &ReviewAction) {
        self.review_status = match action {
            ReviewAction::AcceptA { .. } => ReviewStatus::AcceptedA,
            ReviewAction::AcceptB { .. } => ReviewStatus::AcceptedB,
            ReviewAction::AcceptReconciled { .. } => ReviewStatus::AcceptedReconciled,
            ReviewAction::Correct { .. } => ReviewStatus::HumanCorrected,
        };
        self.human_value = match action {
            ReviewAction::Correct { value, .. } => Some(value.trim().to_string()),
            _ => None,
        };
        self.reviewer_note = action.note().cloned();
    }

    /// Replays a logged event onto this record.
    pub fn apply(&mut self, event: &HistoryEvent) {
        self.transition(&event.action);
        self.history.push(event.clone());
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.human_value.is_some() != (self.review_status == ReviewStatus::HumanCorrected) {
            return Err(format!("{}: human_value must be present exactly when corrected", self.column_id));
        }
        Ok(())
    }
}

/// Rebuilds a record from its stored cell and review events.
pub fn replay(doc_id: &str, reconciled: &ReconciledCell, events: &[HistoryEvent]) -> CellRecord {
    let mut record = CellRecord::new(doc_id, reconciled.clone());
    for event in events.iter().filter(|e| e.column_id == reconciled.column_id) {
        record.apply(event);
    }
    record
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: usize,
    pub column_ids: Vec<String>,
    pub source_groups: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunFlags {
    pub page_images_available: bool,
    /// Agent A read rendered markdown instead of the original file.
    pub agent_a_markdown_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounts {
    pub batches: u32,
    pub pass1_cells: u32,
    pub pass2_cells: u32,
    pub pass2_invocations: u32,
    pub forced_tool_rejections: u32,
    pub follow_up_turns: u32,
    pub retries: u32,
    pub failed_extractions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub doc_id: String,
    /// Assigned by the store.
    #[serde(default)]
    pub run_version: u32,
    pub schema_name: String,
    pub schema_version: String,
    pub mode: String,
    pub extraction_backend: String,
    pub reconciliation_backend: String,
    pub prompt_version: String,
    pub columns: Vec<ColumnDef>,
    pub batches: Vec<BatchSummary>,
    pub started_at: DateTime<Utc>,
    pub completed_at: DateTime<Utc>,
    pub ledger: LedgerReport,
    pub counts: RunCounts,
    pub flags: RunFlags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RunFile {
    manifest: RunManifest,
    cells: Vec<ReconciledCell>,
}

/// Predictions from a single-agent comparison run; never reconciled or reviewed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub manifest: RunManifest,
    pub predictions: Vec<Prediction>,
}

/// A run with reviews applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTable {
    pub manifest: RunManifest,
    pub records: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub title: String,
    pub latest_run: u32,
    pub runs: Vec<u32>,
    pub cells: usize,
    pub low_confidence: usize,
    pub reviewed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDetail {
    pub doc_id: String,
    pub run: u32,
    pub column: Option<ColumnDef>,
    pub effective_value: String,
    pub effective_attribution: Option<Attribution>,
    pub label: VerificationLabel,
    pub low_confidence: bool,
    pub candidate_a: Extraction,
    pub candidate_b: Extraction,
    pub reconciler_reasoning: String,
    pub record: CellRecord,
    /// Every page cited by a candidate, the final value or a correction.
    pub pages: Vec<PageView>,
}

pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_doc_id(doc_id: &str) -> bool {
    !doc_id.is_empty()
        && doc_id.len() <= 128
        && !doc_id.starts_with('.')
        && doc_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            StoreError::NotFound(path.display().to_string())
        } else {
            StoreError::io(path, e)
        }
    })?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| StoreError::io(&tmp, e))?;
    f.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

fn run_file_name(version: u32) -> String {
    format!("run-{version:04}.json")
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("store records serialize");
    bytes.push(b'\n');
    bytes
}

impl Store {
    /// Opens (and creates) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_clock(root, Arc::new(SystemClock))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(Self {
            root,
            clock,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_dir(&self, doc_id: &str) -> Result<PathBuf, StoreError> {
        if !valid_doc_id(doc_id) {
            return Err(StoreError::InvalidId(doc_id.to_string()));
        }
        Ok(self.root.join(doc_id))
    }

    fn lock(&self, doc_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("store lock table")
            .entry(doc_id.to_string())
            .or_default()
            .clone()
    }

    /// Run versions stored for `doc_id`, ascending.
    pub fn runs(&self, doc_id: &str) -> Result<Vec<u32>, StoreError> {
        let dir = self.doc_dir(doc_id)?.join("runs");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))? {
            let entry = entry.map_err(|e| StoreError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some(v) = name
                .strip_prefix("run-")
                .and_then(|n| n.strip_suffix(".json"))
                .and_then(|n| n.parse::<u32>().ok())
            {
                out.push(v);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    fn latest_run(&self, doc_id: &str) -> Result<u32, StoreError> {
        self.runs(doc_id)?
            .last()
            .copied()
            .ok_or_else(|| StoreError::NotFound(format!("no runs for document `{doc_id}`")))
    }

    /// Validates and writes a run as the next version for its document.
    /// Nothing is written if any cell is invalid.
    pub fn persist_run(
        &self,
        doc: &ParsedDocument,
        cells: &[ReconciledCell],
        mut manifest: RunManifest,
        ledger: &[UsageRecord],
    ) -> Result<u32, StoreError> {
        let dir = self.doc_dir(&doc.doc_id)?;
        let mut problems: Vec<String> = cells.iter().filter_map(|c| c.check_invariants().err()).collect();
        if manifest.doc_id != doc.doc_id {
            problems.push(format!("manifest is for `{}`, not `{}`", manifest.doc_id, doc.doc_id));
        }
        let mut seen = HashSet::new();
        for c in cells {
            if !seen.insert(c.column_id.as_str()) {
                problems.push(format!("{}: more than one cell", c.column_id));
            }
            for e in [&c.inputs.a, &c.inputs.b] {
                if let Err(p) = e.check_invariants() {
                    problems.push(p);
                }
            }
        }
        let expected: BTreeSet<&str> = manifest.columns.iter().map(|c| c.id.as_str()).collect();
        let got: BTreeSet<&str> = cells.iter().map(|c| c.column_id.as_str()).collect();
        for missing in expected.difference(&got) {
            problems.push(format!("{missing}: no cell for schema column"));
        }
        for extra in got.difference(&expected) {
            problems.push(format!("{extra}: cell for a column outside the schema"));
        }
        if !problems.is_empty() {
            return Err(StoreError::Validation(problems));
        }

        let lock = self.lock(&doc.doc_id);
        let _guard = lock.lock().expect("document lock");
        let runs_dir = dir.join("runs");
        fs::create_dir_all(&runs_dir).map_err(|e| StoreError::io(&runs_dir, e))?;
        write_atomic(&dir.join("document.json"), &pretty(doc))?;
        let version = self.runs(&doc.doc_id)?.last().copied().unwrap_or(0) + 1;
        manifest.run_version = version;
        let ledger_text: String = ledger
            .iter()
            .map(|r| serde_json::to_string(r).expect("usage records serialize") + "\n")
            .collect();
        write_atomic(
            &runs_dir.join(format!("run-{version:04}.ledger.jsonl")),
            ledger_text.as_bytes(),
        )?;
        let run = RunFile {
            manifest,
            cells: cells.to_vec(),
        };
        write_atomic(&runs_dir.join(run_file_name(version)), &pretty(&run))?;
        Ok(version)
    }

    fn read_run(&self, doc_id: &str, version: u32) -> Result<RunFile, StoreError> {
        read_json(&self.doc_dir(doc_id)?.join("runs").join(run_file_name(version)))
    }

    fn read_events(&self, doc_id: &str) -> Result<Vec<HistoryEvent>, StoreError> {
        let path = self.doc_dir(doc_id)?.join("reviews.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|source| StoreError::Json {
                    path: path.clone(),
                    source,
                })
            })
            .collect()
    }

    /// Loads a run (the latest when `version` is `None`) with its reviews replayed.
    pub fn load(&self, doc_id: &str, version: Option<u32>) -> Result<StoredTable, StoreError> {
        let version = match version {
            Some(v) => v,
            None => self.latest_run(doc_id)?,
        };
        let run = self.read_run(doc_id, version)?;
        let events: Vec<HistoryEvent> = self
            .read_events(doc_id)?
            .into_iter()
            .filter(|e| e.run == version)
            .collect();
        let records = run
            .cells
            .iter()
            .map(|cell| replay(doc_id, cell, &events))
            .collect();
        Ok(StoredTable {
            manifest: run.manifest,
            records,
        })
    }

    pub fn load_document(&self, doc_id: &str) -> Result<ParsedDocument, StoreError> {
        read_json(&self.doc_dir(doc_id)?.join("document.json"))
    }

    pub fn load_ledger(&self, doc_id: &str, version: Option<u32>) -> Result<Vec<UsageRecord>, StoreError> {
        let version = match version {
            Some(v) => v,
            None => self.latest_run(doc_id)?,
        };
        let path = self
            .doc_dir(doc_id)?
            .join("runs")
            .join(format!("run-{version:04}.ledger.jsonl"));
        let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|source| StoreError::Json {
                    path: path.clone(),
                    source,
                })
            })
            .collect()
    }

    /// Documents with at least one run, sorted by id.
    pub fn list_documents(&self) -> Result<Vec<DocumentSummary>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))? {
            let entry = entry.map_err(|e| StoreError::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if entry.path().is_dir() && valid_doc_id(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            let runs = self.runs(&id)?;
            let Some(&latest) = runs.last() else { continue };
            let table = self.load(&id, Some(latest))?;
            let title = self.load_document(&id).map(|d| d.title).unwrap_or_default();
            out.push(DocumentSummary {
                doc_id: id,
                title,
                latest_run: latest,
                runs,
                cells: table.records.len(),
                low_confidence: table.records.iter().filter(|r| r.reconciled.low_confidence).count(),
                reviewed: table
                    .records
                    .iter()
                    .filter(|r| r.review_status != ReviewStatus::Unreviewed)
                    .count(),
            });
        }
        Ok(out)
    }

    /// Records a review on the latest run and returns the updated cell.
    pub fn apply_review(&self, doc_id: &str, column_id: &str, action: ReviewAction) -> Result<CellRecord, StoreError> {
        action.validate()?;
        let dir = self.doc_dir(doc_id)?;
        let lock = self.lock(doc_id);
        let _guard = lock.lock().expect("document lock");
        let version = self.latest_run(doc_id)?;
        let table = self.load(doc_id, Some(version))?;
        let mut record = table
            .records
            .into_iter()
            .find(|r| r.column_id == column_id)
            .ok_or_else(|| StoreError::NotFound(format!("cell `{column_id}` in document `{doc_id}`")))?;
        let before = record.state();
        let mut after_record = record.clone();
        after_record.transition(&action);
        let event = HistoryEvent {
            seq: self.read_events(doc_id)?.len() as u64 + 1,
            timestamp: self.clock.now(),
            run: version,
            column_id: column_id.to_string(),
            action,
            before,
            after: after_record.state(),
        };
        let path = dir.join("reviews.jsonl");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        let line = serde_json::to_string(&event).expect("events serialize") + "\n";
        f.write_all(line.as_bytes()).map_err(|e| StoreError::io(&path, e))?;
        f.sync_all().map_err(|e| StoreError::io(&path, e))?;
        record.apply(&event);
        Ok(record)
    }

    /// Review events for a document in log order.
    pub fn history(&self, doc_id: &str) -> Result<Vec<HistoryEvent>, StoreError> {
        self.read_events(doc_id)
    }

    pub fn cell_detail(&self, doc_id: &str, column_id: &str) -> Result<CellDetail, StoreError> {
        let table = self.load(doc_id, None)?;
        let record = table
            .records
            .into_iter()
            .find(|r| r.column_id == column_id)
            .ok_or_else(|| StoreError::NotFound(format!("cell `{column_id}` in document `{doc_id}`")))?;
        let doc = self.load_document(doc_id)?;
        let cell = &record.reconciled;
        let pages: BTreeSet<u32> = [
            cell.inputs.a.attribution.as_ref(),
            cell.inputs.b.attribution.as_ref(),
            cell.attribution.as_ref(),
            cell.correction.as_ref().and_then(|c| c.attribution.as_ref()),
        ]
        .into_iter()
        .flatten()
        .map(|a| a.page)
        .collect();
        Ok(CellDetail {
            doc_id: doc_id.to_string(),
            run: table.manifest.run_version,
            column: table.manifest.columns.iter().find(|c| c.id == column_id).cloned(),
            effective_value: record.effective_value().to_string(),
            effective_attribution: record.effective_attribution().cloned(),
            label: cell.label,
            low_confidence: cell.low_confidence,
            candidate_a: cell.extraction(Extractor::AgentA).clone(),
            candidate_b: cell.extraction(Extractor::AgentB).clone(),
            reconciler_reasoning: cell.reconciler_reasoning.clone(),
            pages: pages.into_iter().filter_map(|p| get_page(&doc, p).ok()).collect(),
            record,
        })
    }

    /// Path of a stored page image, resolved against the document directory
    /// when relative.
    pub fn page_image_path(&self, doc_id: &str, page: u32) -> Result<PathBuf, StoreError> {
        let doc = self.load_document(doc_id)?;
        let reference = doc
            .page_images
            .get(&page)
            .ok_or_else(|| StoreError::NotFound(format!("image for page {page} of `{doc_id}`")))?;
        let path = PathBuf::from(reference);
        Ok(if path.is_absolute() {
            path
        } else {
            self.doc_dir(doc_id)?.join(path)
        })
    }

    /// Preference and supervision records for the latest run of each document.
    pub fn export_supervision(&self, doc_ids: &[String]) -> Result<Vec<SupervisionRecord>, StoreError> {
        let mut ids = doc_ids.to_vec();
        ids.sort();
        ids.dedup();
        let mut out = Vec::new();
        for id in ids {
            let table = self.load(&id, None)?;
            out.extend(export_supervision_records(&table));
        }
        Ok(out)
    }

    /// Writes a baseline run's predictions; each mode keeps only its latest run.
    pub fn persist_baseline(&self, doc: &ParsedDocument, baseline: &BaselineRun, ledger: &[UsageRecord]) -> Result<PathBuf, StoreError> {
        let mode = &baseline.manifest.mode;
        if !valid_doc_id(mode) {
            return Err(StoreError::InvalidId(mode.clone()));
        }
        if baseline.manifest.doc_id != doc.doc_id {
            return Err(StoreError::Validation(vec![format!(
                "baseline is for `{}`, not `{}`",
                baseline.manifest.doc_id, doc.doc_id
            )]));
        }
        let dir = self.doc_dir(&doc.doc_id)?;
        let lock = self.lock(&doc.doc_id);
        let _guard = lock.lock().expect("document lock");
        let out = dir.join("baselines");
        fs::create_dir_all(&out).map_err(|e| StoreError::io(&out, e))?;
        write_atomic(&dir.join("document.json"), &pretty(doc))?;
        let ledger_text: String = ledger
            .iter()
            .map(|r| serde_json::to_string(r).expect("usage records serialize") + "\n")
            .collect();
        write_atomic(&out.join(format!("{mode}.ledger.jsonl")), ledger_text.as_bytes())?;
        let path = out.join(format!("{mode}.json"));
        write_atomic(&path, &pretty(baseline))?;
        Ok(path)
    }

    pub fn load_baseline(&self, doc_id: &str, mode: &str) -> Result<BaselineRun, StoreError> {
        if !valid_doc_id(mode) {
            return Err(StoreError::InvalidId(mode.to_string()));
        }
        read_json(&self.doc_dir(doc_id)?.join("baselines").join(format!("{mode}.json")))
    }

    pub fn document_ids(&self) -> Result<Vec<String>, StoreError> {
        Ok(self.list_documents()?.into_iter().map(|d| d.doc_id).collect())
    }
}

/// True when the effective value is backed by an evidence chain or is
/// exempt from needing one.
pub fn is_auditable(record: &CellRecord) -> bool {
    is_not_reported(record.effective_value())
        || record.review_status == ReviewStatus::HumanCorrected
        || record.reconciled.label == VerificationLabel::BothWrong
        || record.effective_attribution().is_some()
}
