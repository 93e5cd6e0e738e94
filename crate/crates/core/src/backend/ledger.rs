//! Append-only token and call accounting.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::AgentRole;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CallOutcome {
    Structured,
    ToolCall { name: String },
    Invalid { reason: String },
    TransportError { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub call_id: String,
    pub doc_id: String,
    pub agent: AgentRole,
    pub batch_id: Option<usize>,
    pub turn: u32,
    pub attempt: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_time_ms: u64,
    pub outcome: CallOutcome,
}

impl UsageRecord {
    fn sort_key(&self) -> (&str, AgentRole, Option<usize>, u32, u32) {
        (&self.doc_id, self.agent, self.batch_id, self.turn, self.attempt)
    }

    pub fn tool_name(&self) -> Option<&str> {
        match &self.outcome {
            CallOutcome::ToolCall { name } => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Default)]
pub struct UsageLedger {
    records: Mutex<Vec<UsageRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_tokens: u64,
    pub api_calls: u64,
}

impl UsageTotals {
    fn add(&mut self, r: &UsageRecord) {
        self.input_tokens += r.input_tokens;
        self.output_tokens += r.output_tokens;
        self.total_tokens += r.input_tokens + r.output_tokens;
        self.api_calls += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerReport {
    pub per_agent: BTreeMap<AgentRole, UsageTotals>,
    pub total: UsageTotals,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<UsageRecord>) -> Self {
        Self {
            records: Mutex::new(records),
        }
    }

    pub fn append(&self, record: UsageRecord) {
        self.records.lock().expect("ledger lock").push(record);
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records ordered by (document, agent, batch, turn, attempt), independent
    /// of the order concurrent workers appended them.
    pub fn records(&self) -> Vec<UsageRecord> {
        let mut out = self.records.lock().expect("ledger lock").clone();
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        out
    }

    /// Moves another ledger's records into this one.
    pub fn absorb(&self, other: &UsageLedger) {
        let taken = std::mem::take(&mut *other.records.lock().expect("ledger lock"));
        self.records.lock().expect("ledger lock").extend(taken);
    }

    pub fn report(&self) -> LedgerReport {
        ledger_report(&self.records())
    }

    /// Delimited table with the columns `Agent, In Tok., Out Tok., Total Tok., API Calls`.
    pub fn report_csv(&self) -> String {
        let report = self.report();
        let mut w = csv::Writer::from_writer(Vec::new());
        let row = |w: &mut csv::Writer<Vec<u8>>, name: &str, t: &UsageTotals| {
            w.write_record([
                name.to_string(),
                t.input_tokens.to_string(),
                t.output_tokens.to_string(),
                t.total_tokens.to_string(),
                t.api_calls.to_string(),
            ])
            .expect("in-memory csv");
        };
        w.write_record(["Agent", "In Tok.", "Out Tok.", "Total Tok.", "API Calls"])
            .expect("in-memory csv");
        for (agent, totals) in &report.per_agent {
            row(&mut w, agent.as_str(), totals);
        }
        row(&mut w, "total", &report.total);
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable record") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_records(records))
    }
}

pub fn ledger_report(records: &[UsageRecord]) -> LedgerReport {
    let mut report = LedgerReport::default();
    for r in records {
        report.per_agent.entry(r.agent).or_default().add(r);
        report.total.add(r);
    }
    report
}
