//! Scoring against gold annotations.
//!
//! * correctness: correct cells over attempted cells that have gold;
//! * completeness: attempted cells over gold-reported cells;
//! * overall: the mean of the two.
//!
//! A cell is attempted when its prediction neither failed nor abstained
//! with the sentinel, so abstentions cost completeness, not correctness.

mod judge;
mod numeric;
mod report;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Attribution, Extraction};
use crate::docmodel::Modality;
use crate::schema::{Category, ColumnDef, Schema};
use crate::store::CellRecord;
use crate::text::is_not_reported;

pub use judge::{fallback_text_match, judge_cell, JudgeContext};
pub use numeric::{numeric_match, numeric_match_detail, NumericMatch, Tolerance};
pub use report::{fig3_csv, fig3_rows, table1_csv, table1_rows, Fig3Row, Table1Row};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold file is malformed: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid gold file: {0}")]
    Invalid(String),
    #[error("gold columns absent from the schema: {}", .0.join(", "))]
    UnknownColumns(Vec<String>),
    #[error("gold is for document `{gold}` but predictions are for `{run}`")]
    DocMismatch { gold: String, run: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldCell {
    pub column_id: String,
    pub value: String,
    #[serde(default)]
    pub attribution: Option<Attribution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSet {
    pub doc_id: String,
    pub cells: Vec<GoldCell>,
}

pub fn load_gold(source: &str) -> Result<GoldSet, EvalError> {
    let gold: GoldSet = serde_json::from_str(source)?;
    if gold.doc_id.trim().is_empty() {
        return Err(EvalError::Invalid("doc_id must be non-empty".into()));
    }
    if gold.cells.is_empty() {
        return Err(EvalError::Invalid("gold has no cells".into()));
    }
    let mut seen = HashSet::new();
    for cell in &gold.cells {
        if !seen.insert(cell.column_id.as_str()) {
            return Err(EvalError::Invalid(format!("column `{}` appears twice", cell.column_id)));
        }
        if cell.value.trim().is_empty() {
            return Err(EvalError::Invalid(format!("column `{}` has an empty value", cell.column_id)));
        }
        if cell.attribution.as_ref().is_some_and(|a| a.page == 0) {
            return Err(EvalError::Invalid(format!("column `{}` cites page 0", cell.column_id)));
        }
    }
    Ok(gold)
}

/// The value scored for one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub column_id: String,
    pub value: String,
    pub failed: bool,
    pub attribution: Option<Attribution>,
}

impl Prediction {
    pub fn attempted(&self) -> bool {
        !self.failed && !is_not_reported(&self.value)
    }

    pub fn from_record(record: &CellRecord) -> Self {
        let cell = &record.reconciled;
        // a reconciled sentinel is a failure only when both agents failed
        let failed = cell.inputs.a.failed && cell.inputs.b.failed && record.human_value.is_none();
        Self {
            column_id: record.column_id.clone(),
            value: record.effective_value().to_string(),
            failed,
            attribution: record.effective_attribution().cloned(),
        }
    }

    pub fn from_extraction(e: &Extraction) -> Self {
        Self {
            column_id: e.column_id.clone(),
            value: e.value.clone(),
            failed: e.failed,
            attribution: e.attribution.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    /// The prediction abstained or failed where gold reports a value.
    Missing,
    /// The judge could not be consulted.
    Unevaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub column_id: String,
    pub category: Category,
    pub gold_modality: Option<Modality>,
    pub prediction: String,
    pub gold: String,
    pub attempted: bool,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StratumScore {
    pub cells: usize,
    pub attempted: usize,
    pub correct: usize,
    pub unevaluated: usize,
    pub gold_reported: usize,
    pub filled: usize,
    /// Percentages; `None` when the denominator is zero.
    pub correctness: Option<f64>,
    pub completeness: Option<f64>,
    pub overall: Option<f64>,
}

impl StratumScore {
    fn add(&mut self, v: &CellVerdict) {
        self.cells += 1;
        let gold_reported = !is_not_reported(&v.gold);
        if v.verdict == Verdict::Unevaluated {
            self.unevaluated += 1;
        } else if v.attempted {
            self.attempted += 1;
            if v.verdict == Verdict::Correct {
                self.correct += 1;
            }
        }
        if gold_reported {
            self.gold_reported += 1;
            if v.attempted {
                self.filled += 1;
            }
        }
    }

    fn finish(mut self) -> Self {
        let pct = |n: usize, d: usize| (d > 0).then(|| 100.0 * n as f64 / d as f64);
        self.correctness = pct(self.correct, self.attempted);
        self.completeness = pct(self.filled, self.gold_reported);
        self.overall = match (self.correctness, self.completeness) {
            (Some(c), Some(m)) => Some((c + m) / 2.0),
            _ => None,
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub doc_ids: Vec<String>,
    pub numerical: StratumScore,
    pub free_text: StratumScore,
    pub all: StratumScore,
    pub by_modality: BTreeMap<Modality, StratumScore>,
    /// Share of attempted predictions that carry an attribution.
    pub attribution_coverage: Option<f64>,
    pub unevaluated: usize,
    /// Numerical gold values with no parseable number.
    pub unparseable_gold: usize,
}

impl EvalReport {
    pub fn strata(&self) -> Vec<(&str, &StratumScore)> {
        let mut out = vec![
            ("numerical", &self.numerical),
            ("free_text", &self.free_text),
            ("all", &self.all),
        ];
        out.extend(self.by_modality.iter().map(|(m, s)| (m.as_str(), s)));
        out
    }

    /// Checks that every stratum's overall is the mean of its two rates.
    pub fn check_overall_identity(&self) -> Result<(), String> {
        for (name, s) in self.strata() {
            let expected = match (s.correctness, s.completeness) {
                (Some(c), Some(m)) => Some((c + m) / 2.0),
                _ => None,
            };
            if s.overall != expected {
                return Err(format!("{name}: overall {:?} is not the mean {:?}", s.overall, expected));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: EvalReport,
    pub verdicts: Vec<CellVerdict>,
}

/// Scores predictions for one or more documents. Each entry pairs a gold
/// set with that document's predictions.
pub fn score_run(
    label: &str,
    docs: &[(&GoldSet, &[Prediction])],
    schema: &Schema,
    judge: Option<&JudgeContext<'_>>,
    tolerance: Tolerance,
) -> Result<Evaluation, EvalError> {
    let columns: BTreeMap<&str, &ColumnDef> = schema.columns.iter().map(|c| (c.id.as_str(), c)).collect();
    let unknown: Vec<String> = docs
        .iter()
        .flat_map(|(g, _)| g.cells.iter())
        .filter(|c| !columns.contains_key(c.column_id.as_str()))
        .map(|c| c.column_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownColumns(unknown));
    }

    let mut verdicts = Vec::new();
    let mut coverage = (0usize, 0usize);
    let mut unparseable = 0;
    for (gold, predictions) in docs {
        let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.column_id.as_str(), p)).collect();
        for p in predictions.iter().filter(|p| p.attempted()) {
            coverage.1 += 1;
            if p.attribution.is_some() {
                coverage.0 += 1;
            }
        }
        let cells: Vec<(usize, &GoldCell)> = gold.cells.iter().enumerate().collect();
        let judged: Vec<CellVerdict> = {
            use rayon::prelude::*;
            cells
                .par_iter()
                .map(|(i, g)| {
                    let column = columns[g.column_id.as_str()];
                    let missing = Prediction {
                        column_id: g.column_id.clone(),
                        value: crate::text::NOT_REPORTED.to_string(),
                        failed: true,
                        attribution: None,
                    };
                    let p = by_id.get(g.column_id.as_str()).copied().unwrap_or(&missing);
                    let (verdict, note) = judge_cell(p, g, column, judge, tolerance, &gold.doc_id, *i as u32);
                    CellVerdict {
                        column_id: g.column_id.clone(),
                        category: column.category,
                        gold_modality: g.attribution.as_ref().map(|a| a.modality),
                        prediction: p.value.clone(),
                        gold: g.value.clone(),
                        attempted: p.attempted(),
                        verdict,
                        note,
                    }
                })
                .collect()
        };
        unparseable += gold
            .cells
            .iter()
            .filter(|g| {
                columns[g.column_id.as_str()].category == Category::Numerical
                    && !is_not_reported(&g.value)
                    && numeric::reported_numbers(&g.value).is_empty()
            })
            .count();
        verdicts.extend(judged);
    }

    let mut numerical = StratumScore::default();
    let mut free_text = StratumScore::default();
    let mut all = StratumScore::default();
    let mut by_modality: BTreeMap<Modality, StratumScore> = BTreeMap::new();
    for v in &verdicts {
        all.add(v);
        match v.category {
            Category::Numerical => numerical.add(v),
            Category::FreeText => free_text.add(v),
        }
        if let Some(m) = v.gold_modality {
            by_modality.entry(m).or_default().add(v);
        }
    }
    let report = EvalReport {
        label: label.to_string(),
        doc_ids: docs.iter().map(|(g, _)| g.doc_id.clone()).collect(),
        unevaluated: all.unevaluated,
        numerical: numerical.finish(),
        free_text: free_text.finish(),
        all: all.finish(),
        by_modality: by_modality.into_iter().map(|(m, s)| (m, s.finish())).collect(),
        attribution_coverage: (coverage.1 > 0).then(|| 100.0 * coverage.0 as f64 / coverage.1 as f64),
        unparseable_gold: unparseable,
    };
    Ok(Evaluation { report, verdicts })
}
