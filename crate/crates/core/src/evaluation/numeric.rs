use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::{is_not_reported, numeric_tokens};

// "95% CI" names the interval; its level is not a reported value.
static INTERVAL_LEVEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b\d{2}(?:\.\d+)?\s?%\s*(?:CI\b|confidence\b)").expect("static regex"));

pub(crate) fn reported_numbers(s: &str) -> Vec<f64> {
    numeric_tokens(&INTERVAL_LEVEL.replace_all(s, " CI"))
        .iter()
        .map(|t| t.value)
        .collect()
}

/// A predicted number matches a gold number when
/// `|p - g| <= max(abs_tol, rel_tol * |g|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerance {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_tol: 0.005,
            abs_tol: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn close(&self, predicted: f64, gold: f64) -> bool {
        (predicted - gold).abs() <= self.abs_tol.max(self.rel_tol * gold.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMatch {
    pub matched: bool,
    pub gold_numbers: Vec<f64>,
    pub predicted_numbers: Vec<f64>,
    /// Gold numbers left without a partner in the best assignment.
    pub unmatched_gold: Vec<f64>,
    /// Gold reports a value that contains no number.
    pub unparseable_gold: bool,
}

// Kuhn's augmenting-path search; `owner[j]` is the gold index holding prediction j.
fn augment(g: usize, edges: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
    for &p in &edges[g] {
        if seen[p] {
            continue;
        }
        seen[p] = true;
        if owner[p].is_none_or(|other| augment(other, edges, seen, owner)) {
            owner[p] = Some(g);
            return true;
        }
    }
    false
}

/// Matches every gold number to a distinct predicted number within
/// tolerance. Extra predicted numbers are allowed; percent signs and
/// interval levels such as "95% CI" are ignored.
pub fn numeric_match_detail(predicted: &str, gold: &str, tol: Tolerance) -> NumericMatch {
    let gold_nr = is_not_reported(gold);
    let pred_nr = is_not_reported(predicted);
    let gold_numbers = if gold_nr { vec![] } else { reported_numbers(gold) };
    let predicted_numbers = if pred_nr { vec![] } else { reported_numbers(predicted) };
    let mut out = NumericMatch {
        matched: false,
        unmatched_gold: gold_numbers.clone(),
        gold_numbers,
        predicted_numbers,
        unparseable_gold: false,
    };
    if gold_nr || pred_nr {
        out.matched = gold_nr && pred_nr;
        if out.matched {
            out.unmatched_gold.clear();
        }
        return out;
    }
    if out.gold_numbers.is_empty() {
        out.unparseable_gold = true;
        return out;
    }
    let edges: Vec<Vec<usize>> = out
        .gold_numbers
        .iter()
        .map(|&g| {
            out.predicted_numbers
                .iter()
                .enumerate()
                .filter(|(_, &p)| tol.close(p, g))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut owner = vec![None; out.predicted_numbers.len()];
    let mut unmatched = Vec::new();
    for (g, &value) in out.gold_numbers.iter().enumerate() {
        let mut seen = vec![false; owner.len()];
        if !augment(g, &edges, &mut seen, &mut owner) {
            unmatched.push(value);
        }
    }
    out.matched = unmatched.is_empty();
    out.unmatched_gold = unmatched;
    out
}

pub fn numeric_match(predicted: &str, gold: &str, tol: Tolerance) -> bool {
    numeric_match_detail(predicted, gold, tol).matched
}
