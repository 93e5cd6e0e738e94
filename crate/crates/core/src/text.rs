//! Value normalization and tokenization shared by reconciliation and scoring.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

/// Canonical sentinel for a value the document does not report.
pub const NOT_REPORTED: &str = "Not reported";

static NUMBER_OR_WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        (?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)? | \d+(?:\.\d+)? | \.\d+)
        (?P<pct>[\ \t]?%)?
        |
        (?P<word>[^\W\d_]+)",
    )
    .expect("static regex")
});

/// Collapses internal whitespace runs to single spaces and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True for the missing-value sentinel, ignoring case and surrounding whitespace.
pub fn is_not_reported(s: &str) -> bool {
    normalize_whitespace(s).eq_ignore_ascii_case(NOT_REPORTED)
}

/// Number found inside a free-form value string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumberToken {
    pub value: f64,
    pub percent: bool,
}

/// Token of a value string: numbers carry their parsed value, words their text.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueToken {
    Number(f64),
    Word(String),
}

impl ValueToken {
    fn rank(&self) -> u8 {
        match self {
            ValueToken::Number(_) => 0,
            ValueToken::Word(_) => 1,
        }
    }

    /// Total order used to sort token multisets.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ValueToken::Number(a), ValueToken::Number(b)) => a.total_cmp(b),
            (ValueToken::Word(a), ValueToken::Word(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

// A leading '-' is a sign only when it does not directly follow a word or
// number character; "0.51-0.76" is a range, "HR -0.2" is negative.
fn signed(s: &str, start: usize, value: f64) -> f64 {
    let before = &s[..start];
    let mut rev = before.chars().rev();
    match rev.next() {
        Some('-') | Some('\u{2212}') => match rev.next() {
            Some(c) if c.is_alphanumeric() || c == '.' || c == ')' => value,
            _ => -value,
        },
        _ => value,
    }
}

fn parse_number(raw: &str) -> Option<f64> {
    let cleaned: String = raw.chars().filter(|c| *c != ',').collect();
    let value: f64 = cleaned.parse().ok()?;
    value.is_finite().then_some(value)
}

/// Extracts every number in `s`, handling thousands separators, percent
/// signs, ranges and bracketed intervals.
pub fn numeric_tokens(s: &str) -> Vec<NumberToken> {
    NUMBER_OR_WORD
        .captures_iter(s)
        .filter_map(|caps| {
            let num = caps.name("num")?;
            let value = parse_number(num.as_str())?;
            Some(NumberToken {
                value: signed(s, num.start(), value),
                percent: caps.name("pct").is_some(),
            })
        })
        .collect()
}

/// Splits a value into number and word tokens; punctuation is dropped.
pub fn value_tokens(s: &str) -> Vec<ValueToken> {
    NUMBER_OR_WORD
        .captures_iter(s)
        .filter_map(|caps| {
            if let Some(num) = caps.name("num") {
                let value = parse_number(num.as_str())?;
                Some(ValueToken::Number(signed(s, num.start(), value)))
            } else {
                caps.name("word")
                    .map(|w| ValueToken::Word(w.as_str().to_string()))
            }
        })
        .collect()
}

/// Lower-cased alphanumeric word set, used for order-insensitive text comparison.
pub fn word_set(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when `smaller`'s token multiset is a proper sub-multiset of `larger`'s.
pub fn is_strict_token_superset(larger: &str, smaller: &str) -> bool {
    let mut big = value_tokens(larger);
    let mut small = value_tokens(smaller);
    if small.is_empty() || small.len() >= big.len() {
        return false;
    }
    big.sort_by(ValueToken::total_cmp);
    small.sort_by(ValueToken::total_cmp);
    let mut i = 0;
    for tok in &small {
        loop {
            let Some(candidate) = big.get(i) else {
                return false;
            };
            i += 1;
            match candidate.total_cmp(tok) {
                Ordering::Equal => break,
                Ordering::Less => continue,
                Ordering::Greater => return false,
            }
        }
    }
    true
}
