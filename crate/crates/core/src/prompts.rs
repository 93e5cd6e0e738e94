//! System prompt templates.
//!
//! Defaults are compiled in from `prompts/*.txt`; a directory holding files
//! with the same names overrides them one by one.

use std::path::Path;

use serde::{Deserialize, Serialize};

/// Bumped whenever a default template changes wording.
pub const PROMPT_VERSION: &str = "2";

const FILES: [&str; 5] = [
    "agent_a.txt",
    "agent_b.txt",
    "reconciler.txt",
    "judge_numerical.txt",
    "judge_free_text.txt",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub agent_a: String,
    pub agent_b: String,
    pub reconciler: String,
    pub judge_numerical: String,
    pub judge_free_text: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            version: PROMPT_VERSION.to_string(),
            agent_a: include_str!("../prompts/agent_a.txt").to_string(),
            agent_b: include_str!("../prompts/agent_b.txt").to_string(),
            reconciler: include_str!("../prompts/reconciler.txt").to_string(),
            judge_numerical: include_str!("../prompts/judge_numerical.txt").to_string(),
            judge_free_text: include_str!("../prompts/judge_free_text.txt").to_string(),
        }
    }
}

impl PromptSet {
    /// Defaults with any templates found in `dir` swapped in.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        let mut overridden = Vec::new();
        for file in FILES {
            let path = dir.join(file);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            overridden.push(file.trim_end_matches(".txt"));
            match file {
                "agent_a.txt" => set.agent_a = text,
                "agent_b.txt" => set.agent_b = text,
                "reconciler.txt" => set.reconciler = text,
                "judge_numerical.txt" => set.judge_numerical = text,
                _ => set.judge_free_text = text,
            }
        }
        if !overridden.is_empty() {
            set.version = format!("{}+custom({})", PROMPT_VERSION, overridden.join(","));
        }
        Ok(set)
    }
}

/// Appends a structured payload to prompt text as a fenced JSON block.
pub fn with_payload(text: &str, payload: &serde_json::Value) -> String {
    format!(
        "{}\n\n```json\n{}\n```",
        text.trim_end(),
        serde_json::to_string_pretty(payload).expect("payload serializes")
    )
}
