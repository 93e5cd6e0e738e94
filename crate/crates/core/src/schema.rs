//! Column schema loading and group-aware batch packing.
//!
//! A schema is an ordered list of columns, each tagged with an evaluation
//! category and a clinical group. Columns are packed into batches that keep
//! each group's columns together so an agent sees related fields in one
//! request.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on columns per batch.
pub const DEFAULT_BATCH_LIMIT: usize = 15;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema document is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("schema field `{field}` is missing or malformed: {message}")]
    Header { field: &'static str, message: String },
    #[error("column entry {index} ({id}) is malformed: {message}")]
    Entry {
        index: usize,
        id: String,
        message: String,
    },
    #[error("duplicate column ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
}

/// How a column's predicted values are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Numerical,
    #[serde(alias = "free-text")]
    FreeText,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Numerical => "numerical",
            Category::FreeText => "free_text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDef {
    pub id: String,
    pub name: String,
    /// Extraction instruction, including the fallback convention for missing values.
    pub definition: String,
    pub category: Category,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub version: String,
    pub columns: Vec<ColumnDef>,
}

impl Schema {
    pub fn column(&self, id: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.id == id)
    }

    /// Group names in order of first appearance.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.columns
            .iter()
            .filter(|c| seen.insert(c.group.as_str()))
            .map(|c| c.group.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBatch {
    pub batch_id: usize,
    pub columns: Vec<ColumnDef>,
    pub source_groups: Vec<String>,
}

impl ColumnBatch {
    pub fn column_ids(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Parses and validates a schema document.
///
/// Each column entry is decoded on its own so errors name the offending
/// entry by position and id.
pub fn load_schema(source: &str) -> Result<Schema, SchemaError> {
    let root: serde_json::Value = serde_json::from_str(source)?;
    let obj = root.as_object().ok_or(SchemaError::Header {
        field: "columns",
        message: "top level must be an object".into(),
    })?;
    let header = |field: &'static str| -> Result<String, SchemaError> {
        obj.get(field)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or(SchemaError::Header {
                field,
                message: "expected a string".into(),
            })
    };
    let name = header("name")?;
    let version = header("version")?;
    let entries = obj
        .get("columns")
        .and_then(|v| v.as_array())
        .ok_or(SchemaError::Header {
            field: "columns",
            message: "expected an array".into(),
        })?;

    let mut columns = Vec::with_capacity(entries.len());
    for (index, entry) in entries.iter().enumerate() {
        let id = entry
            .get("id")
            .and_then(|v| v.as_str())
            .unwrap_or("?")
            .to_string();
        let col: ColumnDef =
            serde_json::from_value(entry.clone()).map_err(|e| SchemaError::Entry {
                index,
                id: id.clone(),
                message: e.to_string(),
            })?;
        let blank = |what: &str| SchemaError::Entry {
            index,
            id: id.clone(),
            message: format!("{what} must be non-empty"),
        };
        if col.id.trim().is_empty() {
            return Err(blank("id"));
        }
        if col.definition.trim().is_empty() {
            return Err(blank("definition"));
        }
        if col.group.trim().is_empty() {
            return Err(blank("group"));
        }
        columns.push(col);
    }

    let mut seen = HashSet::new();
    let mut dups: Vec<String> = columns
        .iter()
        .filter(|c| !seen.insert(c.id.as_str()))
        .map(|c| c.id.clone())
        .collect();
    if !dups.is_empty() {
        dups.sort();
        dups.dedup();
        return Err(SchemaError::DuplicateIds(dups));
    }

    Ok(Schema {
        name,
        version,
        columns,
    })
}

/// Packs schema columns into group-aware batches of at most `batch_limit`.
///
/// Groups larger than the limit are split into sequential sub-batches that
/// never absorb other groups. Smaller groups are merged whole, in order of
/// first appearance, until the next group would overflow the limit.
pub fn pack_batches(schema: &Schema, batch_limit: usize) -> Vec<ColumnBatch> {
    let batch_limit = batch_limit.max(1);

    let mut order: Vec<&str> = Vec::new();
    let mut by_group: BTreeMap<&str, Vec<&ColumnDef>> = BTreeMap::new();
    for col in &schema.columns {
        let members = by_group.entry(col.group.as_str()).or_default();
        if members.is_empty() {
            order.push(col.group.as_str());
        }
        members.push(col);
    }

    let mut batches: Vec<ColumnBatch> = Vec::new();
    let mut pending: Vec<&ColumnDef> = Vec::new();
    let mut pending_groups: Vec<String> = Vec::new();

    let mut emit = |cols: &mut Vec<&ColumnDef>, groups: &mut Vec<String>| {
        if cols.is_empty() {
            return;
        }
        batches.push(ColumnBatch {
            batch_id: batches.len(),
            columns: cols.drain(..).cloned().collect(),
            source_groups: std::mem::take(groups),
        });
    };

    for group in order {
        let members = &by_group[group];
        if members.len() > batch_limit {
            emit(&mut pending, &mut pending_groups);
            for chunk in members.chunks(batch_limit) {
                let mut cols = chunk.to_vec();
                let mut groups = vec![group.to_string()];
                emit(&mut cols, &mut groups);
            }
            continue;
        }
        if pending.len() + members.len() > batch_limit {
            emit(&mut pending, &mut pending_groups);
        }
        pending.extend(members.iter().copied());
        pending_groups.push(group.to_string());
    }
    emit(&mut pending, &mut pending_groups);
    batches
}
