//! Parsed-document model: element-level chunks with page and modality.
//!
//! Page text handed to agents prefixes every chunk with a marker line
//! `[[modality:page:chunk_id]]` so quotes can be traced back to a chunk.

mod table;
pub mod vendor;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{parse_pipe_table, TableGrid};

/// Line emitted between pages by [`render_markdown`].
pub const PAGE_SEPARATOR: &str = "<!-- page-break -->";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("document record is malformed: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error("page {page} is out of range 1..={n_pages}")]
    PageOutOfRange { page: u32, n_pages: u32 },
    #[error("vendor record could not be adapted: {0}")]
    Adapter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Table,
    Figure,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Table, Modality::Figure];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Table => "table",
            Modality::Figure => "figure",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Modality::Text),
            "table" => Ok(Modality::Table),
            "figure" => Ok(Modality::Figure),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chunk {
    pub chunk_id: String,
    pub page: u32,
    pub modality: Modality,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub title: String,
    pub n_pages: u32,
    pub chunks: Vec<Chunk>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub page_images: BTreeMap<u32, String>,
    /// Original PDF, for backends that accept native documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_pdf: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageView {
    pub page: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub chunk_ids: Vec<String>,
}

/// One chunk recovered from marker-annotated page or document text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedBlock {
    pub modality: Modality,
    pub page: u32,
    pub chunk_id: String,
    pub content: String,
}

impl ParsedDocument {
    pub fn validate(&self) -> Result<(), DocumentError> {
        let invalid = |m: String| Err(DocumentError::Invalid(m));
        if self.doc_id.trim().is_empty() {
            return invalid("doc_id must be non-empty".into());
        }
        if self.n_pages == 0 {
            return invalid("n_pages must be positive".into());
        }
        let mut ids = HashSet::new();
        let mut last_page = 0;
        for chunk in &self.chunks {
            if chunk.page == 0 || chunk.page > self.n_pages {
                return invalid(format!(
                    "chunk {} references page {} outside 1..={}",
                    chunk.chunk_id, chunk.page, self.n_pages
                ));
            }
            if chunk.page < last_page {
                return invalid(format!(
                    "chunk {} on page {} follows page {}; chunks must be in page order",
                    chunk.chunk_id, chunk.page, last_page
                ));
            }
            last_page = chunk.page;
            if !ids.insert(chunk.chunk_id.as_str()) {
                return invalid(format!("duplicate chunk id {}", chunk.chunk_id));
            }
            if chunk.content.trim().is_empty() && chunk.modality != Modality::Figure {
                return invalid(format!(
                    "{} chunk {} has empty content",
                    chunk.modality, chunk.chunk_id
                ));
            }
        }
        if let Some(page) = self.page_images.keys().find(|p| **p == 0 || **p > self.n_pages) {
            return invalid(format!("page image for page {page} outside document"));
        }
        Ok(())
    }

    pub fn chunks_on_page(&self, page: u32) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter().filter(move |c| c.page == page)
    }

    pub fn has_page_images(&self) -> bool {
        !self.page_images.is_empty()
    }
}

/// Parses and validates a document record.
pub fn load_document(source: &str) -> Result<ParsedDocument, DocumentError> {
    let doc: ParsedDocument = serde_json::from_str(source)?;
    doc.validate()?;
    Ok(doc)
}

/// Loads either a native document record or a vendor parse record. Vendor
/// records take `doc_id` from the argument and their title from a `title`
/// field when present.
pub fn load_any_document(source: &str, doc_id: &str) -> Result<ParsedDocument, DocumentError> {
    let value: serde_json::Value = serde_json::from_str(source)?;
    if value.get("doc_id").is_some() {
        let doc: ParsedDocument = serde_json::from_value(value)?;
        doc.validate()?;
        return Ok(doc);
    }
    let title = value.get("title").and_then(|t| t.as_str()).unwrap_or(doc_id).to_string();
    vendor::adapt_vendor_record(&value, doc_id, &title)
}

/// Marker line written before each chunk in page and document text.
pub fn chunk_marker(chunk: &Chunk) -> String {
    format!("[[{}:{}:{}]]", chunk.modality, chunk.page, chunk.chunk_id)
}

/// Chunk content as agents see it; tables are re-rendered as pipe tables.
pub fn render_chunk_content(chunk: &Chunk) -> String {
    if chunk.modality == Modality::Table {
        if let Some(grid) = TableGrid::parse(&chunk.content) {
            return grid.to_markdown();
        }
    }
    chunk.content.trim().to_string()
}

fn render_blocks<'a>(chunks: impl Iterator<Item = &'a Chunk>) -> (String, Vec<String>) {
    let mut blocks = Vec::new();
    let mut ids = Vec::new();
    for chunk in chunks {
        let body = render_chunk_content(chunk);
        let block = if body.is_empty() {
            chunk_marker(chunk)
        } else {
            format!("{}\n{}", chunk_marker(chunk), body)
        };
        blocks.push(block);
        ids.push(chunk.chunk_id.clone());
    }
    (blocks.join("\n\n"), ids)
}

/// Page text and image for one page.
pub fn get_page(doc: &ParsedDocument, page: u32) -> Result<PageView, DocumentError> {
    if page == 0 || page > doc.n_pages {
        return Err(DocumentError::PageOutOfRange {
            page,
            n_pages: doc.n_pages,
        });
    }
    let (text, chunk_ids) = render_blocks(doc.chunks_on_page(page));
    Ok(PageView {
        page,
        text,
        image: doc.page_images.get(&page).cloned(),
        chunk_ids,
    })
}

/// Whole-document rendering with per-page headers and page separators.
pub fn render_markdown(doc: &ParsedDocument) -> String {
    let mut out = format!("# {}\n", doc.title.trim());
    for page in 1..=doc.n_pages {
        if page > 1 {
            out.push('\n');
            out.push_str(PAGE_SEPARATOR);
            out.push('\n');
        }
        out.push_str(&format!("\n<!-- page {page} -->\n"));
        let (text, _) = render_blocks(doc.chunks_on_page(page));
        if !text.is_empty() {
            out.push('\n');
            out.push_str(&text);
            out.push('\n');
        }
    }
    out
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^\[\[(text|table|figure):(\d+):([^\]\r\n]*)\]\]\r?$").expect("static regex")
});

/// Splits marker-annotated text back into chunk blocks.
///
/// Text before the first marker, separators and page headers are dropped.
pub fn parse_marked_blocks(text: &str) -> Vec<MarkedBlock> {
    let markers: Vec<_> = MARKER.captures_iter(text).collect();
    let mut blocks = Vec::with_capacity(markers.len());
    for (i, caps) in markers.iter().enumerate() {
        let whole = caps.get(0).expect("group 0");
        let Ok(page) = caps[2].parse::<u32>() else {
            continue;
        };
        let modality = caps[1].parse().expect("regex restricts modality");
        let end = markers
            .get(i + 1)
            .map(|m| m.get(0).expect("group 0").start())
            .unwrap_or(text.len());
        let content: String = text[whole.end()..end]
            .lines()
            .filter(|l| {
                let t = l.trim();
                t != PAGE_SEPARATOR && !(t.starts_with("<!-- page ") && t.ends_with("-->"))
            })
            .collect::<Vec<_>>()
            .join("\n");
        blocks.push(MarkedBlock {
            modality,
            page,
            chunk_id: caps[3].to_string(),
            content: content.trim().to_string(),
        });
    }
    blocks
}
