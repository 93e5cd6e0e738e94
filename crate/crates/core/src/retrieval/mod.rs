//! Page-level embedding index with exhaustive cosine search.

mod embedder;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docmodel::{get_page, ParsedDocument};

pub use embedder::{parse_embedding_response, EmbedError, EmbeddingProvider, HashEmbedder, HttpEmbedder};

/// Texts per provider request.
pub const EMBED_BATCH_SIZE: usize = 100;
/// Default number of pages returned by a search.
pub const DEFAULT_TOP_K: usize = 5;
const SUMMARY_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("embedding batch {start}..{end} failed: {source}")]
    Provider {
        start: usize,
        end: usize,
        #[source]
        source: EmbedError,
    },
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("document has no page with content")]
    EmptyDocument,
    #[error("index is empty")]
    EmptyIndex,
}

impl RetrievalError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RetrievalError::Provider { source, .. } if source.retryable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub page: u32,
    pub vector: EmbeddingVector,
    pub summary: String,
    /// Full page text returned with hits.
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentIndex {
    pub doc_id: String,
    pub dimension: usize,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub page: u32,
    pub score: f64,
    pub content: String,
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch(a.dim(), b.dim()));
    }
    if a.0.iter().chain(&b.0).any(|v| !v.is_finite()) {
        return Err(RetrievalError::NonFinite);
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Builds the index with the default provider batch size.
pub fn build_index(doc: &ParsedDocument, embedder: &dyn EmbeddingProvider) -> Result<DocumentIndex, RetrievalError> {
    build_index_batched(doc, embedder, EMBED_BATCH_SIZE)
}

/// Embeds the text of every page that has at least one chunk.
pub fn build_index_batched(
    doc: &ParsedDocument,
    embedder: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<DocumentIndex, RetrievalError> {
    let pages: Vec<(u32, String)> = (1..=doc.n_pages)
        .filter_map(|p| {
            let view = get_page(doc, p).ok()?;
            (!view.chunk_ids.is_empty()).then_some((p, view.text))
        })
        .collect();
    if pages.is_empty() {
        return Err(RetrievalError::EmptyDocument);
    }

    let mut entries = Vec::with_capacity(pages.len());
    let mut dimension = None;
    for (batch_no, batch) in pages.chunks(batch_size.max(1)).enumerate() {
        let start = batch_no * batch_size.max(1);
        let end = start + batch.len();
        let texts: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
        let vectors = embedder
            .embed(&texts)
            .map_err(|source| RetrievalError::Provider { start, end, source })?;
        if vectors.len() != batch.len() {
            return Err(RetrievalError::Provider {
                start,
                end,
                source: EmbedError::fatal(format!(
                    "provider returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )),
            });
        }
        for ((page, text), vector) in batch.iter().zip(vectors) {
            if vector.0.iter().any(|v| !v.is_finite()) {
                return Err(RetrievalError::NonFinite);
            }
            let dim = *dimension.get_or_insert(vector.dim());
            if vector.dim() != dim {
                return Err(RetrievalError::DimensionMismatch(dim, vector.dim()));
            }
            entries.push(IndexEntry {
                page: *page,
                vector,
                summary: text.chars().take(SUMMARY_CHARS).collect(),
                content: text.clone(),
            });
        }
    }

    Ok(DocumentIndex {
        doc_id: doc.doc_id.clone(),
        dimension: dimension.unwrap_or(0),
        entries,
    })
}

fn rank(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.page.cmp(&b.page))
}

/// Top-`k` pages for an already-embedded query.
pub fn search_vector(index: &DocumentIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, RetrievalError> {
    if index.entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut hits = index
        .entries
        .iter()
        .map(|e| {
            Ok(SearchHit {
                page: e.page,
                score: cosine_similarity(query, &e.vector)?,
                content: e.content.clone(),
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    hits.sort_by(rank);
    hits.truncate(k);
    Ok(hits)
}

/// Embeds `query` and returns the `k` most similar pages with their full text.
pub fn search(
    index: &DocumentIndex,
    query: &str,
    embedder: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<SearchHit>, RetrievalError> {
    if index.entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut vectors = embedder
        .embed(&[query.to_string()])
        .map_err(|source| RetrievalError::Provider { start: 0, end: 1, source })?;
    let vector = vectors.pop().ok_or(RetrievalError::Provider {
        start: 0,
        end: 1,
        source: EmbedError::fatal("provider returned no vector for the query"),
    })?;
    search_vector(index, &vector, k)
}
