//! Adapter from document-parser output records to [`ParsedDocument`].
//!
//! Accepts the two record shapes commonly emitted by hosted layout parsers:
//! chunks keyed `id`/`type`/`markdown` with a single `grounding` object, or
//! `chunk_id`/`chunk_type`/`text` with a `grounding` list. Pages in both are
//! 0-based. Anything the adapter cannot map is an error, never a guess.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{BoundingBox, Chunk, DocumentError, Modality, ParsedDocument};

fn adapter_err(msg: impl Into<String>) -> DocumentError {
    DocumentError::Adapter(msg.into())
}

fn vendor_modality(kind: &str) -> Option<Modality> {
    match kind.to_ascii_lowercase().as_str() {
        "text" | "paragraph" | "title" | "caption" | "marginalia" | "list" | "header"
        | "footer" | "page_header" | "page_footer" | "footnote" | "form" => Some(Modality::Text),
        "table" => Some(Modality::Table),
        "figure" | "image" | "chart" | "picture" | "logo" | "flowchart" => Some(Modality::Figure),
        _ => None,
    }
}

fn field<'a>(obj: &'a Value, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n))
}

fn grounding_of(chunk: &Value) -> Option<&Value> {
    match chunk.get("grounding")? {
        Value::Array(items) => items.first(),
        other @ Value::Object(_) => Some(other),
        _ => None,
    }
}

fn bbox_of(grounding: &Value) -> Option<BoundingBox> {
    let b = grounding.get("box")?;
    let num = |keys: &[&str]| field(b, keys).and_then(Value::as_f64);
    Some(BoundingBox {
        x0: num(&["left", "l"])?,
        y0: num(&["top", "t"])?,
        x1: num(&["right", "r"])?,
        y1: num(&["bottom", "b"])?,
    })
}

// Strips `<a id=...></a>` anchors that some parsers prepend to chunk markdown.
fn strip_anchor(content: &str) -> String {
    let trimmed = content.trim_start();
    if trimmed.starts_with("<a id=") {
        if let Some(end) = trimmed.find("</a>") {
            return trimmed[end + 4..].trim().to_string();
        }
    }
    content.trim().to_string()
}

/// Converts a vendor parse record into a validated [`ParsedDocument`].
pub fn adapt_vendor_record(
    record: &Value,
    doc_id: &str,
    title: &str,
) -> Result<ParsedDocument, DocumentError> {
    let raw_chunks = record
        .get("chunks")
        .and_then(Value::as_array)
        .ok_or_else(|| adapter_err("record has no `chunks` array"))?;

    let mut chunks = Vec::with_capacity(raw_chunks.len());
    for (i, raw) in raw_chunks.iter().enumerate() {
        let chunk_id = field(raw, &["id", "chunk_id"])
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("chunk-{i}"));
        let kind = field(raw, &["type", "chunk_type"])
            .and_then(Value::as_str)
            .ok_or_else(|| adapter_err(format!("chunk {chunk_id} has no type")))?;
        let modality = vendor_modality(kind)
            .ok_or_else(|| adapter_err(format!("chunk {chunk_id} has unmapped type `{kind}`")))?;
        let content = field(raw, &["markdown", "text"])
            .and_then(Value::as_str)
            .map(strip_anchor)
            .unwrap_or_default();
        let grounding = grounding_of(raw)
            .ok_or_else(|| adapter_err(format!("chunk {chunk_id} has no grounding")))?;
        let page0 = grounding
            .get("page")
            .and_then(Value::as_u64)
            .ok_or_else(|| adapter_err(format!("chunk {chunk_id} grounding has no page")))?;
        let page = u32::try_from(page0 + 1)
            .map_err(|_| adapter_err(format!("chunk {chunk_id} page {page0} overflows")))?;
        if content.is_empty() && modality != Modality::Figure {
            continue;
        }
        chunks.push(Chunk {
            chunk_id,
            page,
            modality,
            content,
            bbox: bbox_of(grounding),
        });
    }

    let declared = record
        .get("metadata")
        .and_then(|m| m.get("page_count"))
        .and_then(Value::as_u64)
        .and_then(|n| u32::try_from(n).ok());
    let max_seen = chunks.iter().map(|c| c.page).max().unwrap_or(0);
    let n_pages = declared.unwrap_or(max_seen).max(max_seen);
    if n_pages == 0 {
        return Err(adapter_err("record contains no pages"));
    }
    // Stable sort keeps within-page reading order as emitted.
    chunks.sort_by_key(|c| c.page);

    let doc = ParsedDocument {
        doc_id: doc_id.to_string(),
        title: title.to_string(),
        n_pages,
        chunks,
        page_images: BTreeMap::new(),
        source_pdf: None,
    };
    doc.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn object_grounding_shape() {
        let rec = json!({
            "chunks": [
                {"id": "a", "type": "text", "markdown": "<a id='a'></a>\n\nIntro", "grounding": {"page": 0, "box": {"left": 0.1, "top": 0.1, "right": 0.9, "bottom": 0.2}}},
                {"id": "b", "type": "table", "markdown": "<table><tr><td>x</td></tr></table>", "grounding": {"page": 1}},
                {"id": "c", "type": "marginalia", "markdown": "p. 1", "grounding": {"page": 0}}
            ],
            "metadata": {"page_count": 3}
        });
        let d = adapt_vendor_record(&rec, "d", "T").unwrap();
        assert_eq!(d.n_pages, 3);
        let ids: Vec<_> = d.chunks.iter().map(|c| c.chunk_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert_eq!(d.chunks[0].content, "Intro");
        assert!(d.chunks[0].bbox.is_some());
    }

    #[test]
    fn list_grounding_shape() {
        let rec = json!({"chunks": [
            {"chunk_id": "x", "chunk_type": "figure", "text": "Kaplan-Meier curve", "grounding": [{"page": 2, "box": {"l": 0, "t": 0, "r": 1, "b": 1}}]}
        ]});
        let d = adapt_vendor_record(&rec, "d", "T").unwrap();
        assert_eq!(d.n_pages, 3);
        assert_eq!(d.chunks[0].modality, Modality::Figure);
    }

    #[test]
    fn unknown_type_is_explicit_failure() {
        let rec = json!({"chunks": [{"id": "x", "type": "hologram", "markdown": "?", "grounding": {"page": 0}}]});
        assert!(matches!(
            adapt_vendor_record(&rec, "d", "T"),
            Err(DocumentError::Adapter(_))
        ));
    }
}
