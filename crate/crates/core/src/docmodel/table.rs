//! Table content normalization.
//!
//! Parser output encodes tables as pipe-delimited markdown, HTML `<table>`
//! fragments, or tab-separated rows. All three are read into a [`TableGrid`]
//! and written back out as a pipe table so layout survives in page text.

use std::sync::LazyLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TableGrid {
    pub rows: Vec<Vec<String>>,
}

static SEPARATOR_CELL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*:?-{3,}:?\s*$").expect("static regex"));
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").expect("static regex"));

impl TableGrid {
    /// Reads a table from any supported encoding.
    pub fn parse(content: &str) -> Option<TableGrid> {
        let trimmed = content.trim();
        if trimmed.is_empty() {
            return None;
        }
        if trimmed.to_ascii_lowercase().contains("<table") {
            return parse_html(trimmed);
        }
        if let Some(grid) = parse_pipe_table(trimmed) {
            return Some(grid);
        }
        parse_tsv(trimmed)
    }

    pub fn n_cols(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Pipe-table rendering; the first row is the header.
    pub fn to_markdown(&self) -> String {
        let width = self.n_cols();
        if width == 0 {
            return String::new();
        }
        let render_row = |row: &[String]| {
            let mut line = String::from("|");
            for i in 0..width {
                let cell = row.get(i).map(String::as_str).unwrap_or("");
                line.push(' ');
                line.push_str(&escape_cell(cell));
                line.push_str(" |");
            }
            line
        };
        let mut lines = Vec::with_capacity(self.rows.len() + 1);
        lines.push(render_row(&self.rows[0]));
        lines.push(format!("|{}", " --- |".repeat(width)));
        for row in &self.rows[1..] {
            lines.push(render_row(row));
        }
        lines.join("\n")
    }
}

fn escape_cell(cell: &str) -> String {
    cell.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace('|', "\\|")
}

fn split_pipe_row(line: &str) -> Vec<String> {
    let inner = line.trim();
    let inner = inner.strip_prefix('|').unwrap_or(inner);
    let inner = inner.strip_suffix('|').filter(|s| !s.ends_with('\\')).unwrap_or(inner);
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                current.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut current).trim().to_string()),
            _ => current.push(c),
        }
    }
    cells.push(current.trim().to_string());
    cells
}

/// Reads consecutive pipe-delimited lines, skipping `---` separator rows.
///
/// Returns `None` unless every non-blank line is a pipe row.
pub fn parse_pipe_table(text: &str) -> Option<TableGrid> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() || !lines.iter().all(|l| l.trim_start().starts_with('|')) {
        return None;
    }
    let rows: Vec<Vec<String>> = lines
        .iter()
        .map(|l| split_pipe_row(l))
        .filter(|cells| !cells.iter().all(|c| SEPARATOR_CELL.is_match(c)))
        .collect();
    (!rows.is_empty()).then_some(TableGrid { rows })
}

fn parse_tsv(text: &str) -> Option<TableGrid> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if !lines.iter().all(|l| l.contains('\t')) {
        return None;
    }
    let rows = lines
        .iter()
        .map(|l| l.split('\t').map(|c| c.trim().to_string()).collect())
        .collect();
    Some(TableGrid { rows })
}

fn decode_entities(s: &str) -> String {
    s.replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&")
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    haystack
        .get(from..)?
        .to_ascii_lowercase()
        .find(needle)
        .map(|i| i + from)
}

// Walks `<tr>` and `<td>/<th>` elements; nested markup inside cells is
// stripped. Span attributes are ignored.
fn parse_html(html: &str) -> Option<TableGrid> {
    let mut rows = Vec::new();
    let mut pos = 0;
    while let Some(tr) = find_ci(html, "<tr", pos) {
        let body_start = html[tr..].find('>').map(|i| tr + i + 1)?;
        let end = find_ci(html, "</tr", body_start).unwrap_or(html.len());
        let row_html = &html[body_start..end];
        let mut cells = Vec::new();
        let mut cpos = 0;
        loop {
            let td = find_ci(row_html, "<td", cpos);
            let th = find_ci(row_html, "<th", cpos);
            let start = match (td, th) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => break,
            };
            let Some(open_end) = row_html[start..].find('>').map(|i| start + i + 1) else {
                break;
            };
            let close = [find_ci(row_html, "</td", open_end), find_ci(row_html, "</th", open_end)]
                .into_iter()
                .flatten()
                .min()
                .unwrap_or(row_html.len());
            let raw = &row_html[open_end..close];
            let text = decode_entities(&TAG.replace_all(raw, " "));
            cells.push(text.split_whitespace().collect::<Vec<_>>().join(" "));
            cpos = close.max(open_end);
            if cpos >= row_html.len() {
                break;
            }
        }
        if !cells.is_empty() {
            rows.push(cells);
        }
        pos = end.max(body_start);
        if pos >= html.len() {
            break;
        }
    }
    (!rows.is_empty()).then_some(TableGrid { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[&str]]) -> TableGrid {
        TableGrid {
            rows: rows
                .iter()
                .map(|r| r.iter().map(|c| c.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn tsv_round_trip() {
        let g = TableGrid::parse("a\tb\nc\td").unwrap();
        assert_eq!(g, grid(&[&["a", "b"], &["c", "d"]]));
        let md = g.to_markdown();
        assert_eq!(md, "| a | b |\n| --- | --- |\n| c | d |");
        assert_eq!(parse_pipe_table(&md).unwrap(), g);
    }

    #[test]
    fn html_table() {
        let html = "<table><tr><th>Arm</th><th>HR</th></tr>\
                    <tr><td>ADT + <b>drug</b></td><td>0.62 &amp; up</td></tr></table>";
        let g = TableGrid::parse(html).unwrap();
        assert_eq!(g, grid(&[&["Arm", "HR"], &["ADT + drug", "0.62 & up"]]));
    }

    #[test]
    fn escaped_pipes_survive() {
        let g = grid(&[&["a|b", "c"], &["d", ""]]);
        assert_eq!(parse_pipe_table(&g.to_markdown()).unwrap(), g);
    }

    #[test]
    fn plain_text_is_not_a_table() {
        assert!(TableGrid::parse("just a sentence").is_none());
        assert!(TableGrid::parse("").is_none());
    }
}
