//! Document and mention data model plus the newline-delimited corpus format.
//!
//! Every dataset is converted into one JSON object per line:
//!
//! ```text
//! {"doc_id":"d1","text":"Tim Cook is the CEO of Apple.","mentions":[{"start":0,"end":8,"surface":"Tim Cook","gold_entity":"Tim_Cook"}]}
//! ```
//!
//! Offsets count Unicode scalar values, not bytes.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub gold_entity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Length of the text in scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// The text covered by `[start, end)` in scalar-value offsets.
    pub fn span(&self, start: usize, end: usize) -> Option<&str> {
        char_slice(&self.text, start, end)
    }
}

/// Slice `text` by scalar-value offsets. `None` when the range is out of bounds or inverted.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let lo = char_to_byte(text, start)?;
    let hi = char_to_byte(text, end)?;
    Some(&text[lo..hi])
}

/// Byte offset of the `idx`-th scalar value; `idx == len` maps to `text.len()`.
pub fn char_to_byte(text: &str, idx: usize) -> Option<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .nth(idx)
}

/// Total number of mentions, the denominator of micro-averaged metrics.
pub fn mention_count(docs: &[Document]) -> usize {
    docs.iter().map(|d| d.mentions.len()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    EmptyDocId,
    DuplicateDocId,
    EmptySpan,
    SpanOutOfBounds,
    SurfaceMismatch,
    EmptyGold,
    UnsortedMentions,
    DuplicateSpan,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::EmptyDocId => "empty-doc-id",
            Rule::DuplicateDocId => "duplicate-doc-id",
            Rule::EmptySpan => "empty-span",
            Rule::SpanOutOfBounds => "span-out-of-bounds",
            Rule::SurfaceMismatch => "surface-mismatch",
            Rule::EmptyGold => "empty-gold",
            Rule::UnsortedMentions => "unsorted-mentions",
            Rule::DuplicateSpan => "duplicate-span",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Position of the document in the corpus.
    pub doc_index: usize,
    pub doc_id: String,
    /// `None` for document-level rules.
    pub mention_index: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.mention_index {
            Some(i) => write!(
                f,
                "{} (doc {:?}, mention {}): {}",
                self.rule.name(),
                self.doc_id,
                i,
                self.detail
            ),
            None => write!(f, "{} (doc {:?}): {}", self.rule.name(), self.doc_id, self.detail),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {cause}")]
    Malformed { line: usize, cause: String },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Check every document and mention invariant; violations are returned as data.
pub fn validate_corpus(docs: &[Document]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (doc_index, doc) in docs.iter().enumerate() {
        let v = |mention_index, rule, detail: String| Violation {
            doc_index,
            doc_id: doc.doc_id.clone(),
            mention_index,
            rule,
            detail,
        };
        if doc.doc_id.is_empty() {
            out.push(v(None, Rule::EmptyDocId, "doc_id is empty".into()));
        } else if !seen.insert(doc.doc_id.as_str()) {
            out.push(v(None, Rule::DuplicateDocId, "doc_id already used".into()));
        }
        let len = doc.char_len();
        let mut prev: Option<(usize, usize)> = None;
        for (i, m) in doc.mentions.iter().enumerate() {
            if m.start >= m.end {
                out.push(v(Some(i), Rule::EmptySpan, format!("span [{}, {})", m.start, m.end)));
            } else if m.end > len {
                out.push(v(
                    Some(i),
                    Rule::SpanOutOfBounds,
                    format!("span [{}, {}) exceeds text length {}", m.start, m.end, len),
                ));
            } else {
                let actual = doc.span(m.start, m.end).unwrap_or_default();
                if actual != m.surface {
                    out.push(v(
                        Some(i),
                        Rule::SurfaceMismatch,
                        format!("surface {:?} but text has {:?}", m.surface, actual),
                    ));
                }
            }
            if m.gold_entity.is_empty() {
                out.push(v(Some(i), Rule::EmptyGold, "gold_entity is empty".into()));
            }
            if let Some((ps, pe)) = prev {
                if (ps, pe) == (m.start, m.end) {
                    out.push(v(Some(i), Rule::DuplicateSpan, format!("span [{}, {}) repeated", ps, pe)));
                } else if m.start < ps {
                    out.push(v(
                        Some(i),
                        Rule::UnsortedMentions,
                        format!("start {} precedes previous start {}", m.start, ps),
                    ));
                }
            }
            prev = Some((m.start, m.end));
        }
    }
    out
}

/// Parse a newline-delimited corpus. Either every record loads or the first
/// failure is reported with its 1-based line number.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            cause: e.to_string(),
        })?;
        docs.push(doc);
        lines.push(i + 1);
    }
    if let Some(violation) = validate_corpus(&docs).into_iter().next() {
        return Err(CorpusError::Invalid {
            line: lines[violation.doc_index],
            violation,
        });
    }
    Ok(docs)
}

pub fn parse_corpus_str(s: &str) -> Result<Vec<Document>, CorpusError> {
    parse_corpus(s.as_bytes())
}

pub fn load_corpus(path: &std::path::Path) -> Result<Vec<Document>, CorpusError> {
    let f = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(f))
}

pub fn write_corpus<W: Write>(mut w: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
