//! Retrieval-side candidate generation. The [`Retriever`] trait is the seam
//! for an external dense retriever; [`LexicalIndex`] is the in-process
//! reference implementation used by tests and offline runs.

mod http;
mod lexical;

pub use http::HttpRetriever;
pub use lexical::{trigram_counts, LexicalIndex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{char_slice, Document, Mention};

/// Scalar values of context kept on each side of a mention.
pub const CONTEXT_WINDOW: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub surface: String,
    pub left_context: String,
    pub right_context: String,
}

impl RetrievalQuery {
    pub fn new(surface: impl Into<String>) -> Self {
        Self { surface: surface.into(), left_context: String::new(), right_context: String::new() }
    }

    /// Query for `mention` with up to `window` scalar values of context per side.
    pub fn for_mention(doc: &Document, mention: &Mention, window: usize) -> Self {
        let len = doc.char_len();
        let left_start = mention.start.saturating_sub(window);
        let right_end = (mention.end + window).min(len);
        Self {
            surface: mention.surface.clone(),
            left_context: char_slice(&doc.text, left_start, mention.start).unwrap_or_default().to_string(),
            right_context: char_slice(&doc.text, mention.end, right_end).unwrap_or_default().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub entity_id: String,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("retriever unavailable: {0}")]
    Unavailable(String),
    #[error("invalid retriever response: {0}")]
    InvalidResponse(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

pub trait Retriever: Send + Sync {
    /// At most `k` results, score descending then entity id ascending.
    fn retrieve(&self, query: &RetrievalQuery, k: usize) -> Result<Vec<ScoredEntity>, RetrievalError>;
}

/// Canonical result order: score descending, ties by entity id.
pub fn sort_scored(results: &mut [ScoredEntity]) {
    results.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entity_id.cmp(&b.entity_id)));
}

fn check_query(query: &RetrievalQuery, k: usize) -> Result<(), RetrievalError> {
    if query.surface.is_empty() {
        return Err(RetrievalError::InvalidQuery("empty surface".into()));
    }
    if k == 0 {
        return Err(RetrievalError::InvalidQuery("k must be at least 1".into()));
    }
    Ok(())
}
