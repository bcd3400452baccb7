//! Knowledge-base side of candidate generation: the entity store with
//! first-sentence descriptions and the hyperlink-derived alias table.

mod alias;
mod entities;
mod normalize;

pub use alias::{AliasEntry, AliasTable, LinkCount};
pub use entities::{Entity, EntityStore};
pub use normalize::normalize_surface;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("non-positive count {count} for ({surface:?}, {entity_id:?})")]
    NonPositiveCount { surface: String, entity_id: String, count: i64 },
    #[error("surface {0:?} is empty after normalization")]
    EmptySurface(String),
    #[error("invalid entity id {0:?}")]
    InvalidEntityId(String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("duplicate entity {0:?}")]
    DuplicateEntity(String),
    #[error("line {line}: {cause}")]
    Parse { line: usize, cause: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Entity ids travel through tab-separated files and prompt option lists.
pub(crate) fn check_entity_id(id: &str) -> Result<(), KbError> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(KbError::InvalidEntityId(id.to_string()));
    }
    Ok(())
}
