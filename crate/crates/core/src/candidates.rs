//! Merge of prior-derived and retrieval-derived candidates into the capped
//! candidate set offered to the selection prompt.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::kb::{AliasEntry, EntityStore};
use crate::retrieval::ScoredEntity;

pub const DEFAULT_MAX_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Prior,
    Retrieval,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity_id: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl Candidate {
    /// Provenance agrees with the scores that are present.
    pub fn is_consistent(&self) -> bool {
        match self.provenance {
            Provenance::Prior => self.prior.is_some() && self.retrieval_score.is_none(),
            Provenance::Retrieval => self.prior.is_none() && self.retrieval_score.is_some(),
            Provenance::Both => self.prior.is_some() && self.retrieval_score.is_some(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.entity_id.as_str())
    }

    pub fn get(&self, idx: usize) -> Option<&Candidate> {
        self.candidates.get(idx)
    }
}

/// Prior candidates first (prior descending), then retrieval-only candidates
/// (score descending). An entity found by both keeps its prior position and
/// carries both scores. The result is truncated to `max_candidates`.
/// Descriptions come from `store` when given; unknown ids get an empty one.
pub fn merge_candidates(
    prior: &[AliasEntry],
    retrieved: &[ScoredEntity],
    max_candidates: usize,
    store: Option<&EntityStore>,
) -> CandidateSet {
    let max_candidates = max_candidates.max(1);
    let mut prior_sorted: Vec<&AliasEntry> = prior.iter().collect();
    prior_sorted.sort_by(|a, b| b.prior.total_cmp(&a.prior).then_with(|| a.entity_id.cmp(&b.entity_id)));
    let mut retrieved_sorted: Vec<&ScoredEntity> = retrieved.iter().collect();
    retrieved_sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entity_id.cmp(&b.entity_id)));

    let mut out: Vec<Candidate> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for p in prior_sorted {
        if pos.contains_key(p.entity_id.as_str()) {
            continue;
        }
        pos.insert(&p.entity_id, out.len());
        out.push(Candidate {
            entity_id: p.entity_id.clone(),
            provenance: Provenance::Prior,
            prior: Some(p.prior),
            retrieval_score: None,
            description: String::new(),
        });
    }
    for r in retrieved_sorted {
        match pos.get(r.entity_id.as_str()) {
            Some(&i) => {
                let c = &mut out[i];
                if c.retrieval_score.is_none() {
                    c.retrieval_score = Some(r.score);
                    if c.provenance == Provenance::Prior {
                        c.provenance = Provenance::Both;
                    }
                }
            }
            None => {
                pos.insert(&r.entity_id, out.len());
                out.push(Candidate {
                    entity_id: r.entity_id.clone(),
                    provenance: Provenance::Retrieval,
                    prior: None,
                    retrieval_score: Some(r.score),
                    description: String::new(),
                });
            }
        }
    }
    out.truncate(max_candidates);
    if let Some(store) = store {
        for c in &mut out {
            c.description = store.description(&c.entity_id).unwrap_or_default().to_string();
        }
    }
    CandidateSet { candidates: out }
}
