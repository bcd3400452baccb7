use std::collections::{BTreeMap, HashMap};

use super::{check_query, sort_scored, RetrievalError, RetrievalQuery, Retriever, ScoredEntity};
use crate::kb::{Entity, EntityStore};
use crate::parallel;

/// Character trigram counts of `text`, lowercased, whitespace collapsed and
/// padded with one space on each side.
pub fn trigram_counts(text: &str) -> BTreeMap<String, u32> {
    let norm = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    let padded: Vec<char> = format!(" {norm} ").chars().collect();
    let mut out = BTreeMap::new();
    for w in padded.windows(3) {
        *out.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    out
}

pub(crate) fn entity_text(e: &Entity) -> String {
    format!("{} {}", e.title(), e.description)
}

pub(crate) fn query_text(q: &RetrievalQuery) -> String {
    format!("{} {} {}", q.surface, q.left_context, q.right_context)
}

/// Inverted index over entity trigram vectors; scores are cosine similarity
/// of trigram count vectors.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    ids: Vec<String>,
    norms_sq: Vec<u64>,
    vocab: HashMap<String, u32>,
    postings: Vec<Vec<(u32, u32)>>,
    min_score: f64,
}

impl LexicalIndex {
    pub fn build(entities: &EntityStore) -> Result<Self, RetrievalError> {
        Self::from_entities(entities.iter().collect())
    }

    pub fn from_entities(mut entities: Vec<Entity>) -> Result<Self, RetrievalError> {
        if entities.is_empty() {
            return Err(RetrievalError::InvalidQuery("cannot index an empty entity list".into()));
        }
        entities.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        entities.dedup_by(|a, b| a.entity_id == b.entity_id);
        let vectors = parallel::map(&entities, 0, |e| trigram_counts(&entity_text(e)));

        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut postings: Vec<Vec<(u32, u32)>> = Vec::new();
        let mut norms_sq = Vec::with_capacity(entities.len());
        for (idx, vec) in vectors.into_iter().enumerate() {
            let mut sq = 0u64;
            for (gram, count) in vec {
                sq += u64::from(count) * u64::from(count);
                let next = vocab.len() as u32;
                let gid = *vocab.entry(gram).or_insert(next);
                if gid as usize == postings.len() {
                    postings.push(Vec::new());
                }
                postings[gid as usize].push((idx as u32, count));
            }
            norms_sq.push(sq);
        }
        Ok(Self {
            ids: entities.into_iter().map(|e| e.entity_id).collect(),
            norms_sq,
            vocab,
            postings,
            min_score: 0.0,
        })
    }

    /// Results must score strictly above this value. Defaults to 0.
    pub fn with_min_score(mut self, min_score: f64) -> Self {
        self.min_score = min_score;
        self
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn score_all(&self, query: &RetrievalQuery, k: usize) -> Vec<ScoredEntity> {
        let q = trigram_counts(&query_text(query));
        let q_sq: u64 = q.values().map(|&c| u64::from(c) * u64::from(c)).sum();
        let mut dots: HashMap<u32, u64> = HashMap::new();
        for (gram, qc) in &q {
            if let Some(&gid) = self.vocab.get(gram) {
                for &(idx, ec) in &self.postings[gid as usize] {
                    *dots.entry(idx).or_insert(0) += u64::from(*qc) * u64::from(ec);
                }
            }
        }
        let mut out: Vec<ScoredEntity> = dots
            .into_iter()
            .map(|(idx, dot)| ScoredEntity {
                entity_id: self.ids[idx as usize].clone(),
                score: cosine(dot, q_sq, self.norms_sq[idx as usize]),
            })
            .filter(|s| s.score > self.min_score)
            .collect();
        sort_scored(&mut out);
        out.truncate(k);
        out
    }

    /// Answer a batch of queries, in parallel when the `parallel` feature is on.
    pub fn retrieve_many(
        &self,
        queries: &[RetrievalQuery],
        k: usize,
        threads: usize,
    ) -> Result<Vec<Vec<ScoredEntity>>, RetrievalError> {
        for q in queries {
            check_query(q, k)?;
        }
        Ok(parallel::map(queries, threads, |q| self.score_all(q, k)))
    }
}

/// `dot / sqrt(|q|^2 * |e|^2)`, computed from exact integer sums.
pub(crate) fn cosine(dot: u64, q_sq: u64, e_sq: u64) -> f64 {
    if dot == 0 {
        return 0.0;
    }
    dot as f64 / ((q_sq as u128 * e_sq as u128) as f64).sqrt()
}

impl Retriever for LexicalIndex {
    fn retrieve(&self, query: &RetrievalQuery, k: usize) -> Result<Vec<ScoredEntity>, RetrievalError> {
        check_query(query, k)?;
        Ok(self.score_all(query, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> LexicalIndex {
        LexicalIndex::from_entities(vec![
            Entity::new("Apple_Inc.", "American technology company."),
            Entity::new("Tim_Cook_(footballer)", "English footballer."),
            Entity::new("Tim_Cook", ""),
        ])
        .unwrap()
    }

    #[test]
    fn trigrams_are_padded_and_lowercased() {
        let t = trigram_counts("Ab  c");
        let grams: Vec<_> = t.keys().map(String::as_str).collect();
        assert_eq!(grams, vec![" ab", " c ", "ab ", "b c"]);
        assert_eq!(trigram_counts("aaaa").get("aaa"), Some(&2));
    }

    #[test]
    fn tim_cook_ranks_first() {
        // Tim_Cook's indexed text normalizes to "tim cook", the same string as
        // the query, so the cosine is exactly 1.
        let r = three().retrieve(&RetrievalQuery::new("Tim Cook"), 3).unwrap();
        assert_eq!(r[0].entity_id, "Tim_Cook");
        assert!((r[0].score - 1.0).abs() < 1e-12);
        assert_eq!(r[1].entity_id, "Tim_Cook_(footballer)");
        assert!(r[1].score < 1.0);
    }

    #[test]
    fn nothing_above_threshold_is_empty() {
        let idx = three();
        assert!(idx.retrieve(&RetrievalQuery::new("zzzz"), 3).unwrap().is_empty());
        let strict = three().with_min_score(0.99);
        assert_eq!(strict.retrieve(&RetrievalQuery::new("Tim Cook"), 3).unwrap().len(), 1);
    }

    #[test]
    fn smaller_k_is_a_prefix() {
        let idx = three();
        let q = RetrievalQuery::new("Tim Cook Apple");
        let k3 = idx.retrieve(&q, 3).unwrap();
        let k1 = idx.retrieve(&q, 1).unwrap();
        assert_eq!(k1[..], k3[..1]);
    }

    #[test]
    fn identical_text_ties_break_by_id() {
        let idx = LexicalIndex::from_entities(vec![Entity::new("B", "same words"), Entity::new("A", "same words")])
            .unwrap();
        let r = idx.retrieve(&RetrievalQuery::new("same"), 2).unwrap();
        assert_eq!(r[0].score, r[1].score);
        assert_eq!((r[0].entity_id.as_str(), r[1].entity_id.as_str()), ("A", "B"));
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(LexicalIndex::from_entities(vec![]).is_err());
        assert!(three().retrieve(&RetrievalQuery::new(""), 1).is_err());
        assert!(three().retrieve(&RetrievalQuery::new("x"), 0).is_err());
    }
}
