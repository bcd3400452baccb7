use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_query, sort_scored, RetrievalError, RetrievalQuery, Retriever, ScoredEntity};

#[derive(Serialize)]
struct WireRequest<'a> {
    surface: &'a str,
    left_context: &'a str,
    right_context: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct WireResponse {
    results: Vec<ScoredEntity>,
}

/// Retriever backed by a remote service speaking
/// `{surface, left_context, right_context, k}` → `{results: [{entity_id, score}]}`.
pub struct HttpRetriever {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpRetriever {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrievalError::Unavailable(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), client })
    }
}

impl Retriever for HttpRetriever {
    fn retrieve(&self, query: &RetrievalQuery, k: usize) -> Result<Vec<ScoredEntity>, RetrievalError> {
        check_query(query, k)?;
        let body = WireRequest {
            surface: &query.surface,
            left_context: &query.left_context,
            right_context: &query.right_context,
            k,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| RetrievalError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(RetrievalError::Unavailable(format!("{} returned {status}", self.endpoint)));
        }
        let wire: WireResponse = resp.json().map_err(|e| RetrievalError::InvalidResponse(e.to_string()))?;
        let mut results = wire.results;
        if let Some(bad) = results.iter().find(|r| !r.score.is_finite() || r.entity_id.is_empty()) {
            return Err(RetrievalError::InvalidResponse(format!("bad result {bad:?}")));
        }
        sort_scored(&mut results);
        results.dedup_by(|a, b| a.entity_id == b.entity_id);
        results.truncate(k);
        Ok(results)
    }
}
