//! Per-mention orchestration of candidate generation, augmentation and
//! multiple-choice selection, and the corpus-level runner.

mod artifact;

pub use artifact::{
    artifact_bytes, load_artifact, read_artifact, write_artifact, AbortRecord, Artifact, ArtifactCandidate,
    ArtifactError, MentionRecord, OutcomeKind, RunHeader, SelectionRecord, ARTIFACT_FORMAT,
};

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::candidates::{merge_candidates, CandidateSet, DEFAULT_MAX_CANDIDATES};
use crate::corpus::{self, Document};
use crate::kb::{AliasTable, EntityStore};
use crate::llm::{request_digest, LlmClient, LlmError};
use crate::parallel;
use crate::prompts::{
    parse_selection, render_augmentation_prompt, render_selection_prompt, AuxiliaryContext, Outcome, ParseMethod,
    PromptSettings, Selection, TemplateSet, MAX_OPTIONS,
};
use crate::retrieval::{RetrievalError, RetrievalQuery, Retriever, CONTEXT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Ask the model to choose among the candidates.
    #[default]
    Llm,
    /// Answer with the highest-prior candidate and make no model calls.
    PriorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_candidates: usize,
    /// Prior entries fed into the merge; defaults to `max_candidates`.
    pub prior_k: Option<usize>,
    /// Retrieved entries fed into the merge; defaults to `max_candidates`.
    pub retrieval_k: Option<usize>,
    pub use_retrieval: bool,
    pub use_augmentation: bool,
    pub selection: SelectionMode,
    pub template_version: String,
    pub context_window: usize,
    pub prompt: PromptSettings,
    /// Worker count. Output does not depend on it, so it is left out of the
    /// artifact header.
    #[serde(skip_serializing)]
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_candidates: DEFAULT_MAX_CANDIDATES,
            prior_k: None,
            retrieval_k: None,
            use_retrieval: true,
            use_augmentation: true,
            selection: SelectionMode::Llm,
            template_version: crate::prompts::BUILTIN_VERSION.into(),
            context_window: CONTEXT_WINDOW,
            prompt: PromptSettings::default(),
            parallelism: 1,
        }
    }
}

impl PipelineConfig {
    /// The prior-frequency baseline: one candidate, no retrieval, no model.
    pub fn prior_only() -> Self {
        Self {
            max_candidates: 1,
            use_retrieval: false,
            use_augmentation: false,
            selection: SelectionMode::PriorOnly,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.max_candidates == 0 || self.max_candidates > MAX_OPTIONS {
            return bad(format!("max_candidates must be in 1..={MAX_OPTIONS}, got {}", self.max_candidates));
        }
        if self.prior_k == Some(0) || self.retrieval_k == Some(0) {
            return bad("prior_k and retrieval_k must be at least 1".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.prompt.temperature.is_nan() || self.prompt.temperature < 0.0 {
            return bad("temperature must be >= 0".into());
        }
        Ok(())
    }

    fn prior_k(&self) -> usize {
        self.prior_k.unwrap_or(self.max_candidates)
    }

    fn retrieval_k(&self) -> usize {
        self.retrieval_k.unwrap_or(self.max_candidates)
    }
}

/// Immutable lookup structures shared by all workers.
pub struct Stores {
    pub alias: AliasTable,
    pub entities: EntityStore,
    pub retriever: Option<Box<dyn Retriever>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub doc_id: String,
    pub mention_index: usize,
    pub candidates: CandidateSet,
    pub aux: Option<AuxiliaryContext>,
    pub selection: Selection,
    /// Cassette digest of the selection request, if one was sent.
    pub selection_digest: Option<String>,
    /// `None` is an abstention.
    pub predicted_entity: Option<String>,
    pub completions: u32,
    pub model_latency: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub mentions: usize,
    pub completions: u64,
    /// Mentions with an empty candidate set.
    pub skipped: usize,
    pub abstentions: usize,
    pub fallback_abstentions: usize,
    /// Sum of recorded model latencies; replays report the recorded values.
    pub model_latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub header: RunHeader,
    pub predictions: Vec<Prediction>,
    pub counters: Counters,
    pub aborted: Option<AbortRecord>,
    pub elapsed: Duration,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("doc {doc_id:?} mention {mention_index}: {source}")]
    Llm {
        doc_id: String,
        mention_index: usize,
        #[source]
        source: LlmError,
    },
    #[error("doc {doc_id:?} mention {mention_index}: {source}")]
    Retrieval {
        doc_id: String,
        mention_index: usize,
        #[source]
        source: RetrievalError,
    },
    #[error("doc {doc_id:?} has no mention {mention_index}")]
    NoSuchMention { doc_id: String, mention_index: usize },
    #[error("run aborted at doc {:?} mention {}: {}", .0.doc_id, .0.mention_index, .0.error)]
    Aborted(AbortRecord),
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs the three linking steps against shared stores and one client.
pub struct Linker<'a> {
    config: PipelineConfig,
    templates: TemplateSet,
    stores: &'a Stores,
    client: &'a LlmClient,
    aux_cache: Mutex<HashMap<(String, usize), AuxiliaryContext>>,
}

impl<'a> Linker<'a> {
    pub fn new(
        config: PipelineConfig,
        templates: TemplateSet,
        stores: &'a Stores,
        client: &'a LlmClient,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if config.use_retrieval && stores.retriever.is_none() {
            return Err(PipelineError::Config("retrieval enabled but no retriever configured".into()));
        }
        if templates.version != config.template_version {
            return Err(PipelineError::Config(format!(
                "templates are version {:?} but config asks for {:?}",
                templates.version, config.template_version
            )));
        }
        Ok(Self { config, templates, stores, client, aux_cache: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Step 1: prior entries merged with retrieval results.
    pub fn candidates(&self, doc: &Document, mention_index: usize) -> Result<CandidateSet, PipelineError> {
        let mention = self.mention(doc, mention_index)?;
        let cfg = &self.config;
        let prior = self.stores.alias.lookup(&mention.surface, cfg.prior_k());
        let retrieved = match (&self.stores.retriever, cfg.use_retrieval) {
            (Some(r), true) => {
                let q = RetrievalQuery::for_mention(doc, mention, cfg.context_window);
                r.retrieve(&q, cfg.retrieval_k()).map_err(|source| PipelineError::Retrieval {
                    doc_id: doc.doc_id.clone(),
                    mention_index,
                    source,
                })?
            }
            _ => Vec::new(),
        };
        Ok(merge_candidates(&prior, &retrieved, cfg.max_candidates, Some(&self.stores.entities)))
    }

    fn mention<'d>(&self, doc: &'d Document, idx: usize) -> Result<&'d corpus::Mention, PipelineError> {
        doc.mentions
            .get(idx)
            .ok_or_else(|| PipelineError::NoSuchMention { doc_id: doc.doc_id.clone(), mention_index: idx })
    }

    /// Step 2, computed at most once per mention within this linker.
    fn augment(
        &self,
        doc: &Document,
        mention_index: usize,
        calls: &mut u32,
        latency: &mut Duration,
    ) -> Result<AuxiliaryContext, PipelineError> {
        let key = (doc.doc_id.clone(), mention_index);
        if let Some(hit) = self.aux_cache.lock().expect("aux cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let mention = self.mention(doc, mention_index)?;
        let req = render_augmentation_prompt(&self.templates, &self.config.prompt, doc, mention);
        let resp = self.client.complete(&req).map_err(|source| PipelineError::Llm {
            doc_id: doc.doc_id.clone(),
            mention_index,
            source,
        })?;
        *calls += 1;
        *latency += resp.latency;
        let aux = AuxiliaryContext { doc_id: doc.doc_id.clone(), mention_index, text: resp.text };
        self.aux_cache.lock().expect("aux cache poisoned").insert(key, aux.clone());
        Ok(aux)
    }

    pub fn link_mention(&self, doc: &Document, mention_index: usize) -> Result<Prediction, PipelineError> {
        let mention = self.mention(doc, mention_index)?;
        let candidates = self.candidates(doc, mention_index)?;
        let mut prediction = Prediction {
            doc_id: doc.doc_id.clone(),
            mention_index,
            candidates,
            aux: None,
            selection: Selection { outcome: Outcome::Abstain, raw_response: String::new(), parse_method: ParseMethod::Skipped },
            selection_digest: None,
            predicted_entity: None,
            completions: 0,
            model_latency: Duration::ZERO,
        };
        if prediction.candidates.is_empty() {
            return Ok(prediction);
        }
        if self.config.selection == SelectionMode::PriorOnly {
            prediction.selection.outcome = Outcome::Chosen(0);
            prediction.selection.parse_method = ParseMethod::PriorOnly;
            prediction.predicted_entity = Some(prediction.candidates.candidates[0].entity_id.clone());
            return Ok(prediction);
        }

        let mut calls = 0;
        let mut latency = Duration::ZERO;
        let aux = if self.config.use_augmentation {
            Some(self.augment(doc, mention_index, &mut calls, &mut latency)?)
        } else {
            None
        };
        let req = render_selection_prompt(
            &self.templates,
            &self.config.prompt,
            doc,
            mention,
            aux.as_ref(),
            &prediction.candidates,
        );
        let resp = self.client.complete(&req).map_err(|source| PipelineError::Llm {
            doc_id: doc.doc_id.clone(),
            mention_index,
            source,
        })?;
        calls += 1;
        latency += resp.latency;

        let selection = parse_selection(&resp.text, &prediction.candidates);
        prediction.predicted_entity = selection
            .chosen()
            .map(|i| prediction.candidates.candidates[i].entity_id.clone());
        prediction.selection = selection;
        prediction.selection_digest = Some(request_digest(&req));
        prediction.aux = aux;
        prediction.completions = calls;
        prediction.model_latency = latency;
        Ok(prediction)
    }

    fn header(&self, corpus: &[Document]) -> RunHeader {
        let mut corpus_bytes = Vec::new();
        corpus::write_corpus(&mut corpus_bytes, corpus).expect("writing to a Vec cannot fail");
        let mut entity_bytes = Vec::new();
        self.stores.entities.write(&mut entity_bytes).expect("writing to a Vec cannot fail");
        let inputs = BTreeMap::from([
            ("corpus".to_string(), sha256_hex(&corpus_bytes)),
            ("alias_table".to_string(), sha256_hex(self.stores.alias.to_tsv().as_bytes())),
            ("entities".to_string(), sha256_hex(&entity_bytes)),
        ]);
        RunHeader {
            format: ARTIFACT_FORMAT.to_string(),
            config: self.config.clone(),
            template_version: self.templates.version.clone(),
            templates: self.templates.hashes().clone(),
            inputs,
        }
    }

    /// Link every mention of `corpus`. Predictions come back in corpus order
    /// whatever the parallelism. On the first failing mention (in corpus
    /// order) the result holds every earlier prediction plus an abort record.
    pub fn link_corpus(&self, corpus: &[Document]) -> RunResult {
        let started = Instant::now();
        let jobs: Vec<(usize, usize)> = corpus
            .iter()
            .enumerate()
            .flat_map(|(d, doc)| (0..doc.mentions.len()).map(move |m| (d, m)))
            .collect();
        let first_failure = AtomicUsize::new(usize::MAX);
        let results: Vec<Option<Result<Prediction, PipelineError>>> =
            parallel::map_indexed(&jobs, self.config.parallelism, |i, &(d, m)| {
                if i > first_failure.load(Ordering::SeqCst) {
                    return None;
                }
                let r = self.link_mention(&corpus[d], m);
                if r.is_err() {
                    first_failure.fetch_min(i, Ordering::SeqCst);
                }
                Some(r)
            });

        let mut predictions = Vec::with_capacity(jobs.len());
        let mut aborted = None;
        for r in results {
            match r {
                Some(Ok(p)) => predictions.push(p),
                Some(Err(e)) => {
                    let (doc_id, mention_index) = match &e {
                        PipelineError::Llm { doc_id, mention_index, .. }
                        | PipelineError::Retrieval { doc_id, mention_index, .. }
                        | PipelineError::NoSuchMention { doc_id, mention_index } => (doc_id.clone(), *mention_index),
                        _ => (String::new(), 0),
                    };
                    aborted = Some(AbortRecord { doc_id, mention_index, error: e.to_string() });
                    break;
                }
                None => break,
            }
        }
        let counters = Counters {
            mentions: corpus::mention_count(corpus),
            completions: predictions.iter().map(|p| u64::from(p.completions)).sum(),
            skipped: predictions.iter().filter(|p| p.selection.parse_method == ParseMethod::Skipped).count(),
            abstentions: predictions.iter().filter(|p| p.predicted_entity.is_none()).count(),
            fallback_abstentions: predictions
                .iter()
                .filter(|p| p.selection.parse_method == ParseMethod::FallbackAbstain)
                .count(),
            model_latency_ms: predictions.iter().map(|p| p.model_latency.as_millis() as u64).sum(),
        };
        RunResult { header: self.header(corpus), predictions, counters, aborted, elapsed: started.elapsed() }
    }
}

impl RunResult {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }

    /// `Err` carrying the abort record when the run stopped early.
    pub fn check(&self) -> Result<(), PipelineError> {
        match &self.aborted {
            Some(a) => Err(PipelineError::Aborted(a.clone())),
            None => Ok(()),
        }
    }
}
