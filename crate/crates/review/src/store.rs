use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use linkpilot::candidates::Candidate;
use linkpilot::corpus::{load_corpus, Document};
use linkpilot::eval::{
    error_records, evaluate, latest_adjudications, parse_error_id, report, revised_metrics, run_id_for, Adjudication,
    Degree, ErrorRecord, ErrorType, Evaluation, Metrics, Report, Verdict,
};
use linkpilot::kb::EntityStore;
use linkpilot::llm::Cassette;
use linkpilot::pipeline::{read_artifact, MentionRecord, SelectionRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("unknown error {0:?}")]
    UnknownError(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot load {path}: {cause}")]
    Load { path: PathBuf, cause: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Files making up one reviewable run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSource {
    pub artifact: PathBuf,
    pub corpus: PathBuf,
    /// Supplies candidate descriptions in error details.
    #[serde(default)]
    pub entities: Option<PathBuf>,
    /// Supplies raw selection responses in error details.
    #[serde(default)]
    pub cassette: Option<PathBuf>,
}

/// Adjudication log location for a run artifact.
pub fn adjudication_log_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".adjudications.jsonl");
    artifact.with_file_name(name)
}

/// Reviewer input for one adjudication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationInput {
    pub verdict: Verdict,
    pub degree: Degree,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub reviewer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusFilter {
    Adjudicated,
    Unadjudicated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorFilter {
    pub error_type: Option<ErrorType>,
    pub status: Option<StatusFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorItem {
    pub error: ErrorRecord,
    pub adjudication: Option<Adjudication>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorPage {
    pub run_id: String,
    pub page: usize,
    pub page_size: usize,
    /// Matching errors across all pages.
    pub total: usize,
    pub items: Vec<ErrorItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub artifact: PathBuf,
    pub mentions: usize,
    pub total_errors: usize,
    pub adjudicated: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub metrics: Metrics,
    pub gold_coverage: f64,
    pub errors_by_type: BTreeMap<ErrorType, usize>,
    pub total_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevisedMetrics {
    pub run_id: String,
    pub metrics: Metrics,
    pub baseline: Metrics,
    pub adjudicated: usize,
    pub gt_incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDetail {
    pub error: ErrorRecord,
    pub adjudication: Option<Adjudication>,
    pub history: Vec<Adjudication>,
    pub doc_id: String,
    pub text: String,
    pub span: Span,
    pub candidates: Vec<Candidate>,
    pub selection: SelectionRecord,
    pub aux_text: Option<String>,
    /// `None` when the run made no selection call or no cassette is loaded.
    pub raw_response: Option<String>,
}

struct Log {
    history: Vec<Adjudication>,
    file: Option<File>,
}

struct Run {
    id: String,
    artifact_path: PathBuf,
    evaluation: Evaluation,
    report: Report,
    records: Vec<MentionRecord>,
    docs: HashMap<String, Document>,
    entities: Option<EntityStore>,
    cassette: Option<Cassette>,
    errors: Vec<ErrorRecord>,
    error_pos: HashMap<String, usize>,
    log: Mutex<Log>,
}

type Clock = Box<dyn Fn() -> String + Send + Sync>;

/// Runs, their errors, and the adjudication history of each run. Reads are
/// concurrent; writes to one run's log are serialized.
pub struct ReviewStore {
    runs: BTreeMap<String, Run>,
    clock: Clock,
}

impl Default for ReviewStore {
    fn default() -> Self {
        Self { runs: BTreeMap::new(), clock: Box::new(|| chrono::Utc::now().to_rfc3339()) }
    }
}

fn load_err(path: &Path, cause: impl ToString) -> ReviewError {
    ReviewError::Load { path: path.to_path_buf(), cause: cause.to_string() }
}

impl ReviewStore {
    pub fn open(sources: &[RunSource]) -> Result<Self, ReviewError> {
        let mut store = Self::default();
        for s in sources {
            store.add_run(s)?;
        }
        Ok(store)
    }

    /// Replace the timestamp source.
    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Load a run and replay its adjudication log. Returns the run id.
    pub fn add_run(&mut self, source: &RunSource) -> Result<String, ReviewError> {
        let bytes = std::fs::read(&source.artifact).map_err(|e| load_err(&source.artifact, e))?;
        let artifact = read_artifact(bytes.as_slice()).map_err(|e| load_err(&source.artifact, e))?;
        let corpus = load_corpus(&source.corpus).map_err(|e| load_err(&source.corpus, e))?;
        let id = run_id_for(&bytes);
        if self.runs.contains_key(&id) {
            return Err(ReviewError::Invalid(format!("run {id} is already loaded")));
        }
        let evaluation = evaluate(&artifact, &corpus, &id).map_err(|e| load_err(&source.artifact, e))?;
        let entities = match &source.entities {
            Some(p) => Some(EntityStore::load(p).map_err(|e| load_err(p, e))?),
            None => None,
        };
        let cassette = match &source.cassette {
            Some(p) => Some(Cassette::load(p).map_err(|e| load_err(p, e))?),
            None => None,
        };
        let errors = error_records(&evaluation);
        let error_pos = errors.iter().enumerate().map(|(i, e)| (e.error_id.clone(), i)).collect();

        let log_path = adjudication_log_path(&source.artifact);
        let mut history = Vec::new();
        if log_path.exists() {
            for (i, line) in BufReader::new(File::open(&log_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let a: Adjudication =
                    serde_json::from_str(&line).map_err(|e| load_err(&log_path, format!("line {}: {e}", i + 1)))?;
                history.push(a);
            }
        }
        // Validates every logged verdict against this run's errors.
        revised_metrics(&evaluation, &history).map_err(|e| load_err(&log_path, e))?;
        let file = OpenOptions::new().create(true).append(true).open(&log_path)?;

        let run = Run {
            id: id.clone(),
            artifact_path: source.artifact.clone(),
            report: report(&evaluation),
            evaluation,
            records: artifact.mentions,
            docs: corpus.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
            entities,
            cassette,
            errors,
            error_pos,
            log: Mutex::new(Log { history, file: Some(file) }),
        };
        self.runs.insert(id.clone(), run);
        Ok(id)
    }

    fn run(&self, run_id: &str) -> Result<&Run, ReviewError> {
        self.runs.get(run_id).ok_or_else(|| ReviewError::UnknownRun(run_id.to_string()))
    }

    fn locate(&self, error_id: &str) -> Result<(&Run, usize), ReviewError> {
        let unknown = || ReviewError::UnknownError(error_id.to_string());
        let (run_id, _) = parse_error_id(error_id).ok_or_else(unknown)?;
        let run = self.runs.get(run_id).ok_or_else(unknown)?;
        let pos = *run.error_pos.get(error_id).ok_or_else(unknown)?;
        Ok((run, pos))
    }

    fn history(run: &Run) -> Vec<Adjudication> {
        run.log.lock().expect("adjudication log poisoned").history.clone()
    }

    pub fn runs(&self) -> Vec<RunSummary> {
        self.runs
            .values()
            .map(|r| RunSummary {
                run_id: r.id.clone(),
                artifact: r.artifact_path.clone(),
                mentions: r.evaluation.mentions.len(),
                total_errors: r.errors.len(),
                adjudicated: latest_adjudications(&Self::history(r)).len(),
                metrics: r.report.metrics,
            })
            .collect()
    }

    pub fn metrics(&self, run_id: &str) -> Result<RunMetrics, ReviewError> {
        let r = self.run(run_id)?;
        Ok(RunMetrics {
            run_id: r.id.clone(),
            metrics: r.report.metrics,
            gold_coverage: r.report.gold_coverage,
            errors_by_type: r.report.errors_by_type.clone(),
            total_errors: r.report.total_errors,
        })
    }

    /// Recomputed from the full history on every call.
    pub fn revised_metrics(&self, run_id: &str) -> Result<RevisedMetrics, ReviewError> {
        let r = self.run(run_id)?;
        let history = Self::history(r);
        let metrics = revised_metrics(&r.evaluation, &history).map_err(|e| ReviewError::Invalid(e.to_string()))?;
        let latest = latest_adjudications(&history);
        Ok(RevisedMetrics {
            run_id: r.id.clone(),
            metrics,
            baseline: r.report.metrics,
            adjudicated: latest.len(),
            gt_incorrect: latest.values().filter(|a| a.verdict == Verdict::GtIncorrect).count(),
        })
    }

    /// Errors in corpus order, filtered, then paged (`page` is 0-based).
    pub fn list_errors(
        &self,
        run_id: &str,
        filter: ErrorFilter,
        page: usize,
        page_size: usize,
    ) -> Result<ErrorPage, ReviewError> {
        if page_size == 0 {
            return Err(ReviewError::Invalid("page_size must be at least 1".into()));
        }
        let r = self.run(run_id)?;
        let history = Self::history(r);
        let latest = latest_adjudications(&history);
        let matching: Vec<ErrorItem> = r
            .errors
            .iter()
            .filter(|e| filter.error_type.is_none_or(|t| e.error_type == t))
            .filter(|e| match filter.status {
                None => true,
                Some(StatusFilter::Adjudicated) => latest.contains_key(e.error_id.as_str()),
                Some(StatusFilter::Unadjudicated) => !latest.contains_key(e.error_id.as_str()),
            })
            .map(|e| ErrorItem { error: e.clone(), adjudication: latest.get(e.error_id.as_str()).map(|a| (*a).clone()) })
            .collect();
        let total = matching.len();
        let items = matching.into_iter().skip(page.saturating_mul(page_size)).take(page_size).collect();
        Ok(ErrorPage { run_id: r.id.clone(), page, page_size, total, items })
    }

    pub fn error_detail(&self, error_id: &str) -> Result<ErrorDetail, ReviewError> {
        let (r, pos) = self.locate(error_id)?;
        let error = r.errors[pos].clone();
        let (_, global) = parse_error_id(error_id).expect("located ids parse");
        let record = &r.records[global];
        let doc = &r.docs[&error.doc_id];
        let mention = &doc.mentions[error.mention_index];
        let mut candidates = record.candidate_set().candidates;
        if let Some(store) = &r.entities {
            for c in &mut candidates {
                c.description = store.description(&c.entity_id).unwrap_or_default().to_string();
            }
        }
        let raw_response = match (&r.cassette, &record.selection.raw_response_digest) {
            (Some(c), Some(d)) => c.record(d).map(|rec| rec.response.text),
            _ => None,
        };
        let history: Vec<Adjudication> =
            Self::history(r).into_iter().filter(|a| a.error_id == error_id).collect();
        Ok(ErrorDetail {
            adjudication: history.last().cloned(),
            history,
            doc_id: doc.doc_id.clone(),
            text: doc.text.clone(),
            span: Span { start: mention.start, end: mention.end, surface: mention.surface.clone() },
            candidates,
            selection: record.selection.clone(),
            aux_text: record.aux_text.clone(),
            raw_response,
            error,
        })
    }

    /// Validate, timestamp, persist and return the adjudication. It becomes
    /// the latest verdict for its error.
    pub fn record_adjudication(&self, error_id: &str, input: AdjudicationInput) -> Result<Adjudication, ReviewError> {
        let (r, _) = self.locate(error_id)?;
        let adj = Adjudication {
            error_id: error_id.to_string(),
            verdict: input.verdict,
            degree: input.degree,
            note: input.note,
            reviewer: input.reviewer,
            timestamp: (self.clock)(),
        };
        adj.validate().map_err(|e| ReviewError::Invalid(e.to_string()))?;
        let mut log = r.log.lock().expect("adjudication log poisoned");
        if let Some(file) = log.file.as_mut() {
            let mut line = serde_json::to_vec(&adj).expect("adjudication serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        log.history.push(adj.clone());
        Ok(adj)
    }
}
