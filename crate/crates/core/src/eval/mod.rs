//! In-KB micro-F1, gold coverage, the four-way error taxonomy and metrics
//! revised by human adjudication.

mod report;

pub use report::{
    error_records, evaluate, read_error_file, read_report, report, report_bytes, run_id_for, write_error_file,
    DocumentReport, Evaluation, MentionEval, Report, REPORT_FORMAT,
};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::candidates::CandidateSet;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("prediction {predicted:?} is not among the candidates")]
    NotACandidate { predicted: String },
    #[error("adjudication for {error_id:?} does not reference an error of run {run_id:?}")]
    UnknownError { error_id: String, run_id: String },
    #[error("invalid adjudication: {0}")]
    InvalidAdjudication(String),
    #[error("artifact does not match corpus: {0}")]
    Mismatch(String),
}

fn canonical(id: &str) -> String {
    id.nfc().map(|c| if c == '_' { ' ' } else { c }).collect()
}

/// String-level entity identity: NFC plus underscore/space unification. No
/// case folding and no redirect resolution.
pub fn entity_equal(a: &str, b: &str) -> bool {
    a == b || canonical(a) == canonical(b)
}

/// Whether `gold` is one of the candidates under [`entity_equal`].
pub fn gold_in(candidates: &CandidateSet, gold: &str) -> bool {
    candidates.ids().any(|id| entity_equal(id, gold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total: usize,
    /// Non-abstaining predictions.
    pub predicted: usize,
    pub correct: usize,
}

impl Metrics {
    /// Precision is 1.0 when nothing was predicted; f1 is 0 when p + r = 0.
    pub fn from_counts(total: usize, predicted: usize, correct: usize) -> Self {
        assert!(correct <= predicted && predicted <= total, "inconsistent counts {correct}/{predicted}/{total}");
        let precision = if predicted == 0 { 1.0 } else { correct as f64 / predicted as f64 };
        let recall = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1, total, predicted, correct }
    }
}

fn check_lengths(predictions: usize, golds: usize) -> Result<(), EvalError> {
    if predictions == golds {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch { predictions, golds })
    }
}

/// Pooled per-mention precision, recall and F1. `None` is an abstention.
pub fn micro_f1<P: AsRef<str>, G: AsRef<str>>(predictions: &[Option<P>], golds: &[G]) -> Result<Metrics, EvalError> {
    check_lengths(predictions.len(), golds.len())?;
    let mut predicted = 0;
    let mut correct = 0;
    for (p, g) in predictions.iter().zip(golds) {
        if let Some(p) = p {
            predicted += 1;
            if entity_equal(p.as_ref(), g.as_ref()) {
                correct += 1;
            }
        }
    }
    Ok(Metrics::from_counts(golds.len(), predicted, correct))
}

/// Fraction of mentions whose gold entity is among their candidates; 0 for
/// an empty input.
pub fn gold_coverage<G: AsRef<str>>(candidate_sets: &[CandidateSet], golds: &[G]) -> Result<f64, EvalError> {
    check_lengths(candidate_sets.len(), golds.len())?;
    if golds.is_empty() {
        return Ok(0.0);
    }
    let covered = candidate_sets.iter().zip(golds).filter(|(c, g)| gold_in(c, g.as_ref())).count();
    Ok(covered as f64 / golds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorType {
    /// Picked a wrong candidate while the gold was available.
    AlternativeEntity,
    /// Picked a candidate while the gold was not available.
    FailToReject,
    /// Abstained while the gold was available.
    MissGt,
    /// Abstained and the gold was not available.
    MissCandidate,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] =
        [ErrorType::AlternativeEntity, ErrorType::FailToReject, ErrorType::MissGt, ErrorType::MissCandidate];

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::AlternativeEntity => "ALTERNATIVE_ENTITY",
            ErrorType::FailToReject => "FAIL_TO_REJECT",
            ErrorType::MissGt => "MISS_GT",
            ErrorType::MissCandidate => "MISS_CANDIDATE",
        }
    }
}

impl std::str::FromStr for ErrorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown error type {s:?}"))
    }
}

/// `Ok(None)` when the prediction is correct.
pub fn classify_error(
    predicted: Option<&str>,
    gold: &str,
    candidates: &CandidateSet,
) -> Result<Option<ErrorType>, EvalError> {
    if let Some(p) = predicted {
        if !candidates.ids().any(|id| id == p) {
            return Err(EvalError::NotACandidate { predicted: p.to_string() });
        }
        if entity_equal(p, gold) {
            return Ok(None);
        }
    }
    let covered = gold_in(candidates, gold);
    Ok(Some(match (predicted.is_some(), covered) {
        (true, true) => ErrorType::AlternativeEntity,
        (true, false) => ErrorType::FailToReject,
        (false, true) => ErrorType::MissGt,
        (false, false) => ErrorType::MissCandidate,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error_id: String,
    pub run_id: String,
    pub doc_id: String,
    pub mention_index: usize,
    pub error_type: ErrorType,
    /// `None` is an abstention.
    pub predicted_entity: Option<String>,
    pub gold_entity: String,
    pub gold_in_candidates: bool,
}

/// `{run_id}.{position of the mention in corpus order}`.
pub fn error_id(run_id: &str, global_index: usize) -> String {
    format!("{run_id}.{global_index}")
}

/// Inverse of [`error_id`].
pub fn parse_error_id(id: &str) -> Option<(&str, usize)> {
    let (run, idx) = id.rsplit_once('.')?;
    Some((run, idx.parse().ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    GtIncorrect,
    ModelWrongStep2,
    ModelWrongStep3,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Degree {
    None,
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub error_id: String,
    pub verdict: Verdict,
    pub degree: Degree,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub reviewer: String,
    /// RFC 3339.
    pub timestamp: String,
}

impl Adjudication {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.verdict == Verdict::GtIncorrect && self.degree != Degree::None {
            return Err(EvalError::InvalidAdjudication(format!(
                "GT_INCORRECT requires degree NONE, got {:?}",
                self.degree
            )));
        }
        Ok(())
    }
}

/// The last adjudication per error id, in input order.
pub fn latest_adjudications(history: &[Adjudication]) -> BTreeMap<&str, &Adjudication> {
    let mut latest = BTreeMap::new();
    for a in history {
        latest.insert(a.error_id.as_str(), a);
    }
    latest
}

/// Metrics with every error whose latest verdict is GT_INCORRECT counted as a
/// correct prediction. An adjudicated abstention also counts as predicted.
pub fn revised_metrics(eval: &Evaluation, history: &[Adjudication]) -> Result<Metrics, EvalError> {
    let errors: HashMap<String, &MentionEval> = eval
        .mentions
        .iter()
        .enumerate()
        .filter(|(_, m)| m.error.is_some())
        .map(|(i, m)| (error_id(&eval.run_id, i), m))
        .collect();
    let base = eval.metrics();
    let (mut predicted, mut correct) = (base.predicted, base.correct);
    for (id, adj) in latest_adjudications(history) {
        adj.validate()?;
        let m = errors
            .get(id)
            .ok_or_else(|| EvalError::UnknownError { error_id: id.to_string(), run_id: eval.run_id.clone() })?;
        if adj.verdict == Verdict::GtIncorrect {
            correct += 1;
            if m.predicted.is_none() {
                predicted += 1;
            }
        }
    }
    Ok(Metrics::from_counts(base.total, predicted, correct))
}
