//! Joining a run artifact with its corpus, and the report documents built
//! from the result.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{classify_error, error_id, gold_in, EvalError, ErrorRecord, ErrorType, Metrics};
use crate::corpus::Document;
use crate::pipeline::{Artifact, Counters, PipelineConfig};

pub const REPORT_FORMAT: &str = "linkpilot-report/1";

/// Content-derived run id: the first 16 hex digits of the artifact's SHA-256.
pub fn run_id_for(artifact_bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(artifact_bytes))[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionEval {
    pub doc_id: String,
    pub mention_index: usize,
    pub predicted: Option<String>,
    pub gold: String,
    pub covered: bool,
    pub error: Option<ErrorType>,
}

/// One evaluated run: a row per corpus mention, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub run_id: String,
    pub config: PipelineConfig,
    pub counters: Option<Counters>,
    pub mentions: Vec<MentionEval>,
}

impl Evaluation {
    pub fn metrics(&self) -> Metrics {
        let predicted = self.mentions.iter().filter(|m| m.predicted.is_some()).count();
        let correct = self.mentions.iter().filter(|m| m.predicted.is_some() && m.error.is_none()).count();
        Metrics::from_counts(self.mentions.len(), predicted, correct)
    }

    pub fn gold_coverage(&self) -> f64 {
        if self.mentions.is_empty() {
            return 0.0;
        }
        self.mentions.iter().filter(|m| m.covered).count() as f64 / self.mentions.len() as f64
    }
}

/// Pair each artifact record with its corpus mention. The artifact must be
/// complete and in corpus order.
pub fn evaluate(artifact: &Artifact, corpus: &[Document], run_id: &str) -> Result<Evaluation, EvalError> {
    if let Some(a) = &artifact.aborted {
        return Err(EvalError::Mismatch(format!(
            "run aborted at doc {:?} mention {}: {}",
            a.doc_id, a.mention_index, a.error
        )));
    }
    let golds: Vec<(&str, usize, &str)> = corpus
        .iter()
        .flat_map(|d| d.mentions.iter().enumerate().map(move |(i, m)| (d.doc_id.as_str(), i, m.gold_entity.as_str())))
        .collect();
    if golds.len() != artifact.mentions.len() {
        return Err(EvalError::Mismatch(format!(
            "{} mention records for {} corpus mentions",
            artifact.mentions.len(),
            golds.len()
        )));
    }
    let mut mentions = Vec::with_capacity(golds.len());
    for (rec, &(doc_id, idx, gold)) in artifact.mentions.iter().zip(&golds) {
        if rec.doc_id != doc_id || rec.mention_index != idx {
            return Err(EvalError::Mismatch(format!(
                "record ({:?}, {}) where corpus has ({doc_id:?}, {idx})",
                rec.doc_id, rec.mention_index
            )));
        }
        let cands = rec.candidate_set();
        mentions.push(MentionEval {
            doc_id: doc_id.to_string(),
            mention_index: idx,
            predicted: rec.predicted_entity.clone(),
            gold: gold.to_string(),
            covered: gold_in(&cands, gold),
            error: classify_error(rec.predicted_entity.as_deref(), gold, &cands)?,
        });
    }
    Ok(Evaluation {
        run_id: run_id.to_string(),
        config: artifact.header.config.clone(),
        counters: artifact.footer.clone(),
        mentions,
    })
}

/// Error records in corpus order.
pub fn error_records(eval: &Evaluation) -> Vec<ErrorRecord> {
    eval.mentions
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            m.error.map(|error_type| ErrorRecord {
                error_id: error_id(&eval.run_id, i),
                run_id: eval.run_id.clone(),
                doc_id: m.doc_id.clone(),
                mention_index: m.mention_index,
                error_type,
                predicted_entity: m.predicted.clone(),
                gold_entity: m.gold.clone(),
                gold_in_candidates: m.covered,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentReport {
    pub doc_id: String,
    pub mentions: usize,
    pub correct: usize,
    pub errors: Vec<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub run_id: String,
    pub config: PipelineConfig,
    pub metrics: Metrics,
    pub gold_coverage: f64,
    /// Every type is present, zero counts included.
    pub errors_by_type: BTreeMap<ErrorType, usize>,
    pub total_errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counters: Option<Counters>,
    pub per_document: Vec<DocumentReport>,
}

pub fn report(eval: &Evaluation) -> Report {
    let errors = error_records(eval);
    let mut errors_by_type: BTreeMap<ErrorType, usize> = ErrorType::ALL.iter().map(|&t| (t, 0)).collect();
    for e in &errors {
        *errors_by_type.get_mut(&e.error_type).expect("all types present") += 1;
    }
    let mut per_document: Vec<DocumentReport> = Vec::new();
    for m in &eval.mentions {
        if per_document.last().map(|d| &d.doc_id) != Some(&m.doc_id) {
            per_document.push(DocumentReport { doc_id: m.doc_id.clone(), mentions: 0, correct: 0, errors: Vec::new() });
        }
        let d = per_document.last_mut().expect("just pushed");
        d.mentions += 1;
        if m.error.is_none() {
            d.correct += 1;
        }
    }
    for e in errors.iter().cloned() {
        let d = per_document.iter_mut().find(|d| d.doc_id == e.doc_id).expect("error doc is in the evaluation");
        d.errors.push(e);
    }
    Report {
        format: REPORT_FORMAT.to_string(),
        run_id: eval.run_id.clone(),
        config: eval.config.clone(),
        metrics: eval.metrics(),
        gold_coverage: eval.gold_coverage(),
        total_errors: errors.len(),
        errors_by_type,
        counters: eval.counters.clone(),
        per_document,
    }
}

/// Pretty JSON with a trailing newline. Field and map order are fixed, so
/// equal reports give equal bytes.
pub fn report_bytes(report: &Report) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(report).expect("report serializes");
    buf.push(b'\n');
    buf
}

pub fn read_report(bytes: &[u8]) -> Result<Report, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// One error record per line, in corpus order.
pub fn write_error_file<W: Write>(mut w: W, report: &Report) -> std::io::Result<()> {
    for e in report.per_document.iter().flat_map(|d| &d.errors) {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_error_file<R: BufRead>(reader: R) -> std::io::Result<Vec<ErrorRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}
