//! Run artifact: a header line, one line per mention in corpus order, then a
//! footer (or an `aborted` marker when the run stopped early).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Counters, PipelineConfig, Prediction, RunResult};
use crate::candidates::{Candidate, CandidateSet, Provenance};
use crate::prompts::{Outcome, ParseMethod};

pub const ARTIFACT_FORMAT: &str = "linkpilot-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    pub config: PipelineConfig,
    pub template_version: String,
    /// SHA-256 of each template file.
    pub templates: BTreeMap<String, String>,
    /// SHA-256 of the canonical serialization of each input.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactCandidate {
    pub entity_id: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
}

impl From<&Candidate> for ArtifactCandidate {
    fn from(c: &Candidate) -> Self {
        Self { entity_id: c.entity_id.clone(), provenance: c.provenance, prior: c.prior, retrieval_score: c.retrieval_score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeKind {
    Chosen,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub outcome: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<usize>,
    pub parse_method: ParseMethod,
    /// Cassette digest of the selection request; `None` when no call was made.
    pub raw_response_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub doc_id: String,
    pub mention_index: usize,
    pub candidates: Vec<ArtifactCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_text: Option<String>,
    pub selection: SelectionRecord,
    /// `None` means the pipeline abstained.
    pub predicted_entity: Option<String>,
}

impl MentionRecord {
    pub fn from_prediction(p: &Prediction) -> Self {
        let (outcome, choice) = match p.selection.outcome {
            Outcome::Chosen(i) => (OutcomeKind::Chosen, Some(i)),
            Outcome::Abstain => (OutcomeKind::Abstain, None),
        };
        Self {
            doc_id: p.doc_id.clone(),
            mention_index: p.mention_index,
            candidates: p.candidates.candidates.iter().map(ArtifactCandidate::from).collect(),
            aux_text: p.aux.as_ref().map(|a| a.text.clone()),
            selection: SelectionRecord {
                outcome,
                choice,
                parse_method: p.selection.parse_method,
                raw_response_digest: p.selection_digest.clone(),
            },
            predicted_entity: p.predicted_entity.clone(),
        }
    }

    /// Candidate set without descriptions.
    pub fn candidate_set(&self) -> CandidateSet {
        CandidateSet {
            candidates: self
                .candidates
                .iter()
                .map(|c| Candidate {
                    entity_id: c.entity_id.clone(),
                    provenance: c.provenance,
                    prior: c.prior,
                    retrieval_score: c.retrieval_score,
                    description: String::new(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub doc_id: String,
    pub mention_index: usize,
    pub error: String,
}

#[derive(Debug, Serialize)]
enum Line<'a> {
    #[serde(rename = "header")]
    Header(&'a RunHeader),
    #[serde(rename = "footer")]
    Footer(&'a Counters),
    #[serde(rename = "aborted")]
    Aborted(&'a AbortRecord),
}

/// A run artifact as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub header: RunHeader,
    pub mentions: Vec<MentionRecord>,
    pub footer: Option<Counters>,
    pub aborted: Option<AbortRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact line {line}: {cause}")]
    Format { line: usize, cause: String },
    #[error("artifact i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

pub fn write_artifact<W: Write>(mut w: W, run: &RunResult) -> std::io::Result<()> {
    line(&mut w, &Line::Header(&run.header))?;
    for p in &run.predictions {
        line(&mut w, &MentionRecord::from_prediction(p))?;
    }
    match &run.aborted {
        Some(a) => line(&mut w, &Line::Aborted(a))?,
        None => line(&mut w, &Line::Footer(&run.counters))?,
    }
    w.flush()
}

pub fn artifact_bytes(run: &RunResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_artifact(&mut buf, run).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_artifact<R: BufRead>(reader: R) -> Result<Artifact, ArtifactError> {
    let mut header = None;
    let mut mentions = Vec::new();
    let mut footer = None;
    let mut aborted = None;
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let bad = |cause: String| ArtifactError::Format { line: i + 1, cause };
        let v: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let single = v.as_object().filter(|o| o.len() == 1).and_then(|o| o.iter().next());
        match single {
            Some((k, inner)) if k == "header" => {
                if header.is_some() || !mentions.is_empty() {
                    return Err(bad("header must be the first record".into()));
                }
                let h: RunHeader = serde_json::from_value(inner.clone()).map_err(|e| bad(e.to_string()))?;
                if h.format != ARTIFACT_FORMAT {
                    return Err(bad(format!("unsupported format {:?}", h.format)));
                }
                header = Some(h);
            }
            Some((k, inner)) if k == "footer" => {
                footer = Some(serde_json::from_value(inner.clone()).map_err(|e| bad(e.to_string()))?);
            }
            Some((k, inner)) if k == "aborted" => {
                aborted = Some(serde_json::from_value(inner.clone()).map_err(|e| bad(e.to_string()))?);
            }
            _ => {
                if header.is_none() {
                    return Err(bad("mention record before header".into()));
                }
                mentions.push(serde_json::from_value(v).map_err(|e| bad(e.to_string()))?);
            }
        }
    }
    let header = header.ok_or(ArtifactError::Format { line: 0, cause: "missing header".into() })?;
    Ok(Artifact { header, mentions, footer, aborted })
}

pub fn load_artifact(path: &Path) -> Result<Artifact, ArtifactError> {
    read_artifact(std::io::BufReader::new(std::fs::File::open(path)?))
}
