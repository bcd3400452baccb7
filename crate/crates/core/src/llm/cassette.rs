use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{request_digest, CompletionRequest, CompletionResponse, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl From<&CompletionRequest> for RecordedRequest {
    fn from(r: &CompletionRequest) -> Self {
        Self {
            model_id: r.model_id.clone(),
            system_text: r.system_text.clone(),
            user_text: r.user_text.clone(),
            temperature: r.temperature,
            max_output_tokens: r.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub text: String,
    pub latency_ms: u64,
}

/// One line of the cassette file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub digest: String,
    pub request: RecordedRequest,
    pub response: RecordedResponse,
}

impl CassetteRecord {
    pub fn new(request: &CompletionRequest, text: impl Into<String>, latency_ms: u64) -> Self {
        Self {
            digest: request_digest(request),
            request: request.into(),
            response: RecordedResponse { text: text.into(), latency_ms },
        }
    }

    fn to_response(&self) -> CompletionResponse {
        CompletionResponse {
            text: self.response.text.clone(),
            backend_metadata: Default::default(),
            latency: Duration::from_millis(self.response.latency_ms),
        }
    }
}

/// Append-only map from request digest to recorded response. The first
/// record for a digest wins; later duplicates in a file are ignored.
#[derive(Debug, Default)]
pub struct Cassette {
    entries: RwLock<HashMap<String, CassetteRecord>>,
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
}

impl Cassette {
    /// A cassette that is never persisted.
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = CassetteRecord>) -> Self {
        let c = Self::in_memory();
        {
            let mut map = c.entries.write().expect("cassette lock poisoned");
            for r in records {
                map.entry(r.digest.clone()).or_insert(r);
            }
        }
        c
    }

    /// Load a cassette for replay. The file must exist.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let entries = read_records(path)?;
        Ok(Self { entries: RwLock::new(entries), path: Some(path.to_path_buf()), writer: Mutex::new(None) })
    }

    /// Open (or create) a cassette that new records are appended to.
    pub fn open_append(path: &Path) -> Result<Self, LlmError> {
        let entries = if path.exists() { read_records(path)? } else { HashMap::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            path: Some(path.to_path_buf()),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cassette lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str) -> Option<CompletionResponse> {
        self.entries.read().expect("cassette lock poisoned").get(digest).map(CassetteRecord::to_response)
    }

    pub fn record(&self, digest: &str) -> Option<CassetteRecord> {
        self.entries.read().expect("cassette lock poisoned").get(digest).cloned()
    }

    /// Insert and persist `record` unless its digest is already present.
    /// Returns whether anything was written.
    pub fn append(&self, record: CassetteRecord) -> Result<bool, LlmError> {
        let mut writer = self.writer.lock().expect("cassette writer poisoned");
        if self.entries.read().expect("cassette lock poisoned").contains_key(&record.digest) {
            return Ok(false);
        }
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("cassette record serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.entries.write().expect("cassette lock poisoned").insert(record.digest.clone(), record);
        Ok(true)
    }

    /// Write all records, sorted by digest, to `w`.
    pub fn write_sorted<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let map = self.entries.read().expect("cassette lock poisoned");
        let mut records: Vec<&CassetteRecord> = map.values().collect();
        records.sort_by(|a, b| a.digest.cmp(&b.digest));
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn read_records(path: &Path) -> Result<HashMap<String, CassetteRecord>, LlmError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |cause: String| LlmError::CassetteFormat { path: path.display().to_string(), line: i + 1, cause };
        let rec: CassetteRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let req = CompletionRequest {
            model_id: rec.request.model_id.clone(),
            system_text: rec.request.system_text.clone(),
            user_text: rec.request.user_text.clone(),
            temperature: rec.request.temperature,
            max_output_tokens: rec.request.max_output_tokens,
        };
        if request_digest(&req) != rec.digest {
            return Err(bad(format!("digest {} does not match the stored request", rec.digest)));
        }
        out.entry(rec.digest.clone()).or_insert(rec);
    }
    Ok(out)
}
