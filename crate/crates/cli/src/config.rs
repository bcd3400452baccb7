//! TOML configuration. Each `run` flag has a key here; flags win.

use std::path::{Path, PathBuf};

use anyhow::Context;
use linkpilot::llm::{BackendFamily, ClientMode, RateLimit, RetryPolicy};
use linkpilot_review::RunSource;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunFile,
    pub backend: BackendFile,
    pub serve: ServeFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub corpus: Option<PathBuf>,
    pub alias_table: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub cassette: Option<PathBuf>,
    pub mode: Option<ClientMode>,
    pub model: Option<String>,
    pub max_candidates: Option<usize>,
    pub prior_k: Option<usize>,
    pub retrieval_k: Option<usize>,
    pub use_retrieval: Option<bool>,
    pub use_augmentation: Option<bool>,
    pub prior_only: Option<bool>,
    pub parallelism: Option<usize>,
    pub templates: Option<PathBuf>,
    pub template_version: Option<String>,
    pub temperature: Option<f64>,
    pub excerpt_window: Option<usize>,
    pub retriever_url: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendFile {
    pub family: Option<BackendFamily>,
    pub url: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retry: Option<RetryPolicy>,
    pub rate_limit: Option<RateLimit>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeFile {
    pub addr: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub runs: Vec<RunSource>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        let r = &mut cfg.run;
        for p in [&mut r.corpus, &mut r.alias_table, &mut r.entities, &mut r.cassette, &mut r.templates, &mut r.out] {
            fix(p);
        }
        fix(&mut cfg.serve.static_dir);
        for s in &mut cfg.serve.runs {
            for p in [&mut s.artifact, &mut s.corpus] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            fix(&mut s.entities);
            fix(&mut s.cassette);
        }
        Ok(cfg)
    }
}
