use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const BUILTIN_VERSION: &str = "v1";

const FILES: [&str; 4] = ["SYSTEM", "AUG-1", "SEL-1", "SEL-1.aux"];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template version {0:?} is not built in; pass a templates directory")]
    UnknownVersion(String),
    #[error("template {file}: {cause}")]
    Read { file: String, cause: String },
    #[error("template {file} lacks placeholder {placeholder}")]
    MissingPlaceholder { file: String, placeholder: &'static str },
}

/// One version of the prompt templates.
///
/// Files: `SYSTEM.txt` (system text), `AUG-1.txt` (augmentation question,
/// placeholders `{document}` and `{mention}`), `SEL-1.txt` (multiple choice,
/// `{document}`, `{mention}`, `{aux}`, `{options}`) and `SEL-1.aux.txt`
/// (the block substituted for `{aux}` when augmentation is on).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub system: String,
    pub augmentation: String,
    pub selection: String,
    pub aux_block: String,
    hashes: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_texts(
            BUILTIN_VERSION,
            [
                include_str!("../../templates/v1/SYSTEM.txt"),
                include_str!("../../templates/v1/AUG-1.txt"),
                include_str!("../../templates/v1/SEL-1.txt"),
                include_str!("../../templates/v1/SEL-1.aux.txt"),
            ],
        )
        .expect("built-in templates are valid")
    }

    /// Load `dir/<version>/*.txt`, or the built-in set when `dir` is `None`.
    pub fn load(dir: Option<&Path>, version: &str) -> Result<Self, TemplateError> {
        let Some(dir) = dir else {
            return if version == BUILTIN_VERSION {
                Ok(Self::builtin())
            } else {
                Err(TemplateError::UnknownVersion(version.to_string()))
            };
        };
        let mut texts = Vec::with_capacity(FILES.len());
        for name in FILES {
            let path = dir.join(version).join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| TemplateError::Read { file: path.display().to_string(), cause: e.to_string() })?;
            texts.push(text);
        }
        let [s, a, sel, aux]: [String; 4] = texts.try_into().expect("four template files");
        Self::from_texts(version, [&s, &a, &sel, &aux])
    }

    pub fn from_texts(version: &str, texts: [&str; 4]) -> Result<Self, TemplateError> {
        let required: [&[&'static str]; 4] =
            [&[], &["{document}", "{mention}"], &["{document}", "{mention}", "{aux}", "{options}"], &["{aux}"]];
        for ((name, text), placeholders) in FILES.iter().zip(texts).zip(required) {
            for p in placeholders {
                if !text.contains(p) {
                    return Err(TemplateError::MissingPlaceholder { file: name.to_string(), placeholder: p });
                }
            }
        }
        let hashes = FILES
            .iter()
            .zip(texts)
            .map(|(name, text)| (name.to_string(), hex::encode(Sha256::digest(text.as_bytes()))))
            .collect();
        Ok(Self {
            version: version.to_string(),
            system: texts[0].trim_end().to_string(),
            augmentation: texts[1].trim_end().to_string(),
            selection: texts[2].trim_end().to_string(),
            aux_block: texts[3].trim_end().to_string(),
            hashes,
        })
    }

    /// SHA-256 of each template file, keyed by template id.
    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }
}

/// Replace `{name}` placeholders in one pass; substituted text is never rescanned.
pub(crate) fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = tail.find('}').and_then(|close| {
            let name = &tail[1..close];
            vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}
