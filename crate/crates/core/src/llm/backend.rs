use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::CompletionRequest;

/// Environment variable holding the backend credential.
pub const API_KEY_ENV: &str = "LINKPILOT_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub metadata: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx.
    Transient(String),
    /// The backend answered with an error payload.
    Fatal { status: Option<u16>, body: String },
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;
}

/// Wire format of a backend family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendFamily {
    /// `POST /v1/chat/completions` with `messages`; reply in `choices[0].message.content`.
    #[default]
    OpenaiChat,
    /// `POST /v1/messages` with a top-level `system`; reply in `content[*].text`.
    AnthropicMessages,
}

pub struct HttpBackend {
    family: BackendFamily,
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(
        family: BackendFamily,
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Fatal { status: None, body: e.to_string() })?;
        Ok(Self { family, endpoint: endpoint.into(), api_key, client })
    }

    /// Like [`HttpBackend::new`] with the key read from `LINKPILOT_API_KEY`.
    pub fn from_env(family: BackendFamily, endpoint: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        Self::new(family, endpoint, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()), timeout)
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        match self.family {
            BackendFamily::OpenaiChat => {
                let mut messages = Vec::new();
                if !req.system_text.is_empty() {
                    messages.push(json!({"role": "system", "content": req.system_text}));
                }
                messages.push(json!({"role": "user", "content": req.user_text}));
                json!({
                    "model": req.model_id,
                    "messages": messages,
                    "temperature": req.temperature,
                    "max_tokens": req.max_output_tokens,
                })
            }
            BackendFamily::AnthropicMessages => json!({
                "model": req.model_id,
                "system": req.system_text,
                "messages": [{"role": "user", "content": req.user_text}],
                "temperature": req.temperature,
                "max_tokens": req.max_output_tokens,
            }),
        }
    }
}

pub(crate) fn extract_reply(family: BackendFamily, v: &Value) -> Option<BackendReply> {
    let text = match family {
        BackendFamily::OpenaiChat => v.pointer("/choices/0/message/content")?.as_str()?.to_string(),
        BackendFamily::AnthropicMessages => v
            .get("content")?
            .as_array()?
            .iter()
            .filter_map(|b| b.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
    };
    let mut metadata = BTreeMap::new();
    for key in ["id", "model", "usage", "stop_reason", "system_fingerprint"] {
        if let Some(x) = v.get(key) {
            metadata.insert(key.to_string(), x.clone());
        }
    }
    if let Some(x) = v.pointer("/choices/0/finish_reason") {
        metadata.insert("finish_reason".into(), x.clone());
    }
    Some(BackendReply { text, metadata })
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let mut rb = self.client.post(&self.endpoint).json(&self.body(request));
        if let Some(key) = &self.api_key {
            rb = match self.family {
                BackendFamily::OpenaiChat => rb.bearer_auth(key),
                BackendFamily::AnthropicMessages => rb.header("x-api-key", key).header("anthropic-version", "2023-06-01"),
            };
        }
        let resp = rb.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal { status: Some(status.as_u16()), body: text });
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Fatal { status: Some(status.as_u16()), body: format!("{e}: {text}") })?;
        if v.get("error").is_some_and(|e| !e.is_null()) {
            return Err(BackendError::Fatal { status: Some(status.as_u16()), body: text });
        }
        extract_reply(self.family, &v)
            .ok_or(BackendError::Fatal { status: Some(status.as_u16()), body: format!("no completion text in {text}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_openai_and_anthropic_shapes() {
        let oa = json!({"id": "x", "choices": [{"message": {"content": "B"}, "finish_reason": "stop"}]});
        let r = extract_reply(BackendFamily::OpenaiChat, &oa).unwrap();
        assert_eq!(r.text, "B");
        assert_eq!(r.metadata["finish_reason"], json!("stop"));
        let an = json!({"content": [{"type": "text", "text": "None of the "}, {"type": "text", "text": "entity match"}]});
        assert_eq!(extract_reply(BackendFamily::AnthropicMessages, &an).unwrap().text, "None of the entity match");
        assert!(extract_reply(BackendFamily::OpenaiChat, &json!({"choices": []})).is_none());
    }
}
