use sha2::{Digest, Sha256};

use super::CompletionRequest;

const DOMAIN: &[u8] = b"linkpilot.completion-request.v1\0";

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(bytes);
}

/// Canonical serialization: a domain tag, then model id, system text and user
/// text as length-prefixed UTF-8, the temperature as little-endian IEEE-754
/// bits (negative zero folded into zero) and the token limit as a
/// little-endian u64.
pub fn canonical_bytes(req: &CompletionRequest) -> Vec<u8> {
    let mut buf = Vec::with_capacity(DOMAIN.len() + req.system_text.len() + req.user_text.len() + 64);
    buf.extend_from_slice(DOMAIN);
    put_bytes(&mut buf, req.model_id.as_bytes());
    put_bytes(&mut buf, req.system_text.as_bytes());
    put_bytes(&mut buf, req.user_text.as_bytes());
    let t = if req.temperature == 0.0 { 0.0f64 } else { req.temperature };
    buf.extend_from_slice(&t.to_bits().to_le_bytes());
    buf.extend_from_slice(&u64::from(req.max_output_tokens).to_le_bytes());
    buf
}

/// Lowercase hex SHA-256 of [`canonical_bytes`].
pub fn request_digest(req: &CompletionRequest) -> String {
    hex::encode(Sha256::digest(canonical_bytes(req)))
}
