//! JSON-lines encoding of envelopes.
//!
//! One envelope per line, keys in the fixed order `id`, `ts`, `src`, `dst`,
//! `kind`, `payload`. Payload objects serialize with their fields in
//! declaration order, so a given envelope always encodes to the same bytes.

use super::Envelope;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn encode_line(env: &Envelope) -> String {
    serde_json::to_string(env).expect("envelopes always serialize")
}

pub fn decode_line(line: &str) -> Result<Envelope, WireError> {
    serde_json::from_str(line).map_err(|source| WireError::Json { line: 1, source })
}

/// Encodes a sequence of envelopes, newline-terminating every line.
pub fn encode_trace<'a>(envs: impl IntoIterator<Item = &'a Envelope>) -> String {
    let mut out = String::new();
    for env in envs {
        out.push_str(&encode_line(env));
        out.push('\n');
    }
    out
}

/// Decodes a JSON-lines trace. Blank lines are skipped.
pub fn decode_trace(text: &str) -> Result<Vec<Envelope>, WireError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| WireError::Json { line: i + 1, source }))
        .collect()
}
