//! Stage-1 name-origin prediction: prompt, tolerant response parsing, and clients.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ingest::http::{CachedHttp, HttpError, HttpRequest};
use crate::ingest::CountryCode;
use crate::prompts::{self, PromptBundle, PromptError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginPrediction {
    pub author_name: String,
    /// Exactly two codes, in model order.
    pub candidates: [CountryCode; 2],
    pub raw_response: String,
}

/// System prompt plus `Name: {name}`.
pub fn build_name_origin_request(name: &str) -> Result<PromptBundle, PromptError> {
    prompts::build_name_origin_prompt(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedResponse {
    #[error("no bracketed array of quoted country codes")]
    NoArray,
    #[error("expected 2 country codes, found {0}")]
    WrongArity(usize),
    #[error("invalid country code {0:?}")]
    InvalidCode(String),
}

const QUOTES: [char; 6] = ['"', '\'', '“', '”', '‘', '’'];

enum ItemError {
    NotQuoted,
    Invalid(String),
}

fn parse_items(inner: &str) -> Result<Vec<CountryCode>, ItemError> {
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let item = item.trim();
            let mut chars = item.chars();
            let (Some(open), Some(close)) = (chars.next(), chars.next_back()) else {
                return Err(ItemError::NotQuoted);
            };
            if !QUOTES.contains(&open) || !QUOTES.contains(&close) {
                return Err(ItemError::NotQuoted);
            }
            let code = chars.as_str().trim();
            CountryCode::parse(code).map_err(|_| ItemError::Invalid(code.to_string()))
        })
        .collect()
}

/// Finds the first bracketed array of quoted two-letter codes in `raw` and requires
/// exactly two of them. Codes are uppercased; surrounding chatter is ignored.
pub fn parse_origin_response(raw: &str) -> Result<[CountryCode; 2], MalformedResponse> {
    let mut first_invalid = None;
    let mut rest = raw;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        match parse_items(&after[..close]) {
            Ok(codes) => {
                return match codes.as_slice() {
                    [a, b] => Ok([*a, *b]),
                    other => Err(MalformedResponse::WrongArity(other.len())),
                };
            }
            Err(ItemError::Invalid(code)) => {
                first_invalid.get_or_insert(code);
            }
            Err(ItemError::NotQuoted) => {}
        }
        rest = after;
    }
    Err(first_invalid.map_or(MalformedResponse::NoArray, MalformedResponse::InvalidCode))
}

#[derive(Debug, Error)]
pub enum OriginError {
    #[error("origin model request failed: {0}")]
    Http(#[from] HttpError),
    #[error("origin model response unreadable: {0}")]
    BadEnvelope(String),
    #[error("no stub response for name {0:?}")]
    MissingStub(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Anything that turns an author name into the model's raw text answer.
pub trait OriginClient: Send + Sync {
    fn predict(&self, name: &str) -> Result<String, OriginError>;
}

/// Deterministic name → raw-response lookup for tests and recorded fixtures.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StubOriginClient {
    responses: HashMap<String, String>,
}

impl StubOriginClient {
    pub fn new(responses: impl IntoIterator<Item = (String, String)>) -> Self {
        StubOriginClient { responses: responses.into_iter().collect() }
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }
}

impl OriginClient for StubOriginClient {
    fn predict(&self, name: &str) -> Result<String, OriginError> {
        self.responses.get(name).cloned().ok_or_else(|| OriginError::MissingStub(name.to_string()))
    }
}

/// Chat-completion endpoint client: POST `{model, messages, temperature}` to
/// `{base_url}/chat/completions`, reading `choices[0].message.content`.
pub struct ChatOriginClient {
    base_url: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    http: Arc<CachedHttp>,
}

impl ChatOriginClient {
    pub fn new(base_url: &str, model: &str, http: Arc<CachedHttp>) -> Self {
        ChatOriginClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            temperature: 0.0,
            api_key: None,
            http,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
            "temperature": self.temperature,
        })
    }
}

impl OriginClient for ChatOriginClient {
    fn predict(&self, name: &str) -> Result<String, OriginError> {
        let bundle = build_name_origin_request(name)?;
        let body = serde_json::to_vec(&self.request_body(&bundle)).expect("json body");
        let key = format!("POST /chat/completions {}", String::from_utf8_lossy(&body));
        let mut req = HttpRequest::post_json(format!("{}/chat/completions", self.base_url), body);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let resp = self.http.execute(&key, &req)?;
        let v: Value = serde_json::from_slice(&resp).map_err(|e| OriginError::BadEnvelope(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| OriginError::BadEnvelope("missing choices[0].message.content".into()))
    }
}
