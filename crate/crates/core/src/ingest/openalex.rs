//! OpenAlex works lookup.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde_json::Value;

use super::http::{CachedHttp, HttpError, HttpRequest};
use super::{extract_year, CountryCode, IngestError, PaperRecord};

pub const DEFAULT_BASE_URL: &str = "https://api.openalex.org";
/// Environment variable carrying the polite-pool contact address.
pub const MAILTO_ENV: &str = "OPENALEX_MAILTO";

pub struct MetadataClient {
    base_url: String,
    mailto: Option<String>,
    http: Arc<CachedHttp>,
}

/// Canonical OpenAlex path component for a work id, DOI or OpenAlex URL.
pub fn normalize_work_id(raw: &str) -> Option<String> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let lower = s.to_ascii_lowercase();
    for prefix in ["https://doi.org/", "http://doi.org/", "doi:"] {
        if let Some(rest) = lower.strip_prefix(prefix) {
            return Some(format!("doi:{}", rest.trim()));
        }
    }
    if lower.starts_with("10.") {
        return Some(format!("doi:{lower}"));
    }
    let tail = s.rsplit('/').next().unwrap_or(s);
    let tail = tail.trim();
    if tail.is_empty() {
        return None;
    }
    Some(tail.to_ascii_uppercase())
}

impl MetadataClient {
    pub fn new(base_url: impl Into<String>, http: Arc<CachedHttp>) -> Self {
        MetadataClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            mailto: std::env::var(MAILTO_ENV).ok().filter(|m| !m.is_empty()),
            http,
        }
    }

    pub fn with_mailto(mut self, mailto: Option<String>) -> Self {
        self.mailto = mailto;
        self
    }

    pub fn http(&self) -> &CachedHttp {
        &self.http
    }

    /// Cache key for a work lookup. The contact address is not part of it.
    pub fn request_key(work: &str) -> String {
        format!("GET /works/{work}")
    }

    pub fn fetch_work(&self, paper_id: &str) -> Result<PaperRecord, IngestError> {
        let work = normalize_work_id(paper_id).ok_or_else(|| IngestError::NotFound(paper_id.to_string()))?;
        let mut url = format!("{}/works/{}", self.base_url, work);
        if let Some(m) = &self.mailto {
            url.push_str("?mailto=");
            url.push_str(m);
        }
        let body = match self.http.execute(&Self::request_key(&work), &HttpRequest::get(url)) {
            Ok(b) => b,
            Err(HttpError::NotFound(_)) => return Err(IngestError::NotFound(paper_id.to_string())),
            Err(HttpError::RateLimited { attempts }) => return Err(IngestError::RateLimited { attempts }),
            Err(e) => return Err(e.into()),
        };
        parse_work(&body, paper_id)
    }
}

/// Rebuilds abstract text from OpenAlex's word → positions index.
pub fn reconstruct_abstract(index: &serde_json::Map<String, Value>) -> String {
    let mut slots: Vec<(u64, &str)> = Vec::new();
    for (word, positions) in index {
        if let Some(ps) = positions.as_array() {
            slots.extend(ps.iter().filter_map(Value::as_u64).map(|p| (p, word.as_str())));
        }
    }
    slots.sort_unstable();
    slots.iter().map(|(_, w)| *w).collect::<Vec<_>>().join(" ")
}

/// Normalizes one OpenAlex work object into a [`PaperRecord`].
pub fn parse_work(body: &[u8], requested_id: &str) -> Result<PaperRecord, IngestError> {
    let malformed = |reason: &str| IngestError::Malformed { id: requested_id.to_string(), reason: reason.to_string() };
    let work: Value = serde_json::from_slice(body).map_err(|e| malformed(&e.to_string()))?;
    let paper_id =
        work.get("id").and_then(Value::as_str).and_then(normalize_work_id).unwrap_or_else(|| requested_id.to_string());
    let title = work
        .get("title")
        .and_then(Value::as_str)
        .or_else(|| work.get("display_name").and_then(Value::as_str))
        .ok_or_else(|| malformed("missing title"))?;
    let abstract_text = match work.get("abstract_inverted_index") {
        Some(Value::Object(index)) => reconstruct_abstract(index),
        _ => match work.get("abstract").and_then(Value::as_str) {
            Some(a) => a.to_string(),
            None => return Err(malformed("missing abstract")),
        },
    };
    let year = extract_year(&work).map_err(|_| malformed("missing publication year"))?;
    let venue = work
        .pointer("/primary_location/source/display_name")
        .and_then(Value::as_str)
        .or_else(|| work.pointer("/host_venue/display_name").and_then(Value::as_str))
        .unwrap_or("")
        .to_string();
    let authorships =
        work.get("authorships").and_then(Value::as_array).ok_or_else(|| malformed("missing authorships"))?;
    let mut authors = Vec::with_capacity(authorships.len());
    for a in authorships {
        let name = a
            .pointer("/author/display_name")
            .and_then(Value::as_str)
            .or_else(|| a.get("raw_author_name").and_then(Value::as_str))
            .ok_or_else(|| malformed("authorship without a name"))?;
        let mut countries = BTreeSet::new();
        for inst in a.get("institutions").and_then(Value::as_array).into_iter().flatten() {
            match inst.get("country_code").and_then(Value::as_str).map(CountryCode::parse) {
                Some(Ok(c)) => {
                    countries.insert(c);
                }
                Some(Err(e)) => log::warn!("{requested_id}: skipping institution: {e}"),
                None => {}
            }
        }
        authors.push((name.to_string(), countries));
    }
    PaperRecord::new(paper_id, title, &abstract_text, year, venue, authors).map_err(|e| malformed(&e.to_string()))
}
