//! Text normalization shared by ingest, prompts and deduplication.

use sha2::{Digest, Sha256};

/// Collapses every run of Unicode whitespace to a single ASCII space and trims both ends.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Whitespace-collapsed, case-folded form used for content matching.
pub fn content_key(s: &str) -> String {
    normalize_whitespace(s).to_lowercase()
}

/// Hex SHA-256 of the normalized (title, abstract) pair.
pub fn content_hash(title: &str, abstract_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(content_key(title).as_bytes());
    hasher.update([0x1f]);
    hasher.update(content_key(abstract_text).as_bytes());
    hex::encode(hasher.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
