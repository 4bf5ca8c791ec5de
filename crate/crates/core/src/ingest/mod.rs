//! Scholarly metadata ingestion.
//!
//! Everything downstream consumes [`PaperRecord`] values. They come from two places:
//! the OpenAlex works API ([`openalex::MetadataClient`], cached on disk through
//! [`http::CachedHttp`]) and local JSONL dumps ([`load_dump`]). Titles and abstracts are
//! whitespace-normalized at construction so prompt bytes never depend on upstream
//! formatting.
//!
//! Dump schema, one JSON object per line:
//!
//! ```json
//! {"paper_id": "P1", "title": "...", "abstract": "...", "year": 2016, "venue": "ACL",
//!  "authors": [{"name": "Marie Dupont", "countries": ["FR"]}]}
//! ```

pub mod http;
pub mod openalex;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::text::normalize_whitespace;

pub use http::{CachedHttp, Clock, DiskCache, HttpError, RateLimiter, SystemClock, Transport};
pub use openalex::MetadataClient;

pub const MIN_YEAR: i32 = 1950;
pub const MAX_YEAR: i32 = 2100;

/// ISO 3166-1 alpha-2 code, stored uppercase. `UK` is folded into `GB`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode([u8; 2]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid ISO 3166-1 alpha-2 code {0:?}")]
pub struct InvalidCountryCode(pub String);

impl CountryCode {
    pub fn parse(s: &str) -> Result<Self, InvalidCountryCode> {
        let t = s.trim();
        let b = t.as_bytes();
        if b.len() != 2 || !b.iter().all(u8::is_ascii_alphabetic) {
            return Err(InvalidCountryCode(s.to_string()));
        }
        let code = [b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase()];
        Ok(if &code == b"UK" { CountryCode(*b"GB") } else { CountryCode(code) })
    }

    /// Builds a code from a literal known to be valid.
    ///
    /// # Panics
    /// If `s` is not two ASCII letters.
    pub fn from_static(s: &'static str) -> Self {
        Self::parse(s).expect("static country code")
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl FromStr for CountryCode {
    type Err = InvalidCountryCode;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for CountryCode {
    type Error = InvalidCountryCode;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> String {
        c.as_str().to_string()
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub display_name: String,
    /// 0-based index in the paper's author list.
    pub position: usize,
    pub affiliation_countries: BTreeSet<CountryCode>,
}

/// One scholarly paper. Construct through [`PaperRecord::new`] so the invariants hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DumpRecord", into = "DumpRecord")]
pub struct PaperRecord {
    pub paper_id: String,
    pub title: String,
    pub abstract_text: String,
    pub year: i32,
    pub venue: String,
    pub authors: Vec<AuthorRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("paper_id is empty")]
    EmptyId,
    #[error("title is empty after whitespace normalization")]
    EmptyTitle,
    #[error("abstract is empty after whitespace normalization")]
    EmptyAbstract,
    #[error("year {0} outside [{MIN_YEAR}, {MAX_YEAR}]")]
    YearOutOfRange(i32),
    #[error("author list is empty")]
    NoAuthors,
    #[error("author {0} has an empty name")]
    EmptyAuthorName(usize),
}

impl PaperRecord {
    /// Validates and normalizes a record. Author positions are assigned from list order.
    pub fn new(
        paper_id: impl Into<String>,
        title: &str,
        abstract_text: &str,
        year: i32,
        venue: impl Into<String>,
        authors: Vec<(String, BTreeSet<CountryCode>)>,
    ) -> Result<Self, RecordError> {
        let paper_id = paper_id.into().trim().to_string();
        if paper_id.is_empty() {
            return Err(RecordError::EmptyId);
        }
        let title = normalize_whitespace(title);
        if title.is_empty() {
            return Err(RecordError::EmptyTitle);
        }
        let abstract_text = normalize_whitespace(abstract_text);
        if abstract_text.is_empty() {
            return Err(RecordError::EmptyAbstract);
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(RecordError::YearOutOfRange(year));
        }
        if authors.is_empty() {
            return Err(RecordError::NoAuthors);
        }
        let authors = authors
            .into_iter()
            .enumerate()
            .map(|(position, (name, countries))| {
                let display_name = normalize_whitespace(&name);
                if display_name.is_empty() {
                    return Err(RecordError::EmptyAuthorName(position));
                }
                Ok(AuthorRecord { display_name, position, affiliation_countries: countries })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PaperRecord { paper_id, title, abstract_text, year, venue: venue.into(), authors })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpAuthor {
    name: String,
    #[serde(default)]
    countries: Vec<CountryCode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpRecord {
    #[serde(alias = "acl_id", alias = "arxiv_id", alias = "id")]
    paper_id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    year: i32,
    #[serde(default)]
    venue: String,
    authors: Vec<DumpAuthor>,
}

impl TryFrom<DumpRecord> for PaperRecord {
    type Error = RecordError;
    fn try_from(d: DumpRecord) -> Result<Self, RecordError> {
        let authors = d.authors.into_iter().map(|a| (a.name, a.countries.into_iter().collect())).collect();
        PaperRecord::new(d.paper_id, &d.title, &d.abstract_text, d.year, d.venue, authors)
    }
}

impl From<PaperRecord> for DumpRecord {
    fn from(p: PaperRecord) -> Self {
        DumpRecord {
            paper_id: p.paper_id,
            title: p.title,
            abstract_text: p.abstract_text,
            year: p.year,
            venue: p.venue,
            authors: p
                .authors
                .into_iter()
                .map(|a| DumpAuthor { name: a.display_name, countries: a.affiliation_countries.into_iter().collect() })
                .collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("work {0} not found upstream")]
    NotFound(String),
    #[error("malformed response for {id}: {reason}")]
    Malformed { id: String, reason: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("no publication_year or publication_date")]
    MissingYear,
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Publication year from raw metadata. `publication_year` (or `year`) wins over the
/// four-digit prefix of `publication_date`.
pub fn extract_year(raw: &Value) -> Result<i32, IngestError> {
    for key in ["publication_year", "year"] {
        match raw.get(key) {
            Some(Value::Number(n)) => {
                if let Some(y) = n.as_i64().and_then(|y| i32::try_from(y).ok()) {
                    return Ok(y);
                }
            }
            Some(Value::String(s)) => {
                if let Ok(y) = s.trim().parse::<i32>() {
                    return Ok(y);
                }
            }
            _ => {}
        }
    }
    if let Some(date) = raw.get("publication_date").and_then(Value::as_str) {
        let date = date.trim();
        if date.len() >= 4 && date.as_bytes()[..4].iter().all(u8::is_ascii_digit) {
            return Ok(date[..4].parse().expect("four ascii digits"));
        }
    }
    Err(IngestError::MissingYear)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    Anthology,
    Arxiv,
}

impl DumpFormat {
    fn default_venue(self) -> &'static str {
        match self {
            DumpFormat::Anthology => "ACL Anthology",
            DumpFormat::Arxiv => "arXiv",
        }
    }
}

impl FromStr for DumpFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "anthology" | "acl" => Ok(DumpFormat::Anthology),
            "arxiv" => Ok(DumpFormat::Arxiv),
            other => Err(format!("unknown dump format {other:?}")),
        }
    }
}

/// A dump line that failed validation. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaViolation {
    pub line: usize,
    pub message: String,
}

/// Streams records from a JSONL dump in file order. Blank lines are skipped.
pub struct DumpReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    format: DumpFormat,
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(reader: R, format: DumpFormat) -> Self {
        DumpReader { lines: reader.lines(), line_no: 0, format }
    }

    fn parse_line(&self, line: &str) -> Result<PaperRecord, String> {
        let mut value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let year = extract_year(&value).map_err(|e| e.to_string())?;
        let obj = value.as_object_mut().ok_or("line is not a JSON object")?;
        obj.insert("year".into(), Value::from(year));
        match obj.get("venue") {
            Some(Value::String(v)) if !v.trim().is_empty() => {}
            _ => {
                obj.insert("venue".into(), Value::from(self.format.default_venue()));
            }
        }
        let record: DumpRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
        PaperRecord::try_from(record).map_err(|e| e.to_string())
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<PaperRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(IngestError::Io(e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(Ok(match self.parse_line(&line) {
                Ok(r) => r,
                Err(message) => {
                    return Some(Err(IngestError::Malformed { id: format!("line {}", self.line_no), reason: message }))
                }
            }));
        }
    }
}

/// Result of loading a whole dump: good records in file order plus a per-line report.
#[derive(Debug, Default, Clone)]
pub struct DumpLoad {
    pub records: Vec<PaperRecord>,
    pub violations: Vec<SchemaViolation>,
}

pub fn load_dump(path: &Path, format: DumpFormat) -> Result<DumpLoad, IngestError> {
    let file = File::open(path)?;
    read_dump(BufReader::new(file), format)
}

pub fn read_dump<R: BufRead>(reader: R, format: DumpFormat) -> Result<DumpLoad, IngestError> {
    let mut reader = DumpReader::new(reader, format);
    let mut out = DumpLoad::default();
    while let Some(item) = reader.next() {
        match item {
            Ok(r) => out.records.push(r),
            Err(IngestError::Malformed { reason, .. }) => {
                out.violations.push(SchemaViolation { line: reader.line_no, message: reason })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_dump<W: Write>(mut w: W, records: &[PaperRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Keeps the first occurrence of each paper_id; returns the ids that were dropped.
pub fn dedup_by_id(records: &mut Vec<PaperRecord>) -> Vec<String> {
    let mut seen = BTreeMap::new();
    let mut dropped = Vec::new();
    records.retain(|r| {
        if seen.insert(r.paper_id.clone(), ()).is_some() {
            dropped.push(r.paper_id.clone());
            false
        } else {
            true
        }
    });
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cc(s: &'static str) -> CountryCode {
        CountryCode::from_static(s)
    }

    #[test]
    fn country_codes_uppercase_and_fold_uk() {
        assert_eq!(CountryCode::parse("cn").unwrap().as_str(), "CN");
        assert_eq!(CountryCode::parse("UK").unwrap(), cc("GB"));
        assert!(CountryCode::parse("USA").is_err());
        assert!(CountryCode::parse("C1").is_err());
        assert!(CountryCode::parse("").is_err());
    }

    #[test]
    fn extract_year_prefers_explicit_field() {
        assert_eq!(extract_year(&json!({"publication_year": 2016})).unwrap(), 2016);
        assert_eq!(extract_year(&json!({"publication_date": "2023-05-01"})).unwrap(), 2023);
        assert_eq!(extract_year(&json!({"publication_year": 2016, "publication_date": "2023-05-01"})).unwrap(), 2016);
        assert!(matches!(extract_year(&json!({})), Err(IngestError::MissingYear)));
        assert!(matches!(extract_year(&json!({"publication_date": "n/a"})), Err(IngestError::MissingYear)));
    }

    #[test]
    fn record_invariants() {
        let authors = || vec![("A B".to_string(), BTreeSet::new())];
        assert_eq!(PaperRecord::new("p", "  ", "x", 2000, "", authors()), Err(RecordError::EmptyTitle));
        assert_eq!(PaperRecord::new("p", "t", "x", 1949, "", authors()), Err(RecordError::YearOutOfRange(1949)));
        assert_eq!(PaperRecord::new("p", "t", "x", 2000, "", vec![]), Err(RecordError::NoAuthors));
        let r = PaperRecord::new("p", " A\n title ", "an   abstract", 2000, "", authors()).unwrap();
        assert_eq!(r.title, "A title");
        assert_eq!(r.abstract_text, "an abstract");
    }

    #[test]
    fn empty_dump_is_empty() {
        let load = read_dump(io::Cursor::new(""), DumpFormat::Anthology).unwrap();
        assert!(load.records.is_empty());
        assert!(load.violations.is_empty());
    }

    #[test]
    fn truncated_line_is_reported_with_its_number() {
        let text = concat!(
            r#"{"paper_id":"P1","title":"T","abstract":"A","year":2016,"authors":[{"name":"X Y","countries":["CN"]}]}"#,
            "\n",
            r#"{"paper_id":"P2","title":"T","abstr"#,
            "\n"
        );
        let load = read_dump(io::Cursor::new(text), DumpFormat::Anthology).unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.violations.len(), 1);
        assert_eq!(load.violations[0].line, 2);
        assert_eq!(load.records[0].venue, "ACL Anthology");
    }

    #[test]
    fn dump_accepts_date_only_and_id_aliases() {
        let text = r#"{"arxiv_id":"1234.5678","title":"T","abstract":"A","publication_date":"2019-02-01","authors":[{"name":"Kim Min","countries":["kr","US"]}]}"#;
        let load = read_dump(io::Cursor::new(text), DumpFormat::Arxiv).unwrap();
        let r = &load.records[0];
        assert_eq!(r.paper_id, "1234.5678");
        assert_eq!(r.year, 2019);
        assert_eq!(r.venue, "arXiv");
        assert_eq!(r.authors[0].affiliation_countries, [cc("KR"), cc("US")].into_iter().collect());
    }

    #[test]
    fn dedup_keeps_first() {
        let mk =
            |id: &str, t: &str| PaperRecord::new(id, t, "a", 2000, "", vec![("N".into(), BTreeSet::new())]).unwrap();
        let mut v = vec![mk("a", "1"), mk("b", "2"), mk("a", "3")];
        assert_eq!(dedup_by_id(&mut v), vec!["a".to_string()]);
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].title, "1");
    }
}
