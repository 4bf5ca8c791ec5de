//! Semi-automated L1 labeling.
//!
//! A paper is labeled in three steps:
//!
//! 1. every author gets a top-2 name-origin prediction ([`origin`]) which is checked
//!    against the author's affiliation countries ([`verify_author`]);
//! 2. the key authors (first, second, last) must all be verified to the same country
//!    ([`paper_consensus`]);
//! 3. that country is mapped to one of the eight L1 labels ([`MappingTable`]).
//!
//! Rule outcomes are values, not errors. Only failures talking to the origin model
//! surface as `Err`.

pub mod origin;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Era;
use crate::ingest::{AuthorRecord, CountryCode, PaperRecord};
use crate::par::{self, Execution};

pub use origin::{
    build_name_origin_request, parse_origin_response, ChatOriginClient, MalformedResponse, OriginClient, OriginError,
    OriginPrediction, StubOriginClient,
};

/// The closed set of native-language labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Label {
    EnglishAmerican,
    EnglishBritish,
    French,
    German,
    Italian,
    Chinese,
    Japanese,
    Korean,
}

impl L1Label {
    pub const ALL: [L1Label; 8] = [
        L1Label::EnglishAmerican,
        L1Label::EnglishBritish,
        L1Label::French,
        L1Label::German,
        L1Label::Italian,
        L1Label::Chinese,
        L1Label::Japanese,
        L1Label::Korean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            L1Label::EnglishAmerican => "english_american",
            L1Label::EnglishBritish => "english_british",
            L1Label::French => "french",
            L1Label::German => "german",
            L1Label::Italian => "italian",
            L1Label::Chinese => "chinese",
            L1Label::Japanese => "japanese",
            L1Label::Korean => "korean",
        }
    }

    /// Position in [`L1Label::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for L1Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for L1Label {
    type Err = String;
    /// Exact match on the serialized form only; see `prompts::parse_label` for model output.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        L1Label::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("mapping table line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("country {country} mapped to both {first} and {second}")]
    Conflict { country: CountryCode, first: L1Label, second: L1Label },
    #[error("label {label} reached from both {first} and {second}; mapping must be injective")]
    NotInjective { label: L1Label, first: CountryCode, second: CountryCode },
    #[error("label {0} has no country")]
    MissingLabel(L1Label),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Country → L1 mapping. Validated to be injective and to cover all eight labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappingTable {
    entries: BTreeMap<CountryCode, L1Label>,
}

impl Default for MappingTable {
    fn default() -> Self {
        const ROWS: [(&str, L1Label); 8] = [
            ("US", L1Label::EnglishAmerican),
            ("GB", L1Label::EnglishBritish),
            ("FR", L1Label::French),
            ("DE", L1Label::German),
            ("IT", L1Label::Italian),
            ("CN", L1Label::Chinese),
            ("JP", L1Label::Japanese),
            ("KR", L1Label::Korean),
        ];
        let entries = ROWS.iter().map(|(c, l)| (CountryCode::from_static(c), *l)).collect();
        MappingTable { entries }
    }
}

impl MappingTable {
    pub fn from_entries(rows: impl IntoIterator<Item = (CountryCode, L1Label)>) -> Result<Self, MappingError> {
        let mut entries = BTreeMap::new();
        let mut by_label: BTreeMap<L1Label, CountryCode> = BTreeMap::new();
        for (country, label) in rows {
            if let Some(&prev) = entries.get(&country) {
                if prev != label {
                    return Err(MappingError::Conflict { country, first: prev, second: label });
                }
                continue;
            }
            if let Some(&other) = by_label.get(&label) {
                return Err(MappingError::NotInjective { label, first: other, second: country });
            }
            entries.insert(country, label);
            by_label.insert(label, country);
        }
        if let Some(missing) = L1Label::ALL.into_iter().find(|l| !by_label.contains_key(l)) {
            return Err(MappingError::MissingLabel(missing));
        }
        Ok(MappingTable { entries })
    }

    /// Reads `country_code,label` CSV (header row required).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MappingError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| MappingError::Line { line, message: e.to_string() })?;
            if rec.len() != 2 {
                return Err(MappingError::Line { line, message: "expected 2 columns".into() });
            }
            let country =
                CountryCode::parse(&rec[0]).map_err(|e| MappingError::Line { line, message: e.to_string() })?;
            let label = rec[1].parse().map_err(|message| MappingError::Line { line, message })?;
            rows.push((country, label));
        }
        Self::from_entries(rows)
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("country_code,label\n");
        for (c, l) in &self.entries {
            s.push_str(&format!("{c},{l}\n"));
        }
        s
    }

    pub fn map(&self, country: CountryCode) -> Option<L1Label> {
        self.entries.get(&country).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (CountryCode, L1Label)> + '_ {
        self.entries.iter().map(|(c, l)| (*c, *l))
    }
}

/// Author-level outcome of checking a name-origin prediction against affiliations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Verified { country: CountryCode },
    NoIntersection,
    EnglishImmersionExcluded,
    CountryUnknown,
    PredictionFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedAuthor {
    pub author: AuthorRecord,
    pub verdict: Verdict,
    pub trace: Vec<String>,
}

impl VerifiedAuthor {
    pub fn verified_country(&self) -> Option<CountryCode> {
        match self.verdict {
            Verdict::Verified { country } => Some(country),
            _ => None,
        }
    }

    pub fn prediction_failed(author: &AuthorRecord, reason: &str) -> Self {
        VerifiedAuthor {
            author: author.clone(),
            verdict: Verdict::PredictionFailed,
            trace: vec![format!("name-origin prediction failed: {reason}")],
        }
    }
}

fn join_codes<'a>(codes: impl IntoIterator<Item = &'a CountryCode>) -> String {
    let v: Vec<&str> = codes.into_iter().map(CountryCode::as_str).collect();
    if v.is_empty() {
        "(none)".into()
    } else {
        v.join(", ")
    }
}

pub fn default_english_countries() -> BTreeSet<CountryCode> {
    ["US", "GB"].into_iter().map(CountryCode::from_static).collect()
}

/// Intersects the top-2 candidates with the author's affiliation countries.
///
/// The first candidate (in model order) found among the affiliations is chosen. A
/// non-English choice is excluded when the author also holds an affiliation in one of
/// `english_countries`.
pub fn verify_author(
    author: &AuthorRecord,
    pred: &OriginPrediction,
    english_countries: &BTreeSet<CountryCode>,
) -> VerifiedAuthor {
    let affiliations = &author.affiliation_countries;
    let mut trace = vec![
        format!("candidates: {}", join_codes(&pred.candidates)),
        format!("affiliations: {}", join_codes(affiliations)),
    ];
    let finish = |verdict, trace| VerifiedAuthor { author: author.clone(), verdict, trace };

    if affiliations.is_empty() {
        trace.push("no affiliation country known".into());
        return finish(Verdict::CountryUnknown, trace);
    }
    let hits: Vec<CountryCode> = pred.candidates.iter().copied().filter(|c| affiliations.contains(c)).collect();
    let Some(&chosen) = hits.first() else {
        trace.push("no candidate among affiliations".into());
        return finish(Verdict::NoIntersection, trace);
    };
    if hits.len() > 1 && hits[0] != hits[1] {
        trace.push(format!("tie-break: both candidates intersect, keeping first-ranked {chosen} over {}", hits[1]));
    }
    if !english_countries.contains(&chosen) {
        let english: Vec<&CountryCode> = affiliations.intersection(english_countries).collect();
        if !english.is_empty() {
            trace.push(format!(
                "english-immersion exclusion: {chosen} is non-English and affiliations include {}",
                join_codes(english)
            ));
            return finish(Verdict::EnglishImmersionExcluded, trace);
        }
    }
    trace.push(format!("verified {chosen}"));
    finish(Verdict::Verified { country: chosen }, trace)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum UnlabeledReason {
    TooManyAuthors { count: usize },
    KeyAuthorUnverified { position: usize },
    KeyAuthorDisagreement,
    UnmappedCountry { country: CountryCode },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consensus {
    Agreed { country: CountryCode, key_positions: Vec<usize> },
    Unlabeled(UnlabeledReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("{verified} verdicts for {authors} authors")]
    LengthMismatch { authors: usize, verified: usize },
    #[error("verdict {index} belongs to author position {position}")]
    PositionMismatch { index: usize, position: usize },
}

pub const MAX_AUTHORS: usize = 5;

/// First, second and last positions, clamped to the author count and deduplicated.
pub fn key_positions(author_count: usize) -> Vec<usize> {
    let mut keys: Vec<usize> =
        [0, 1, author_count.saturating_sub(1)].into_iter().filter(|&p| p < author_count).collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

pub fn paper_consensus(paper: &PaperRecord, verified: &[VerifiedAuthor]) -> Result<Consensus, AlignmentError> {
    if verified.len() != paper.authors.len() {
        return Err(AlignmentError::LengthMismatch { authors: paper.authors.len(), verified: verified.len() });
    }
    if let Some((index, v)) = verified.iter().enumerate().find(|(i, v)| v.author.position != *i) {
        return Err(AlignmentError::PositionMismatch { index, position: v.author.position });
    }
    let n = paper.authors.len();
    if n > MAX_AUTHORS {
        return Ok(Consensus::Unlabeled(UnlabeledReason::TooManyAuthors { count: n }));
    }
    let keys = key_positions(n);
    let mut agreed: Option<CountryCode> = None;
    let mut disagree = false;
    for &k in &keys {
        match verified[k].verified_country() {
            None => return Ok(Consensus::Unlabeled(UnlabeledReason::KeyAuthorUnverified { position: k })),
            Some(c) => match agreed {
                None => agreed = Some(c),
                Some(a) if a != c => disagree = true,
                Some(_) => {}
            },
        }
    }
    if disagree {
        return Ok(Consensus::Unlabeled(UnlabeledReason::KeyAuthorDisagreement));
    }
    Ok(Consensus::Agreed { country: agreed.expect("at least one key author"), key_positions: keys })
}

/// A paper with an assigned L1 label and the verdicts behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPaper {
    #[serde(flatten)]
    pub paper: PaperRecord,
    pub label: L1Label,
    pub country: CountryCode,
    pub era: Era,
    pub key_authors: Vec<usize>,
    pub provenance: Vec<VerifiedAuthor>,
}

/// Audit record for a paper that could not be labeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledPaper {
    pub paper_id: String,
    #[serde(flatten)]
    pub reason: UnlabeledReason,
    pub provenance: Vec<VerifiedAuthor>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelOutcome {
    Labeled(LabeledPaper),
    Unlabeled(UnlabeledPaper),
}

impl LabelOutcome {
    pub fn label(&self) -> Option<L1Label> {
        match self {
            LabelOutcome::Labeled(p) => Some(p.label),
            LabelOutcome::Unlabeled(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabelConfig {
    pub english_countries: BTreeSet<CountryCode>,
    pub mapping: MappingTable,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { english_countries: default_english_countries(), mapping: MappingTable::default() }
    }
}

/// Runs prediction, verification, consensus and mapping for one paper.
pub fn label_paper(
    paper: &PaperRecord,
    client: &dyn OriginClient,
    config: &LabelConfig,
) -> Result<LabelOutcome, OriginError> {
    let unlabeled = |reason, provenance| {
        LabelOutcome::Unlabeled(UnlabeledPaper { paper_id: paper.paper_id.clone(), reason, provenance })
    };
    if paper.authors.len() > MAX_AUTHORS {
        return Ok(unlabeled(UnlabeledReason::TooManyAuthors { count: paper.authors.len() }, Vec::new()));
    }
    let mut verified = Vec::with_capacity(paper.authors.len());
    for author in &paper.authors {
        let raw = client.predict(&author.display_name)?;
        verified.push(match parse_origin_response(&raw) {
            Ok(candidates) => {
                let pred = OriginPrediction { author_name: author.display_name.clone(), candidates, raw_response: raw };
                verify_author(author, &pred, &config.english_countries)
            }
            Err(e) => VerifiedAuthor::prediction_failed(author, &e.to_string()),
        });
    }
    let consensus = paper_consensus(paper, &verified).expect("verdicts built from the author list");
    Ok(match consensus {
        Consensus::Unlabeled(reason) => unlabeled(reason, verified),
        Consensus::Agreed { country, key_positions } => match config.mapping.map(country) {
            None => unlabeled(UnlabeledReason::UnmappedCountry { country }, verified),
            Some(label) => LabelOutcome::Labeled(LabeledPaper {
                era: Era::from_year(paper.year),
                paper: paper.clone(),
                label,
                country,
                key_authors: key_positions,
                provenance: verified,
            }),
        },
    })
}

/// Labels a batch, in input order. Papers are independent; the client serializes
/// its own network access.
pub fn label_papers(
    papers: &[PaperRecord],
    client: &dyn OriginClient,
    config: &LabelConfig,
    mode: Execution,
) -> Result<Vec<LabelOutcome>, OriginError> {
    par::try_map(mode, papers, |p| label_paper(p, client, config))
}
