//! Era partitioning and balanced corpus construction.
//!
//! All randomness comes from ChaCha8 seeded with `SamplingConfig::rng_seed`, one stream
//! per label (training) or per (era, label) cell (evaluation), drawn over a pool sorted
//! by `paper_id`. Output is therefore a pure function of (pool, config), independent of
//! input order and of other labels' pools.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{L1Label, LabeledPaper};
use crate::text::content_hash;

/// Technological period of a paper, split at the 2016 and 2023 milestones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Era {
    PreNn,
    PreLlm,
    PostLlm,
}

/// Last year covered by the post-LLM era as collected; later years still map to
/// [`Era::PostLlm`] but are flagged.
pub const LAST_COLLECTED_YEAR: i32 = 2025;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EraAssignment {
    pub era: Era,
    pub beyond_collected_range: bool,
}

impl Era {
    pub const ALL: [Era; 3] = [Era::PreNn, Era::PreLlm, Era::PostLlm];

    pub fn from_year(year: i32) -> Era {
        match year {
            ..=2015 => Era::PreNn,
            2016..=2022 => Era::PreLlm,
            _ => Era::PostLlm,
        }
    }

    pub fn assign(year: i32) -> EraAssignment {
        EraAssignment { era: Era::from_year(year), beyond_collected_range: year > LAST_COLLECTED_YEAR }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Era::PreNn => "pre_nn",
            Era::PreLlm => "pre_llm",
            Era::PostLlm => "post_llm",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Era {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Era {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Era::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| format!("unknown era {s:?}"))
    }
}

pub fn assign_era(year: i32) -> Era {
    let a = Era::assign(year);
    if a.beyond_collected_range {
        log::warn!("year {year} is past {LAST_COLLECTED_YEAR}; treating as post_llm");
    }
    a.era
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub per_language_train: usize,
    pub per_cell_eval: usize,
    pub per_year_cap: usize,
    /// Label-specific caps; labels not listed use `per_year_cap`.
    pub per_year_cap_overrides: BTreeMap<L1Label, usize>,
    pub rng_seed: u64,
    pub allow_duplication: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            per_language_train: 200,
            per_cell_eval: 50,
            per_year_cap: 20,
            per_year_cap_overrides: BTreeMap::new(),
            rng_seed: 0x5eed,
            allow_duplication: true,
        }
    }
}

impl SamplingConfig {
    pub fn cap_for(&self, label: L1Label) -> usize {
        self.per_year_cap_overrides.get(&label).copied().unwrap_or(self.per_year_cap)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let zero = |what: &str| Err(CorpusError::InvalidConfig(format!("{what} must be > 0")));
        if self.per_language_train == 0 {
            return zero("per_language_train");
        }
        if self.per_cell_eval == 0 {
            return zero("per_cell_eval");
        }
        if self.per_year_cap == 0 || self.per_year_cap_overrides.values().any(|&c| c == 0) {
            return zero("per_year_cap");
        }
        Ok(())
    }
}

/// Minimal view of a labeled paper needed for sampling. Deserializes from labeled-paper
/// JSONL (extra fields are ignored).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolPaper {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: i32,
    pub label: L1Label,
}

impl From<&LabeledPaper> for PoolPaper {
    fn from(p: &LabeledPaper) -> Self {
        PoolPaper {
            paper_id: p.paper.paper_id.clone(),
            title: p.paper.title.clone(),
            abstract_text: p.paper.abstract_text.clone(),
            year: p.paper.year,
            label: p.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub paper_id: String,
    pub era: Era,
    pub label: L1Label,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub is_duplicate: bool,
}

impl CorpusRow {
    fn from_pool(p: &PoolPaper, is_duplicate: bool) -> Self {
        CorpusRow {
            paper_id: p.paper_id.clone(),
            era: Era::from_year(p.year),
            label: p.label,
            title: p.title.clone(),
            abstract_text: p.abstract_text.clone(),
            is_duplicate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub unique_count: usize,
    pub duplicated_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Id,
    Content,
    IdAndContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupMatch {
    pub train_paper_id: String,
    pub eval_paper_id: String,
    pub matched_by: MatchKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub kind: CorpusKind,
    pub seed: u64,
    pub config: SamplingConfig,
    /// Keyed `era/label` for evaluation corpora and `label` for training corpora.
    pub cells: BTreeMap<String, CellStats>,
    /// Per-label year histogram of the selection (training only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub years: BTreeMap<String, BTreeMap<i32, usize>>,
    /// Pool ids seen more than once; only the first occurrence was used.
    pub pool_duplicate_ids: Vec<String>,
    pub dedup_report: Vec<DedupMatch>,
    pub total_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub label: L1Label,
    pub target: usize,
    pub achievable: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("insufficient pool: {}", describe_shortfalls(.0))]
    InsufficientPool(Vec<Shortfall>),
    #[error("evaluation cells with no papers: {}", .0.join(", "))]
    EmptyCell(Vec<String>),
    #[error("cells short of unique papers with duplication disabled: {}", .0.join(", "))]
    ShortCell(Vec<String>),
}

fn describe_shortfalls(s: &[Shortfall]) -> String {
    s.iter()
        .map(|s| format!("{} can reach {} of {} under the year cap", s.label, s.achievable, s.target))
        .collect::<Vec<_>>()
        .join("; ")
}

fn cell_key(era: Era, label: L1Label) -> String {
    format!("{era}/{label}")
}

/// Pool sorted by id with repeated ids dropped (first occurrence wins).
fn canonical_pool(pool: &[PoolPaper]) -> (Vec<&PoolPaper>, Vec<String>) {
    let mut first: BTreeMap<&str, &PoolPaper> = BTreeMap::new();
    let mut dups = BTreeSet::new();
    for p in pool {
        if first.contains_key(p.paper_id.as_str()) {
            dups.insert(p.paper_id.clone());
        } else {
            first.insert(&p.paper_id, p);
        }
    }
    (first.into_values().collect(), dups.into_iter().collect())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Balanced training sample: `per_language_train` papers per label, no year of a label
/// contributing more than that label's cap.
pub fn sample_training(
    pool: &[PoolPaper],
    cfg: &SamplingConfig,
) -> Result<(Vec<CorpusRow>, CorpusManifest), CorpusError> {
    cfg.validate()?;
    let (pool, pool_duplicate_ids) = canonical_pool(pool);
    let target = cfg.per_language_train;
    let mut rows = Vec::with_capacity(target * L1Label::ALL.len());
    let mut shortfalls = Vec::new();
    let mut cells = BTreeMap::new();
    let mut years = BTreeMap::new();

    for label in L1Label::ALL {
        let members: Vec<&PoolPaper> = pool.iter().copied().filter(|p| p.label == label).collect();
        let cap = cfg.cap_for(label);
        let mut per_year: BTreeMap<i32, usize> = BTreeMap::new();
        for p in &members {
            *per_year.entry(p.year).or_default() += 1;
        }
        let achievable: usize = per_year.values().map(|&n| n.min(cap)).sum();
        if achievable < target {
            shortfalls.push(Shortfall { label, target, achievable });
            continue;
        }
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut stream_rng(cfg.rng_seed, label.index() as u64));
        let mut taken: BTreeMap<i32, usize> = BTreeMap::new();
        let mut chosen = Vec::with_capacity(target);
        for i in order {
            if chosen.len() == target {
                break;
            }
            let used = taken.entry(members[i].year).or_default();
            if *used < cap {
                *used += 1;
                chosen.push(members[i]);
            }
        }
        debug_assert_eq!(chosen.len(), target);
        chosen.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
        rows.extend(chosen.iter().map(|p| CorpusRow::from_pool(p, false)));
        cells.insert(label.to_string(), CellStats { unique_count: target, duplicated_count: 0 });
        years.insert(label.to_string(), taken);
    }
    if !shortfalls.is_empty() {
        return Err(CorpusError::InsufficientPool(shortfalls));
    }
    let manifest = CorpusManifest {
        kind: CorpusKind::Train,
        seed: cfg.rng_seed,
        config: cfg.clone(),
        cells,
        years,
        pool_duplicate_ids,
        dedup_report: Vec::new(),
        total_rows: rows.len(),
    };
    Ok((rows, manifest))
}

/// Evaluation corpus with exactly `per_cell_eval` rows in every (era, label) cell.
/// Cells short of unique papers are topped up by drawing members uniformly with
/// replacement; those rows carry `is_duplicate = true`.
pub fn build_eval_cells(
    pool: &[PoolPaper],
    cfg: &SamplingConfig,
) -> Result<(Vec<CorpusRow>, CorpusManifest), CorpusError> {
    cfg.validate()?;
    let (pool, pool_duplicate_ids) = canonical_pool(pool);
    let k = cfg.per_cell_eval;
    let mut by_cell: BTreeMap<(Era, L1Label), Vec<&PoolPaper>> = BTreeMap::new();
    for p in pool {
        by_cell.entry((Era::from_year(p.year), p.label)).or_default().push(p);
    }
    let mut empty = Vec::new();
    let mut short = Vec::new();
    let mut rows = Vec::with_capacity(k * 24);
    let mut cells = BTreeMap::new();
    for era in Era::ALL {
        for label in L1Label::ALL {
            let key = cell_key(era, label);
            let members = by_cell.get(&(era, label)).map(Vec::as_slice).unwrap_or(&[]);
            if members.is_empty() {
                empty.push(key);
                continue;
            }
            if members.len() < k && !cfg.allow_duplication {
                short.push(key);
                continue;
            }
            let stream = 1_000 + (era.index() * L1Label::ALL.len() + label.index()) as u64;
            let mut rng = stream_rng(cfg.rng_seed, stream);
            let stats = if members.len() >= k {
                let mut chosen: Vec<&PoolPaper> = members.choose_multiple(&mut rng, k).copied().collect();
                chosen.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
                rows.extend(chosen.iter().map(|p| CorpusRow::from_pool(p, false)));
                CellStats { unique_count: k, duplicated_count: 0 }
            } else {
                rows.extend(members.iter().map(|p| CorpusRow::from_pool(p, false)));
                let extra = k - members.len();
                for _ in 0..extra {
                    let p = members[rng.gen_range(0..members.len())];
                    rows.push(CorpusRow::from_pool(p, true));
                }
                CellStats { unique_count: members.len(), duplicated_count: extra }
            };
            cells.insert(key, stats);
        }
    }
    if !empty.is_empty() {
        return Err(CorpusError::EmptyCell(empty));
    }
    if !short.is_empty() {
        return Err(CorpusError::ShortCell(short));
    }
    let manifest = CorpusManifest {
        kind: CorpusKind::Eval,
        seed: cfg.rng_seed,
        config: cfg.clone(),
        cells,
        years: BTreeMap::new(),
        pool_duplicate_ids,
        dedup_report: Vec::new(),
        total_rows: rows.len(),
    };
    Ok((rows, manifest))
}

/// Removes from `train` every row that shares a paper_id or a normalized
/// (title, abstract) hash with any evaluation row.
pub fn cross_dedup(train: &[CorpusRow], eval: &[CorpusRow]) -> (Vec<CorpusRow>, Vec<DedupMatch>) {
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    let mut by_hash: HashMap<String, &str> = HashMap::new();
    for e in eval {
        by_id.entry(&e.paper_id).or_insert(&e.paper_id);
        by_hash.entry(content_hash(&e.title, &e.abstract_text)).or_insert(&e.paper_id);
    }
    let mut kept = Vec::with_capacity(train.len());
    let mut report = Vec::new();
    for t in train {
        let id_hit = by_id.get(t.paper_id.as_str()).copied();
        let hash_hit = by_hash.get(&content_hash(&t.title, &t.abstract_text)).copied();
        let (eval_id, matched_by) = match (id_hit, hash_hit) {
            (None, None) => {
                kept.push(t.clone());
                continue;
            }
            (Some(a), Some(b)) if a == b => (a, MatchKind::IdAndContent),
            (Some(a), _) => (a, MatchKind::Id),
            (None, Some(b)) => (b, MatchKind::Content),
        };
        report.push(DedupMatch { train_paper_id: t.paper_id.clone(), eval_paper_id: eval_id.to_string(), matched_by });
    }
    (kept, report)
}

pub fn write_rows<W: Write>(mut w: W, rows: &[CorpusRow]) -> io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
