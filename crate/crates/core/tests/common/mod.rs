#![allow(dead_code)]

pub mod published;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use l1drift::corpus::PoolPaper;
use l1drift::labeling::origin::{OriginClient, OriginError};
use l1drift::{CountryCode, Era, L1Label};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Prints one result line and hands the verdict back.
pub fn report(criterion: &str, ok: bool, detail: impl AsRef<str>) -> bool {
    println!("{} {criterion}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    ok
}

/// Origin client over a fixed map that counts how often it is asked.
#[derive(Default)]
pub struct CountingClient {
    pub responses: BTreeMap<String, String>,
    pub calls: AtomicUsize,
}

impl CountingClient {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        CountingClient { responses, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl OriginClient for CountingClient {
    fn predict(&self, name: &str) -> Result<String, OriginError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.responses.get(name).cloned().ok_or_else(|| OriginError::MissingStub(name.into()))
    }
}

pub fn cc(s: &str) -> CountryCode {
    CountryCode::parse(s).unwrap()
}

pub fn country_set(codes: &[&str]) -> BTreeSet<CountryCode> {
    codes.iter().map(|c| cc(c)).collect()
}

fn era_years(era: Era) -> &'static [i32] {
    match era {
        Era::PreNn => &[2005, 2008, 2010, 2012, 2013, 2014, 2015],
        Era::PreLlm => &[2016, 2017, 2018, 2019, 2020, 2021, 2022],
        Era::PostLlm => &[2023, 2024, 2025],
    }
}

/// Unique papers per (era, label) cell of the synthetic evaluation pool. Mixes cells
/// above, at and below the 50-row target, including a single-paper cell.
pub fn eval_cell_size(era: Era, label: L1Label) -> usize {
    const SIZES: [usize; 8] = [80, 50, 12, 49, 1, 120, 37, 60];
    SIZES[(label.index() + 3 * era.index()) % SIZES.len()]
}

pub fn eval_pool() -> Vec<PoolPaper> {
    let mut pool = Vec::new();
    for era in Era::ALL {
        let years = era_years(era);
        for label in L1Label::ALL {
            for i in 0..eval_cell_size(era, label) {
                pool.push(PoolPaper {
                    paper_id: format!("E-{era}-{label}-{i:03}"),
                    title: format!("Evaluation study {i} on {label} in {era}"),
                    abstract_text: format!("We describe experiment {i} for the {label} group during {era}."),
                    year: years[i % years.len()],
                    label,
                });
            }
        }
    }
    pool
}

/// The evaluation paper whose content is replanted in the training pool. Its cell is
/// short, so every member is selected.
pub const PLANTED_EVAL_ID: &str = "E-pre_nn-french-003";
pub const PLANTED_TRAIN_ID: &str = "T-french-2014-007";

/// Training pool: ten years per label. French has exactly 20 papers a year so its
/// sample (and the planted paper) is forced; German has one 60-paper year that the
/// cap must cut; other labels have 25 a year.
pub fn train_pool() -> Vec<PoolPaper> {
    let planted = eval_pool().into_iter().find(|p| p.paper_id == PLANTED_EVAL_ID).unwrap();
    assert_eq!(eval_cell_size(Era::PreNn, L1Label::French), 12);
    let mut pool = Vec::new();
    for label in L1Label::ALL {
        for year in 2010..2020 {
            let n = match (label, year) {
                (L1Label::French, _) => 20,
                (L1Label::German, 2019) => 60,
                (L1Label::German, _) => 20,
                _ => 25,
            };
            for i in 0..n {
                let paper_id = format!("T-{label}-{year}-{i:03}");
                let (title, abstract_text) = if paper_id == PLANTED_TRAIN_ID {
                    // Same content up to case and whitespace.
                    (planted.title.to_uppercase(), format!("  {}\n", planted.abstract_text.replace(' ', "  ")))
                } else {
                    (
                        format!("Training study {i} on {label} from {year}"),
                        format!("Training abstract {i} for {label} in {year}."),
                    )
                };
                pool.push(PoolPaper { paper_id, title, abstract_text, year, label });
            }
        }
    }
    pool
}

pub fn write_jsonl<T: serde::Serialize>(path: &std::path::Path, items: &[T]) {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
