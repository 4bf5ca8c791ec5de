//! Toolkit for studying native-language (L1) signals in scholarly English.
//!
//! The crate covers the whole apparatus around an NLI experiment:
//!
//! - [`ingest`]: OpenAlex and JSONL dump ingestion with an on-disk response cache
//! - [`labeling`]: name-origin prediction, affiliation verification, key-author
//!   consensus and country to language mapping
//! - [`corpus`]: era assignment, capped training samples, balanced evaluation cells
//!   and cross-corpus deduplication
//! - [`prompts`]: byte-stable prompt payloads and closed-set label parsing
//! - [`stats`]: confusion matrices, per-class metrics, and two-sided Fisher's exact tests
//! - [`pipeline`]: file-based stages with manifests, driven by the `l1drift` binary
//!
//! Batch work (labeling many papers, evaluating eras, sweeping Fisher tables) runs on
//! rayon when the `parallel` feature is enabled and falls back to plain iterators
//! otherwise; see [`par::Execution`].

pub mod corpus;
pub mod ingest;
pub mod labeling;
pub mod par;
pub mod pipeline;
pub mod prompts;
pub mod stats;
pub mod text;

pub use corpus::{CorpusManifest, CorpusRow, Era, SamplingConfig};
pub use ingest::{AuthorRecord, CountryCode, PaperRecord};
pub use labeling::{L1Label, LabeledPaper, Verdict, VerifiedAuthor};
pub use prompts::{ParsedLabel, PromptBundle, Regime};
pub use stats::{ConfusionMatrix, FisherResult, MetricsReport};
