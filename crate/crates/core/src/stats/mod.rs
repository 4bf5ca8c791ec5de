//! Evaluation statistics: confusion matrices, per-class metrics and Fisher's exact test.

pub mod fisher;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Era;
use crate::labeling::L1Label;
use crate::prompts::{parse_label, ParsedLabel, Prediction};

pub use fisher::{
    compare_eras, fisher_exact_two_sided, fisher_sweep, reconstruct_counts, AccuracyCounts, FisherResult,
};
pub use report::{era_report, EraComparison, EraReport, EraSection};

/// Number of predicted columns: the eight labels plus the invalid bucket.
pub const PRED_COLUMNS: usize = 9;
pub const INVALID_COLUMN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no prediction records")]
    EmptyInput,
    #[error("records span more than one era ({0} and {1}); partition first")]
    MixedEras(Era, Era),
    #[error("table {0:?} has a zero row or column margin")]
    DegenerateMargins([[u64; 2]; 2]),
    #[error("invalid accuracy counts: {correct} correct of {total}")]
    InvalidCounts { correct: u64, total: u64 },
}

/// One evaluated item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub paper_id: String,
    pub era: Era,
    pub gold: L1Label,
    pub predicted: ParsedLabel,
}

/// Line format of prediction files produced by inference runners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionInput {
    pub paper_id: String,
    pub era: Era,
    pub gold: L1Label,
    pub raw_output: String,
}

impl From<PredictionInput> for PredictionRecord {
    fn from(p: PredictionInput) -> Self {
        PredictionRecord { predicted: parse_label(&p.raw_output), paper_id: p.paper_id, era: p.era, gold: p.gold }
    }
}

/// Gold rows over the eight labels; predicted columns are the eight labels then Invalid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; PRED_COLUMNS]; 8],
    pub total: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; PRED_COLUMNS]; 8]) -> Self {
        let total = counts.iter().flatten().sum();
        ConfusionMatrix { counts, total }
    }

    pub fn diag(&self, label: L1Label) -> u64 {
        self.counts[label.index()][label.index()]
    }

    pub fn row_sum(&self, gold: L1Label) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn col_sum(&self, col: usize) -> u64 {
        self.counts.iter().map(|r| r[col]).sum()
    }

    pub fn correct(&self) -> u64 {
        L1Label::ALL.iter().map(|&l| self.diag(l)).sum()
    }
}

fn column(p: Prediction) -> usize {
    p.label().map_or(INVALID_COLUMN, L1Label::index)
}

pub fn confusion_matrix(preds: &[PredictionRecord]) -> Result<ConfusionMatrix, StatsError> {
    let first = preds.first().ok_or(StatsError::EmptyInput)?;
    let mut counts = [[0u64; PRED_COLUMNS]; 8];
    for p in preds {
        if p.era != first.era {
            return Err(StatsError::MixedEras(first.era, p.era));
        }
        counts[p.gold.index()][column(p.predicted.value)] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: BTreeMap<L1Label, ClassMetrics>,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean over classes.
pub fn macro_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-class precision/recall/F1, accuracy and macro-F1. Invalid outputs count against
/// recall and accuracy (they sit in the gold row) but never as a predicted class.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let per_class: BTreeMap<L1Label, ClassMetrics> = L1Label::ALL
        .into_iter()
        .map(|l| {
            let d = cm.diag(l);
            let precision = ratio(d, cm.col_sum(l.index()));
            let support = cm.row_sum(l);
            let recall = ratio(d, support);
            (l, ClassMetrics { precision, recall, f1: f1_score(precision, recall), support })
        })
        .collect();
    let f1s: Vec<f64> = per_class.values().map(|m| m.f1).collect();
    MetricsReport { accuracy: ratio(cm.correct(), cm.total), macro_f1: macro_average(&f1s), per_class }
}
