//! Per-era evaluation report with pairwise era comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    compare_eras, confusion_matrix, metrics, AccuracyCounts, ConfusionMatrix, FisherResult, MetricsReport,
    PredictionRecord, StatsError, INVALID_COLUMN,
};
use crate::corpus::Era;
use crate::labeling::L1Label;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraSection {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraComparison {
    pub first: Era,
    pub second: Era,
    #[serde(flatten)]
    pub result: FisherResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraReport {
    pub alpha: f64,
    /// Correct / total per era; the input to the comparisons.
    pub counts: BTreeMap<Era, AccuracyCounts>,
    pub eras: BTreeMap<Era, EraSection>,
    pub comparisons: Vec<EraComparison>,
}

/// Builds confusion matrices and metrics for every era present, then runs Fisher's
/// exact test on each pair of eras (in era order).
pub fn era_report(preds: &[PredictionRecord], alpha: f64, mode: Execution) -> Result<EraReport, StatsError> {
    let mut by_era: BTreeMap<Era, Vec<PredictionRecord>> = BTreeMap::new();
    for p in preds {
        by_era.entry(p.era).or_default().push(p.clone());
    }
    if by_era.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let groups: Vec<(Era, Vec<PredictionRecord>)> = by_era.into_iter().collect();
    let sections = par::try_map(mode, &groups, |(era, recs)| {
        let cm = confusion_matrix(recs)?;
        Ok::<_, StatsError>((*era, EraSection { metrics: metrics(&cm), confusion: cm }))
    })?;
    let eras: BTreeMap<Era, EraSection> = sections.into_iter().collect();
    let counts: BTreeMap<Era, AccuracyCounts> = eras
        .iter()
        .map(|(e, s)| (*e, AccuracyCounts { correct: s.confusion.correct(), total: s.confusion.total }))
        .collect();
    let comparisons = compare_all(&counts, alpha)?;
    Ok(EraReport { alpha, counts, eras, comparisons })
}

impl EraReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `era,label,precision,recall,f1,support` rows, then `accuracy` and `macro_f1` rows
    /// per era with the value in the `f1` column.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("era,label,precision,recall,f1,support\n");
        for (era, sec) in &self.eras {
            for (label, m) in &sec.metrics.per_class {
                writeln!(s, "{era},{label},{:.6},{:.6},{:.6},{}", m.precision, m.recall, m.f1, m.support).unwrap();
            }
            writeln!(s, "{era},accuracy,,,{:.6},{}", sec.metrics.accuracy, sec.confusion.total).unwrap();
            writeln!(s, "{era},macro_f1,,,{:.6},{}", sec.metrics.macro_f1, sec.confusion.total).unwrap();
        }
        s
    }

    pub fn confusion_csv(&self, era: Era) -> Option<String> {
        let cm = &self.eras.get(&era)?.confusion;
        let mut s = String::from("gold");
        for l in L1Label::ALL {
            write!(s, ",{l}").unwrap();
        }
        s.push_str(",invalid\n");
        for l in L1Label::ALL {
            s.push_str(l.as_str());
            for c in 0..=INVALID_COLUMN {
                write!(s, ",{}", cm.counts[l.index()][c]).unwrap();
            }
            s.push('\n');
        }
        Some(s)
    }

    pub fn comparisons_csv(&self) -> String {
        comparisons_csv(&self.comparisons)
    }
}

pub fn comparisons_csv(comparisons: &[EraComparison]) -> String {
    let mut s =
        String::from("first,second,correct_first,wrong_first,correct_second,wrong_second,p_value,alpha,significant\n");
    for c in comparisons {
        let [[a, b], [x, y]] = c.result.table;
        writeln!(
            s,
            "{},{},{a},{b},{x},{y},{:.6e},{},{}",
            c.first, c.second, c.result.p_value, c.result.alpha, c.result.significant
        )
        .unwrap();
    }
    s
}

/// Pairwise comparisons from per-era counts alone.
pub fn compare_all(counts: &BTreeMap<Era, AccuracyCounts>, alpha: f64) -> Result<Vec<EraComparison>, StatsError> {
    let eras: Vec<Era> = counts.keys().copied().collect();
    let mut out = Vec::new();
    for (i, &first) in eras.iter().enumerate() {
        for &second in &eras[i + 1..] {
            out.push(EraComparison { first, second, result: compare_eras(counts[&first], counts[&second], alpha)? });
        }
    }
    Ok(out)
}
