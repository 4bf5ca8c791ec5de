//! Two-sided Fisher's exact test on 2×2 tables.
//!
//! With margins fixed, the top-left cell follows a hypergeometric law. The two-sided
//! p-value sums the point probabilities of every table no more likely than the observed
//! one, using a relative tolerance of 1e-7 so floating-point ties count as ties. Point
//! probabilities are evaluated in log space through `ln Γ`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::StatsError;
use crate::par::{self, Execution};

/// Relative slack when comparing point probabilities against the observed table.
pub const TIE_TOLERANCE: f64 = 1e-7;

fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `[[a, b], [c, d]]` → p-value in (0, 1].
pub fn fisher_exact_two_sided(table: [[u64; 2]; 2]) -> Result<f64, StatsError> {
    let [[a, b], [c, d]] = table;
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let col2 = b + d;
    if row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0 {
        return Err(StatsError::DegenerateMargins(table));
    }
    let n = row1 + row2;
    let ln_denominator = ln_choose(n, col1);
    let ln_point = |x: u64| ln_choose(row1, x) + ln_choose(row2, col1 - x) - ln_denominator;

    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let threshold = ln_point(a) + TIE_TOLERANCE.ln_1p();
    let mut p = 0.0;
    let mut excluded = false;
    for lp in (lo..=hi).map(ln_point) {
        if lp <= threshold {
            p += lp.exp();
        } else {
            excluded = true;
        }
    }
    // Every table at least as extreme: the whole distribution.
    if !excluded {
        return Ok(1.0);
    }
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Evaluates many tables, in input order.
pub fn fisher_sweep(tables: &[[[u64; 2]; 2]], mode: Execution) -> Vec<Result<f64, StatsError>> {
    par::map(mode, tables, |t| fisher_exact_two_sided(*t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCounts {
    pub correct: u64,
    pub total: u64,
}

impl AccuracyCounts {
    pub fn new(correct: u64, total: u64) -> Result<Self, StatsError> {
        if total == 0 || correct > total {
            return Err(StatsError::InvalidCounts { correct, total });
        }
        Ok(AccuracyCounts { correct, total })
    }

    /// `round(accuracy × total)` correct items.
    pub fn from_accuracy(accuracy: f64, total: u64) -> Result<Self, StatsError> {
        let correct = (accuracy * total as f64).round();
        if !(0.0..=total as f64).contains(&correct) {
            return Err(StatsError::InvalidCounts { correct: correct as u64, total });
        }
        Self::new(correct as u64, total)
    }

    pub fn wrong(&self) -> u64 {
        self.total - self.correct
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Every correct-count `c` with `|c / total − accuracy| ≤ tolerance`, ascending. More
/// than one entry means a reported (rounded) accuracy is ambiguous; none means it is
/// not reachable at that total.
pub fn reconstruct_counts(accuracy: f64, total: u64, tolerance: f64) -> Vec<u64> {
    (0..=total).filter(|&c| (c as f64 / total as f64 - accuracy).abs() <= tolerance + 1e-12).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub table: [[u64; 2]; 2],
    pub p_value: f64,
    pub alpha: f64,
    /// `p_value < alpha`, strictly.
    pub significant: bool,
}

/// Tests `[[correct_a, wrong_a], [correct_b, wrong_b]]`.
pub fn compare_eras(a: AccuracyCounts, b: AccuracyCounts, alpha: f64) -> Result<FisherResult, StatsError> {
    let a = AccuracyCounts::new(a.correct, a.total)?;
    let b = AccuracyCounts::new(b.correct, b.total)?;
    let table = [[a.correct, a.wrong()], [b.correct, b.wrong()]];
    let p_value = fisher_exact_two_sided(table)?;
    Ok(FisherResult { table, p_value, alpha, significant: p_value < alpha })
}
