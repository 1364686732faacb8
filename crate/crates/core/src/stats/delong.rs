//! DeLong structural-component inference for the AUC.
//!
//! Each positive subject gets a placement value: the fraction of negatives
//! it outscores, ties credited one half. Each negative gets the fraction of
//! positives that outscore it. Both sets average to the AUC, and their
//! sample (co)variances give the variance of the AUC and of differences
//! between correlated AUCs.

use serde::Serialize;

use super::normal::{two_sided_p, z_for_level};
use super::{ConfidenceInterval, TestMethod, TestResult};
use crate::error::{Error, Result};
use crate::ranks::midranks;
use crate::sample::class_counts;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placements {
    pub auc: f64,
    /// One value per positive subject, in input order.
    pub pos: Vec<f64>,
    /// One value per negative subject, in input order.
    pub neg: Vec<f64>,
}

impl Placements {
    /// `S10 / n_pos + S01 / n_neg`.
    pub fn variance(&self) -> f64 {
        covariance(&self.pos, &self.pos) / self.pos.len() as f64
            + covariance(&self.neg, &self.neg) / self.neg.len() as f64
    }

    fn covariance_with(&self, other: &Placements) -> f64 {
        covariance(&self.pos, &other.pos) / self.pos.len() as f64
            + covariance(&self.neg, &other.neg) / self.neg.len() as f64
    }
}

/// Sample covariance with `n - 1` in the denominator.
fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

fn check_delong(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::InvalidCounts(format!(
            "DeLong needs at least 2 positives and 2 negatives, got {n_pos} and {n_neg}"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Reference O(n_pos * n_neg) placement computation.
pub fn naive_auc_kernel(scores: &[f64], labels: &[bool]) -> Result<Placements> {
    let (n_pos, n_neg) = check_delong(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let psi = |x: f64, y: f64| {
        if x > y {
            1.0
        } else if x == y {
            0.5
        } else {
            0.0
        }
    };
    let v10: Vec<f64> = pos
        .iter()
        .map(|&x| neg.iter().map(|&y| psi(x, y)).sum::<f64>() / n_neg as f64)
        .collect();
    let v01: Vec<f64> = neg
        .iter()
        .map(|&y| pos.iter().map(|&x| psi(x, y)).sum::<f64>() / n_pos as f64)
        .collect();
    let auc = v10.iter().sum::<f64>() / n_pos as f64;
    Ok(Placements { auc, pos: v10, neg: v01 })
}

/// O(n log n) placements from midranks.
///
/// For a positive, `rank_all - rank_within_positives` counts the negatives
/// below it with ties credited one half; negatives mirror that.
pub fn fast_auc_kernel(scores: &[f64], labels: &[bool]) -> Result<Placements> {
    let (n_pos, n_neg) = check_delong(scores, labels)?;
    let mut pos = Vec::with_capacity(n_pos);
    let mut neg = Vec::with_capacity(n_neg);
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    let all = midranks(scores);
    let within_pos = midranks(&pos);
    let within_neg = midranks(&neg);

    let (mut ip, mut ineg) = (0, 0);
    let mut v10 = Vec::with_capacity(n_pos);
    let mut v01 = Vec::with_capacity(n_neg);
    // half-integer counts, summed exactly before the single division
    let mut wins = 0.0;
    for (r, &l) in all.iter().zip(labels) {
        if l {
            let below = r - within_pos[ip];
            wins += below;
            v10.push(below / n_neg as f64);
            ip += 1;
        } else {
            v01.push(1.0 - (r - within_neg[ineg]) / n_pos as f64);
            ineg += 1;
        }
    }
    let auc = wins / (n_pos as f64 * n_neg as f64);
    Ok(Placements { auc, pos: v10, neg: v01 })
}

/// DeLong variance of the empirical AUC.
pub fn delong_variance(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(fast_auc_kernel(scores, labels)?.variance())
}

/// AUC ± z·√V, truncated to `[0, 1]`. A zero variance yields a zero-width
/// interval.
pub fn delong_ci(scores: &[f64], labels: &[bool], level: f64) -> Result<ConfidenceInterval> {
    let z = z_for_level(level)?;
    let p = fast_auc_kernel(scores, labels)?;
    let half = z * p.variance().max(0.0).sqrt();
    Ok(ConfidenceInterval::around(p.auc, half, level, 0.0, 1.0))
}

fn z_test(diff: f64, var: f64, method: TestMethod) -> TestResult {
    if var > 0.0 {
        let z = diff / var.sqrt();
        return TestResult { statistic: z, p_value: two_sided_p(z), method, degenerate: false };
    }
    if diff == 0.0 {
        TestResult { statistic: 0.0, p_value: 1.0, method, degenerate: true }
    } else {
        TestResult {
            statistic: diff.signum() * f64::INFINITY,
            p_value: 0.0,
            method,
            degenerate: true,
        }
    }
}

/// Two correlated AUCs measured on the same subjects.
pub fn delong_paired(scores_a: &[f64], scores_b: &[f64], labels: &[bool]) -> Result<TestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::LengthMismatch(scores_a.len(), scores_b.len()));
    }
    let a = fast_auc_kernel(scores_a, labels)?;
    let b = fast_auc_kernel(scores_b, labels)?;
    let var = a.variance() + b.variance() - 2.0 * a.covariance_with(&b);
    Ok(z_test(a.auc - b.auc, var, TestMethod::DelongPaired))
}

/// Two AUCs from disjoint cohorts; the variance of the difference is the
/// sum of the two DeLong variances.
pub fn delong_unpaired(
    (scores_a, labels_a): (&[f64], &[bool]),
    (scores_b, labels_b): (&[f64], &[bool]),
) -> Result<TestResult> {
    let a = fast_auc_kernel(scores_a, labels_a)?;
    let b = fast_auc_kernel(scores_b, labels_b)?;
    Ok(z_test(a.auc - b.auc, a.variance() + b.variance(), TestMethod::DelongUnpaired))
}
