//! Shared input validation and the descending-threshold sweep used by the
//! curve, threshold and framework modules.

use crate::error::{Error, Result};

/// Checks a (scores, labels) pair and returns `(n_pos, n_neg)`.
pub(crate) fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    Ok((n_pos, n_neg))
}

/// Cumulative counts with `score >= threshold` at one distinct score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Step {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
}

/// One step per distinct score, from the highest score down. Tied scores
/// collapse into a single step.
pub(crate) fn descending_steps(scores: &[f64], labels: &[bool]) -> Vec<Step> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut steps: Vec<Step> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push(Step { threshold: t, tp, fp });
    }
    steps
}

/// Scores split by label, each sorted ascending.
pub(crate) struct SortedClasses {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl SortedClasses {
    pub fn new(scores: &[f64], labels: &[bool]) -> Self {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&s, &l) in scores.iter().zip(labels) {
            if l {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        SortedClasses { pos, neg }
    }

    /// `(tp, fp)` under `score >= threshold`.
    pub fn counts_at(&self, threshold: f64) -> (usize, usize) {
        let above = |v: &[f64]| v.len() - v.partition_point(|&s| s < threshold);
        (above(&self.pos), above(&self.neg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_collapse_ties() {
        let steps = descending_steps(&[0.5, 0.5, 0.2], &[true, false, true]);
        assert_eq!(
            steps,
            vec![
                Step { threshold: 0.5, tp: 1, fp: 1 },
                Step { threshold: 0.2, tp: 2, fp: 1 },
            ]
        );
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            class_counts(&[0.1], &[true, false]),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            class_counts(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(
            class_counts(&[0.1, f64::NAN], &[true, false]),
            Err(Error::NonFiniteScore(1))
        ));
    }

    #[test]
    fn sorted_counts() {
        let c = SortedClasses::new(&[0.9, 0.3, 0.6, 0.1], &[true, true, false, false]);
        assert_eq!(c.counts_at(0.5), (1, 1));
        assert_eq!(c.counts_at(0.0), (2, 2));
        assert_eq!(c.counts_at(0.95), (0, 0));
    }
}
