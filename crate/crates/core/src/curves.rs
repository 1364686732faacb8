//! ROC and precision-recall curves over the full threshold range.
//!
//! A subject is triage-positive when `score >= threshold`. Every distinct
//! score is one operating point; tied scores collapse into a single point.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::ranks::midranks;
use crate::sample::{class_counts, descending_steps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    Pr,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        }
    }
}

/// `(x, y)` is `(FPR, TPR)` for ROC and `(recall, precision)` for PR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Curve {
    /// Trapezoidal area over the points.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) / 2.0)
            .sum()
    }

    /// Precision of a random classifier, `n_pos / (n_pos + n_neg)`.
    pub fn baseline_precision(&self) -> f64 {
        self.n_pos as f64 / (self.n_pos + self.n_neg) as f64
    }

    /// CSV with columns `kind,x,y,threshold`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["kind", "x", "y", "threshold"])?;
        for p in &self.points {
            w.write_record([
                self.kind.name().to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.threshold.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ROC curve from `(0, 0)` at threshold `+inf` to `(1, 1)` at the lowest score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Curve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push(CurvePoint { x: 0.0, y: 0.0, threshold: f64::INFINITY });
    for s in descending_steps(scores, labels) {
        points.push(CurvePoint {
            x: s.fp as f64 / n_neg as f64,
            y: s.tp as f64 / n_pos as f64,
            threshold: s.threshold,
        });
    }
    Ok(Curve { kind: CurveKind::Roc, points, n_pos, n_neg })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AucResult {
    pub estimate: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Mann-Whitney estimate of P(score_pos > score_neg) + P(tie) / 2,
/// computed from midranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<AucResult> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(AucResult { estimate: u / (n_pos as f64 * n_neg as f64), n_pos, n_neg })
}

/// Precision-recall curve.
///
/// Points are emitted only where recall increases, each carrying the
/// precision at the highest threshold reaching that recall. A leading
/// anchor at recall 0 (threshold `+inf`) repeats the precision of the first
/// point.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Curve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut points: Vec<CurvePoint> = Vec::new();
    let mut last_tp = 0;
    for s in descending_steps(scores, labels) {
        if s.tp == last_tp {
            continue;
        }
        last_tp = s.tp;
        let point = CurvePoint {
            x: s.tp as f64 / n_pos as f64,
            y: s.tp as f64 / (s.tp + s.fp) as f64,
            threshold: s.threshold,
        };
        if points.is_empty() {
            points.push(CurvePoint { x: 0.0, threshold: f64::INFINITY, ..point });
        }
        points.push(point);
    }
    Ok(Curve { kind: CurveKind::Pr, points, n_pos, n_neg })
}

/// Trapezoidal area under [`pr_curve`], anchor included.
pub fn prauc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(pr_curve(scores, labels)?.area())
}
