//! Operating points, threshold matching, TPP checks and the human-vs-AI
//! comparison.

use std::io::Write;

use serde::Serialize;

use crate::cohort::{radiologist_binary, BinaryClassification, Cohort};
use crate::error::{Error, Result};
use crate::sample::{class_counts, descending_steps};
use crate::stats::{
    mcnemar, wilson_ci, z_for_level, ConfidenceInterval, TestResult,
    MCNEMAR_EXACT_BELOW,
};

/// Minimum triage sensitivity in the WHO target product profile.
pub const TPP_SENSITIVITY: f64 = 0.90;
/// Minimum triage specificity in the WHO target product profile.
pub const TPP_SPECIFICITY: f64 = 0.70;

/// Confusion matrix and derived metrics at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingPoint {
    /// `NaN` for operating points not derived from a score threshold.
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub sensitivity: ConfidenceInterval,
    pub specificity: ConfidenceInterval,
    /// `None` when nothing is called positive.
    pub ppv: Option<ConfidenceInterval>,
    /// `None` when nothing is called negative.
    pub npv: Option<ConfidenceInterval>,
    /// The requested target could not be met; this is the closest point.
    pub approximate: bool,
}

impl OperatingPoint {
    pub fn from_counts(threshold: f64, tp: u64, fp: u64, tn: u64, fn_: u64, level: f64) -> Result<Self> {
        if tp + fn_ == 0 || fp + tn == 0 {
            return Err(Error::DegenerateLabels);
        }
        let opt = |k: u64, n: u64| if n == 0 { Ok(None) } else { wilson_ci(k, n, level).map(Some) };
        Ok(OperatingPoint {
            threshold,
            tp,
            fp,
            tn,
            fn_,
            sensitivity: wilson_ci(tp, tp + fn_, level)?,
            specificity: wilson_ci(tn, fp + tn, level)?,
            ppv: opt(tp, tp + fp)?,
            npv: opt(tn, tn + fn_)?,
            approximate: false,
        })
    }

    pub fn n_pos(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn n_neg(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn n(&self) -> u64 {
        self.n_pos() + self.n_neg()
    }
}

/// Operating point of a fixed set of binary calls (e.g. a human reader).
pub fn confusion_from_calls(calls: &[bool], labels: &[bool], level: f64) -> Result<OperatingPoint> {
    if calls.len() != labels.len() {
        return Err(Error::LengthMismatch(calls.len(), labels.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&c, &l) in calls.iter().zip(labels) {
        match (c, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    OperatingPoint::from_counts(f64::NAN, tp, fp, tn, fn_, level)
}

/// Counts under `score >= threshold`, with Wilson intervals.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64, level: f64) -> Result<OperatingPoint> {
    class_counts(scores, labels)?;
    let calls: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let mut p = confusion_from_calls(&calls, labels, level)?;
    p.threshold = threshold;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Sensitivity,
    Specificity,
}

/// Threshold matching with floor semantics.
///
/// For `Sensitivity` this is the largest observed score whose sensitivity
/// is at least `target`, which maximizes specificity under that floor. For
/// `Specificity` it is the smallest observed score whose specificity is at
/// least `target`. When no observed score meets the floor the point with
/// the best achievable value is returned with `approximate` set.
pub fn match_operating_point(
    scores: &[f64],
    labels: &[bool],
    target: f64,
    kind: MatchKind,
    level: f64,
) -> Result<OperatingPoint> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidArgument(format!("target {target} is not in [0, 1]")));
    }
    let steps = descending_steps(scores, labels);
    let (step, approximate) = match kind {
        MatchKind::Sensitivity => {
            match steps.iter().find(|s| s.tp as f64 / n_pos as f64 >= target) {
                Some(s) => (*s, false),
                None => (*steps.last().expect("non-empty"), true),
            }
        }
        MatchKind::Specificity => {
            let spec = |fp: usize| (n_neg - fp) as f64 / n_neg as f64;
            match steps.iter().rev().find(|s| spec(s.fp) >= target) {
                Some(s) => (*s, false),
                None => (steps[0], true),
            }
        }
    };
    let (tp, fp) = (step.tp as u64, step.fp as u64);
    let mut p = OperatingPoint::from_counts(
        step.threshold,
        tp,
        fp,
        n_neg as u64 - fp,
        n_pos as u64 - tp,
        level,
    )?;
    p.approximate = approximate;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TppVerdict {
    pub met: bool,
    pub point_at_sens90: OperatingPoint,
    pub point_at_spec70: OperatingPoint,
}

/// Checks the triage target product profile (sensitivity >= 90% with
/// specificity >= 70%) by matching each target in turn.
pub fn tpp_check(scores: &[f64], labels: &[bool], level: f64) -> Result<TppVerdict> {
    let at_sens = match_operating_point(scores, labels, TPP_SENSITIVITY, MatchKind::Sensitivity, level)?;
    let at_spec = match_operating_point(scores, labels, TPP_SPECIFICITY, MatchKind::Specificity, level)?;
    Ok(TppVerdict {
        met: at_sens.specificity.estimate >= TPP_SPECIFICITY,
        point_at_sens90: at_sens,
        point_at_spec70: at_spec,
    })
}

/// Radiologist reading against an AI product matched to the reader's
/// sensitivity. Differences are AI minus human.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanComparison {
    pub product: String,
    pub classification: BinaryClassification,
    pub human: OperatingPoint,
    pub matched_ai: OperatingPoint,
    pub delta_specificity: ConfidenceInterval,
    pub delta_ppv: Option<ConfidenceInterval>,
    pub delta_npv: Option<ConfidenceInterval>,
    /// Bac- subjects called positive by the human and negative by the AI.
    pub discordant_human_only: u64,
    /// Bac- subjects called negative by the human and positive by the AI.
    pub discordant_ai_only: u64,
    pub mcnemar_specificity: TestResult,
}

/// Delta-method interval for the difference of two predictive values
/// computed on the same subjects. For reader `r`, `PV_r = Σ a_ri·d_i / Σ a_ri`
/// where `a_ri` marks the subjects in the reader's denominator and `d_i`
/// the reference outcome counted in the numerator.
fn predictive_value_diff(
    in_a: &[bool],
    in_b: &[bool],
    outcome: &[bool],
    estimate: f64,
    z: f64,
    level: f64,
) -> Option<ConfidenceInterval> {
    let tally = |calls: &[bool]| {
        let n = calls.iter().filter(|&&c| c).count() as f64;
        let k = calls.iter().zip(outcome).filter(|(&c, &d)| c && d).count() as f64;
        (n, k)
    };
    let (na, ka) = tally(in_a);
    let (nb, kb) = tally(in_b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let (pa, pb) = (ka / na, kb / nb);
    let var: f64 = (0..outcome.len())
        .map(|i| {
            let d = outcome[i] as u8 as f64;
            let fa = if in_a[i] { (d - pa) / na } else { 0.0 };
            let fb = if in_b[i] { (d - pb) / nb } else { 0.0 };
            (fa - fb).powi(2)
        })
        .sum();
    Some(ConfidenceInterval::around(estimate, z * var.sqrt(), level, -1.0, 1.0))
}

pub fn human_vs_ai(
    cohort: &Cohort,
    product: &str,
    classification: BinaryClassification,
    level: f64,
) -> Result<HumanComparison> {
    let z = z_for_level(level)?;
    let scores = cohort.scores(product)?;
    let labels = cohort.labels();
    let human_calls = cohort
        .records()
        .iter()
        .map(|r| radiologist_binary(r.radiologist_grade, classification))
        .collect::<Result<Vec<bool>>>()?;

    let human = confusion_from_calls(&human_calls, &labels, level)?;
    let matched_ai = match_operating_point(
        &scores,
        &labels,
        human.sensitivity.estimate,
        MatchKind::Sensitivity,
        level,
    )?;
    let ai_calls: Vec<bool> = scores.iter().map(|&s| s >= matched_ai.threshold).collect();

    let (mut b, mut c) = (0u64, 0u64);
    for i in 0..labels.len() {
        if !labels[i] {
            match (human_calls[i], ai_calls[i]) {
                (true, false) => b += 1,
                (false, true) => c += 1,
                _ => {}
            }
        }
    }
    let n_neg = human.n_neg();
    let spec_diff = matched_ai.specificity.estimate - human.specificity.estimate;
    let (bf, cf, nf) = (b as f64, c as f64, n_neg as f64);
    let spec_half = z * (bf + cf - (bf - cf).powi(2) / nf).max(0.0).sqrt() / nf;
    let delta_specificity = ConfidenceInterval::around(spec_diff, spec_half, level, -1.0, 1.0);

    let diff = |a: Option<ConfidenceInterval>, h: Option<ConfidenceInterval>| match (a, h) {
        (Some(a), Some(h)) => Some(a.estimate - h.estimate),
        _ => None,
    };
    let negated = |v: &[bool]| v.iter().map(|&x| !x).collect::<Vec<bool>>();
    let delta_ppv = diff(matched_ai.ppv, human.ppv)
        .and_then(|d| predictive_value_diff(&ai_calls, &human_calls, &labels, d, z, level));
    let delta_npv = diff(matched_ai.npv, human.npv).and_then(|d| {
        predictive_value_diff(
            &negated(&ai_calls),
            &negated(&human_calls),
            &negated(&labels),
            d,
            z,
            level,
        )
    });

    Ok(HumanComparison {
        product: product.to_string(),
        classification,
        human,
        matched_ai,
        delta_specificity,
        delta_ppv,
        delta_npv,
        discordant_human_only: b,
        discordant_ai_only: c,
        mcnemar_specificity: mcnemar(b, c, MCNEMAR_EXACT_BELOW),
    })
}

fn ci_cells(ci: Option<&ConfidenceInterval>) -> [String; 3] {
    match ci {
        Some(c) => [c.estimate.to_string(), c.lower.to_string(), c.upper.to_string()],
        None => [String::new(), String::new(), String::new()],
    }
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer)
}

/// Human-vs-AI comparison table, one row per (classification, product).
pub fn write_human_comparison_csv<W: Write>(rows: &[HumanComparison], writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    let mut header = vec!["human_binary_classification".to_string()];
    for m in ["sensitivity", "specificity", "ppv", "npv"] {
        header.extend([format!("human_{m}"), format!("human_{m}_lo"), format!("human_{m}_hi")]);
    }
    header.extend(["product".into(), "threshold_score".into(), "approximate".into()]);
    for m in ["sensitivity", "specificity", "ppv", "npv"] {
        header.extend([format!("ai_{m}"), format!("ai_{m}_lo"), format!("ai_{m}_hi")]);
    }
    for m in ["specificity", "ppv", "npv"] {
        header.extend([format!("difference_{m}"), format!("difference_{m}_lo"), format!("difference_{m}_hi")]);
    }
    header.extend(["mcnemar_statistic".into(), "mcnemar_p".into()]);
    w.write_record(&header)?;

    for r in rows {
        let mut row = vec![format!("{:?}", r.classification)];
        let point = |p: &OperatingPoint| {
            let mut cells = Vec::new();
            cells.extend(ci_cells(Some(&p.sensitivity)));
            cells.extend(ci_cells(Some(&p.specificity)));
            cells.extend(ci_cells(p.ppv.as_ref()));
            cells.extend(ci_cells(p.npv.as_ref()));
            cells
        };
        row.extend(point(&r.human));
        row.extend([
            r.product.clone(),
            r.matched_ai.threshold.to_string(),
            r.matched_ai.approximate.to_string(),
        ]);
        row.extend(point(&r.matched_ai));
        row.extend(ci_cells(Some(&r.delta_specificity)));
        row.extend(ci_cells(r.delta_ppv.as_ref()));
        row.extend(ci_cells(r.delta_npv.as_ref()));
        row.extend([
            r.mcnemar_specificity.statistic.to_string(),
            r.mcnemar_specificity.p_value.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// TPP table: per product, the point at 90% sensitivity and at 70%
/// specificity.
pub fn write_tpp_csv<W: Write>(rows: &[(String, TppVerdict)], writer: W) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record([
        "fixing", "ai", "score", "sensitivity", "sensitivity_lo", "sensitivity_hi", "specificity",
        "specificity_lo", "specificity_hi", "closest_match", "tpp_met",
    ])?;
    for fixing in [MatchKind::Sensitivity, MatchKind::Specificity] {
        for (product, v) in rows {
            let p = match fixing {
                MatchKind::Sensitivity => &v.point_at_sens90,
                MatchKind::Specificity => &v.point_at_spec70,
            };
            let mut row = vec![
                match fixing {
                    MatchKind::Sensitivity => "sensitivity_90".to_string(),
                    MatchKind::Specificity => "specificity_70".to_string(),
                },
                product.clone(),
                p.threshold.to_string(),
            ];
            row.extend(ci_cells(Some(&p.sensitivity)));
            row.extend(ci_cells(Some(&p.specificity)));
            row.extend([p.approximate.to_string(), v.met.to_string()]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
