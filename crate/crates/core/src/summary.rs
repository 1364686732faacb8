//! Descriptive cohort summary: counts by covariate and quartiles of age and
//! scores, overall and split by reference label.

use serde::Serialize;

use crate::cohort::{Cohort, Gender, PatientSource, RadiologistGrade};
use crate::error::{Error, Result};
use crate::strata::AgeBand;

/// Median and interquartile range (R type-7 quantiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            n: v.len(),
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
        })
    }
}

/// Linear-interpolation quantile of ascending data (R type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitQuartiles {
    pub overall: Option<Quartiles>,
    pub bac_positive: Option<Quartiles>,
    pub bac_negative: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCount {
    pub covariate: &'static str,
    pub level: String,
    pub count: usize,
    /// Percent of the whole cohort.
    pub percent: f64,
    pub bac_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductQuartiles {
    pub product: String,
    pub scores: SplitQuartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub n: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub prevalence: f64,
    pub levels: Vec<LevelCount>,
    pub age: SplitQuartiles,
    pub products: Vec<ProductQuartiles>,
}

fn split<F: Fn(usize) -> Option<f64>>(cohort: &Cohort, value: F) -> SplitQuartiles {
    let mut all = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, r) in cohort.records().iter().enumerate() {
        if let Some(v) = value(i) {
            all.push(v);
            if r.bac_label {
                pos.push(v);
            } else {
                neg.push(v);
            }
        }
    }
    SplitQuartiles {
        overall: Quartiles::from_values(&all),
        bac_positive: Quartiles::from_values(&pos),
        bac_negative: Quartiles::from_values(&neg),
    }
}

pub fn cohort_summary(cohort: &Cohort) -> Result<SummaryReport> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let n = cohort.len();
    let n_positive = cohort.n_positive();
    let records = cohort.records();

    let mut levels = Vec::new();
    let mut tally = |covariate: &'static str, level: String, pred: &dyn Fn(usize) -> bool| {
        let (mut count, mut pos) = (0, 0);
        for (i, r) in records.iter().enumerate() {
            if pred(i) {
                count += 1;
                pos += r.bac_label as usize;
            }
        }
        levels.push(LevelCount {
            covariate,
            level,
            count,
            percent: 100.0 * count as f64 / n as f64,
            bac_positive: pos,
        });
    };

    tally("bac_label", "positive".into(), &|i| records[i].bac_label);
    tally("bac_label", "negative".into(), &|i| !records[i].bac_label);
    for band in AgeBand::ALL {
        tally("age_group", band.label().into(), &|i| {
            records[i].age_years.map(AgeBand::of) == Some(band)
        });
    }
    tally("age_group", "unknown".into(), &|i| records[i].age_years.is_none());
    for (g, name) in [(Gender::Female, "female"), (Gender::Male, "male"), (Gender::Unknown, "unknown")] {
        tally("gender", name.into(), &|i| records[i].gender == g);
    }
    for (p, name) in [(Some(true), "yes"), (Some(false), "no"), (None, "unknown")] {
        tally("prior_tb", name.into(), &|i| records[i].prior_tb == p);
    }
    for s in PatientSource::KNOWN.into_iter().chain([PatientSource::Unknown]) {
        let name = if s == PatientSource::Unknown { "unknown" } else { s.code() };
        tally("patient_source", name.into(), &|i| records[i].patient_source == s);
    }
    for g in RadiologistGrade::ALL {
        tally("radiologist_grade", g.code().into(), &|i| records[i].radiologist_grade == Some(g));
    }
    tally("radiologist_grade", "unknown".into(), &|i| records[i].radiologist_grade.is_none());

    let age = split(cohort, |i| records[i].age_years.map(f64::from));
    let products = cohort
        .product_names()
        .iter()
        .enumerate()
        .map(|(j, p)| ProductQuartiles {
            product: p.clone(),
            scores: split(cohort, |i| Some(records[i].scores[j])),
        })
        .collect();

    Ok(SummaryReport {
        n,
        n_positive,
        n_negative: n - n_positive,
        prevalence: n_positive as f64 / n as f64,
        levels,
        age,
        products,
    })
}
