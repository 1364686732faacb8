//! Subgroup-stratified AUC/PRAUC with pairwise unpaired DeLong p-values,
//! and score-density summaries by label and prior TB history.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::cohort::{Cohort, CohortRecord, Gender, PatientSource};
use crate::curves::prauc;
use crate::error::{Error, Result};
use crate::stats::{bootstrap_percentile, delong_ci, delong_unpaired, BootstrapConfig, ConfidenceInterval};
use crate::summary::quantile_sorted;

/// Age bands, left-closed: `[0, 25)`, `[25, 60)`, `[60, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBand {
    Young,
    Middle,
    Old,
}

impl AgeBand {
    pub const ALL: [AgeBand; 3] = [AgeBand::Young, AgeBand::Middle, AgeBand::Old];

    pub fn of(age_years: u32) -> AgeBand {
        match age_years {
            0..=24 => AgeBand::Young,
            25..=59 => AgeBand::Middle,
            _ => AgeBand::Old,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Young => "young",
            AgeBand::Middle => "middle",
            AgeBand::Old => "old",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    AgeGroup,
    Gender,
    PriorTb,
    PatientSource,
}

impl Covariate {
    pub const ALL: [Covariate; 4] =
        [Covariate::AgeGroup, Covariate::Gender, Covariate::PriorTb, Covariate::PatientSource];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::AgeGroup => "age_group",
            Covariate::Gender => "gender",
            Covariate::PriorTb => "prior_tb",
            Covariate::PatientSource => "patient_source",
        }
    }

    /// Known levels, in report order.
    pub fn levels(self) -> Vec<&'static str> {
        match self {
            Covariate::AgeGroup => AgeBand::ALL.iter().map(|b| b.label()).collect(),
            Covariate::Gender => vec!["female", "male"],
            Covariate::PriorTb => vec!["prior_tb", "new"],
            Covariate::PatientSource => PatientSource::KNOWN.iter().map(|s| s.code()).collect(),
        }
    }

    /// Level of `record`, or `None` when the covariate is unknown.
    pub fn level_of(self, record: &CohortRecord) -> Option<&'static str> {
        match self {
            Covariate::AgeGroup => record.age_years.map(|a| AgeBand::of(a).label()),
            Covariate::Gender => match record.gender {
                Gender::Female => Some("female"),
                Gender::Male => Some("male"),
                Gender::Unknown => None,
            },
            Covariate::PriorTb => record.prior_tb.map(|p| if p { "prior_tb" } else { "new" }),
            Covariate::PatientSource => match record.patient_source {
                PatientSource::Unknown => None,
                s => Some(s.code()),
            },
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariate {s:?}")))
    }
}

/// Minimum count of each class for a stratum to get inference.
pub const MIN_PER_CLASS: usize = 2;
pub const DEFAULT_SUBGROUP_REPLICATES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumResult {
    pub label: String,
    pub n: usize,
    pub n_pos: usize,
    /// Fewer than two of either class; counts only.
    pub analyzable: bool,
    pub auc: Option<ConfidenceInterval>,
    pub prauc: Option<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupReport {
    pub covariate: Covariate,
    pub product: String,
    pub strata: Vec<StratumResult>,
    /// Records whose covariate value is unknown.
    pub excluded_unknown: usize,
    /// Unpaired DeLong p-values between strata; `None` where either side
    /// is not analyzable. The diagonal is 1.
    pub pairwise_p: Vec<Vec<Option<f64>>>,
}

pub fn subgroup_report(
    cohort: &Cohort,
    product: &str,
    covariate: Covariate,
    bootstrap: &BootstrapConfig,
) -> Result<SubgroupReport> {
    let column = cohort.product_index(product)?;
    let mut excluded_unknown = 0;
    let mut groups: Vec<(&'static str, Vec<f64>, Vec<bool>)> =
        covariate.levels().into_iter().map(|l| (l, Vec::new(), Vec::new())).collect();
    for r in cohort.records() {
        match covariate.level_of(r) {
            Some(level) => {
                let g = groups.iter_mut().find(|g| g.0 == level).expect("level listed");
                g.1.push(r.scores[column]);
                g.2.push(r.bac_label);
            }
            None => excluded_unknown += 1,
        }
    }
    groups.retain(|g| !g.1.is_empty());

    let strata = groups
        .par_iter()
        .map(|(label, scores, labels)| {
            let n_pos = labels.iter().filter(|&&l| l).count();
            let n = labels.len();
            let analyzable = n_pos >= MIN_PER_CLASS && n - n_pos >= MIN_PER_CLASS;
            let (auc, prauc_ci) = if analyzable {
                let auc = delong_ci(scores, labels, bootstrap.level)?;
                let mut pr = bootstrap_percentile(labels, bootstrap, |idx| {
                    let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                    let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
                    prauc(&s, &l).unwrap_or(f64::NAN)
                })?;
                // the bootstrap sees the stratum reordered by class, which can
                // move the area by an ulp
                let estimate = prauc(scores, labels)?;
                pr.lower = pr.lower.min(estimate);
                pr.upper = pr.upper.max(estimate);
                pr.estimate = estimate;
                (Some(auc), Some(pr))
            } else {
                (None, None)
            };
            Ok(StratumResult { label: label.to_string(), n, n_pos, analyzable, auc, prauc: prauc_ci })
        })
        .collect::<Result<Vec<_>>>()?;

    if !strata.iter().any(|s| s.analyzable) {
        return Err(Error::NoAnalyzableStrata);
    }

    let k = strata.len();
    let mut pairwise_p = vec![vec![None; k]; k];
    for i in 0..k {
        pairwise_p[i][i] = Some(1.0);
        for j in i + 1..k {
            if strata[i].analyzable && strata[j].analyzable {
                let t = delong_unpaired(
                    (&groups[i].1, &groups[i].2),
                    (&groups[j].1, &groups[j].2),
                )?;
                pairwise_p[i][j] = Some(t.p_value);
                pairwise_p[j][i] = Some(t.p_value);
            }
        }
    }

    Ok(SubgroupReport {
        covariate,
        product: product.to_string(),
        strata,
        excluded_unknown,
        pairwise_p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGroup {
    pub group: String,
    pub n: usize,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySummary {
    pub product: String,
    /// `n_bins + 1` edges from 0 to 1.
    pub edges: Vec<f64>,
    pub groups: Vec<DensityGroup>,
    /// Records left out because prior TB history is unknown.
    pub excluded_unknown: usize,
}

pub const DENSITY_GROUPS: [(bool, bool, &str); 4] = [
    (true, true, "bac_pos_prior_tb"),
    (true, false, "bac_pos_new"),
    (false, true, "bac_neg_prior_tb"),
    (false, false, "bac_neg_new"),
];

/// Equal-width bin edges `k / n_bins` on `[0, 1]`.
pub fn bin_edges(n_bins: usize) -> Vec<f64> {
    (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect()
}

/// Bin of `score` under `edges`: left-closed, with the last bin also
/// closed on the right.
fn bin_index(edges: &[f64], score: f64) -> usize {
    let n_bins = edges.len() - 1;
    edges.partition_point(|&e| e <= score).saturating_sub(1).min(n_bins - 1)
}

pub fn density_hist(cohort: &Cohort, product: &str, n_bins: usize) -> Result<DensitySummary> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    let column = cohort.product_index(product)?;
    let edges = bin_edges(n_bins);
    let mut groups: Vec<DensityGroup> = DENSITY_GROUPS
        .iter()
        .map(|g| DensityGroup { group: g.2.to_string(), n: 0, counts: vec![0; n_bins] })
        .collect();
    let mut excluded_unknown = 0;
    for r in cohort.records() {
        let Some(prior) = r.prior_tb else {
            excluded_unknown += 1;
            continue;
        };
        let g = DENSITY_GROUPS.iter().position(|g| g.0 == r.bac_label && g.1 == prior).expect("four cells");
        groups[g].n += 1;
        groups[g].counts[bin_index(&edges, r.scores[column])] += 1;
    }
    Ok(DensitySummary { product: product.to_string(), edges, groups, excluded_unknown })
}

impl DensitySummary {
    /// Columns: group, bin_lo, bin_hi, count.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["group", "bin_lo", "bin_hi", "count"])?;
        for g in &self.groups {
            for (k, c) in g.counts.iter().enumerate() {
                w.write_record([
                    g.group.clone(),
                    self.edges[k].to_string(),
                    self.edges[k + 1].to_string(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Silverman's rule of thumb, `0.9·min(sd, IQR/1.34)·n^(-1/5)`. Falls back
/// to the standard deviation when the IQR is zero; `None` for fewer than
/// two values or zero spread.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (spread > 0.0).then(|| 0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian kernel density estimate of `values` evaluated at `at`.
pub fn gaussian_kde(values: &[f64], bandwidth: f64, at: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    at.iter()
        .map(|&x| {
            norm * values.iter().map(|&v| (-0.5 * ((x - v) / bandwidth).powi(2)).exp()).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::auc;
    use proptest::prelude::*;

    fn cfg() -> BootstrapConfig {
        BootstrapConfig::new(200, 0.95, 11)
    }

    fn toy_cohort() -> Cohort {
        let scores = [0.9, 0.8, 0.7, 0.3, 0.6, 0.4, 0.2, 0.1, 0.05, 0.0];
        let records = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut r = CohortRecord::new(format!("s{i}"), i < 4, vec![s]);
                r.prior_tb = Some(false);
                r
            })
            .collect();
        Cohort::new(records, vec!["ai".into()]).unwrap()
    }

    #[test]
    fn age_band_edges() {
        assert_eq!(AgeBand::of(15), AgeBand::Young);
        assert_eq!(AgeBand::of(24), AgeBand::Young);
        assert_eq!(AgeBand::of(25), AgeBand::Middle);
        assert_eq!(AgeBand::of(59), AgeBand::Middle);
        assert_eq!(AgeBand::of(60), AgeBand::Old);
    }

    #[test]
    fn covariate_names_round_trip() {
        for c in Covariate::ALL {
            assert_eq!(c.name().parse::<Covariate>().unwrap(), c);
        }
        assert!("income".parse::<Covariate>().is_err());
    }

    #[test]
    fn density_toy() {
        let d = density_hist(&toy_cohort(), "ai", 10).unwrap();
        assert_eq!(d.groups[1].group, "bac_pos_new");
        assert_eq!(d.groups[1].counts, vec![0, 0, 0, 1, 0, 0, 0, 1, 1, 1]);
        assert_eq!(d.groups[3].counts, vec![2, 1, 1, 0, 1, 0, 1, 0, 0, 0]);
        assert_eq!(d.groups[0].n + d.groups[2].n, 0);
        assert_eq!((d.edges[0], d.edges[10]), (0.0, 1.0));
    }

    #[test]
    fn density_top_edge_inclusive() {
        let records = (0..5)
            .map(|i| {
                let mut r = CohortRecord::new(format!("s{i}"), i % 2 == 0, vec![1.0]);
                r.prior_tb = Some(true);
                r
            })
            .collect();
        let c = Cohort::new(records, vec!["ai".into()]).unwrap();
        let d = density_hist(&c, "ai", 10).unwrap();
        assert_eq!(d.groups[0].counts[9], 3);
        assert_eq!(d.groups[2].counts[9], 2);
        assert!(density_hist(&c, "ai", 1).is_err());
    }

    #[test]
    fn density_csv() {
        let mut buf = Vec::new();
        density_hist(&toy_cohort(), "ai", 2).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("group,bin_lo,bin_hi,count"));
        assert_eq!(text.lines().count(), 9);
        assert!(text.contains("bac_pos_new,0.5,1,3\n"));
    }

    fn split_cohort(strata: &[(&str, &[f64], &[bool])]) -> Cohort {
        let mut records = Vec::new();
        for (label, scores, labels) in strata {
            for (i, (&s, &l)) in scores.iter().zip(labels.iter()).enumerate() {
                let mut r = CohortRecord::new(format!("{label}{i}"), l, vec![s]);
                r.gender = match *label {
                    "f" => Gender::Female,
                    "m" => Gender::Male,
                    _ => Gender::Unknown,
                };
                records.push(r);
            }
        }
        Cohort::new(records, vec!["ai".into()]).unwrap()
    }

    #[test]
    fn identical_strata_p_one() {
        let s = [0.9, 0.8, 0.7, 0.3, 0.6, 0.4, 0.2, 0.1];
        let l = [true, true, true, true, false, false, false, false];
        let c = split_cohort(&[("f", &s, &l), ("m", &s, &l), ("u", &s[..2], &l[..2])]);
        let rep = subgroup_report(&c, "ai", Covariate::Gender, &cfg()).unwrap();
        assert_eq!(rep.strata.len(), 2);
        assert_eq!(rep.excluded_unknown, 2);
        assert_eq!(rep.pairwise_p[0][1], Some(1.0));
        assert_eq!(rep.pairwise_p[1][0], Some(1.0));
        assert_eq!(rep.pairwise_p[0][0], Some(1.0));
        assert_eq!(rep.strata.iter().map(|s| s.n).sum::<usize>(), c.len() - 2);
    }

    #[test]
    fn small_stratum_counts_only() {
        let s = [0.9, 0.8, 0.7, 0.3, 0.6, 0.4, 0.2, 0.1];
        let l = [true, true, true, true, false, false, false, false];
        let small_s = [0.9, 0.2, 0.1];
        let small_l = [true, false, false];
        let c = split_cohort(&[("f", &s, &l), ("m", &small_s, &small_l)]);
        let rep = subgroup_report(&c, "ai", Covariate::Gender, &cfg()).unwrap();
        let m = &rep.strata[1];
        assert!(!m.analyzable);
        assert!(m.auc.is_none() && m.prauc.is_none());
        assert_eq!((m.n, m.n_pos), (3, 1));
        assert_eq!(rep.pairwise_p[0][1], None);

        let c = split_cohort(&[("m", &small_s, &small_l)]);
        assert!(matches!(
            subgroup_report(&c, "ai", Covariate::Gender, &cfg()),
            Err(Error::NoAnalyzableStrata)
        ));
    }

    #[test]
    fn stratum_intervals_contain_estimates() {
        let s = [0.9, 0.8, 0.7, 0.3, 0.6, 0.4, 0.2, 0.1, 0.35, 0.05];
        let l = [true, true, true, true, false, false, false, false, true, false];
        let c = split_cohort(&[("f", &s, &l)]);
        let rep = subgroup_report(&c, "ai", Covariate::Gender, &cfg()).unwrap();
        let st = &rep.strata[0];
        let pr = st.prauc.unwrap();
        assert!(pr.lower <= pr.estimate && pr.estimate <= pr.upper);
        let expected = prauc(&s, &l).unwrap();
        assert_eq!(pr.estimate, expected);
        assert_eq!(st.auc.unwrap().estimate, auc(&s, &l).unwrap().estimate);
    }

    #[test]
    fn silverman_and_kde() {
        assert!(silverman_bandwidth(&[0.5]).is_none());
        assert!(silverman_bandwidth(&[0.5, 0.5, 0.5]).is_none());
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let h = silverman_bandwidth(&v).unwrap();
        assert!(h > 0.0 && h < 0.2);
        // density integrates to about one over a wide grid
        let grid: Vec<f64> = (0..4001).map(|i| -1.0 + 3.0 * i as f64 / 4000.0).collect();
        let f = gaussian_kde(&v, h, &grid);
        let area: f64 = f.iter().sum::<f64>() * 3.0 / 4000.0;
        assert!((area - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn density_conserves_mass(
            scores in proptest::collection::vec(0.0f64..=1.0, 1..200),
            bins in 2usize..40,
        ) {
            let records = scores.iter().enumerate().map(|(i, &s)| {
                let mut r = CohortRecord::new(format!("s{i}"), i % 3 == 0, vec![s]);
                r.prior_tb = if i % 7 == 0 { None } else { Some(i % 2 == 0) };
                r
            }).collect();
            let c = Cohort::new(records, vec!["ai".into()]).unwrap();
            let a = density_hist(&c, "ai", bins).unwrap();
            let b = density_hist(&c, "ai", bins + 3).unwrap();
            for (ga, gb) in a.groups.iter().zip(&b.groups) {
                prop_assert_eq!(ga.counts.iter().sum::<u64>() as usize, ga.n);
                prop_assert_eq!(ga.n, gb.n);
            }
            prop_assert_eq!(a.groups.iter().map(|g| g.n).sum::<usize>() + a.excluded_unknown, scores.len());
            for w in a.edges.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn bins_respect_edges(s in 0.0f64..=1.0, bins in 2usize..60) {
            let edges = bin_edges(bins);
            let k = bin_index(&edges, s);
            prop_assert!(edges[k] <= s);
            prop_assert!(s < edges[k + 1] || (k == bins - 1 && s <= 1.0));
        }

        #[test]
        fn pooled_strata_auc_is_whole_auc(
            data in proptest::collection::vec((0u8..30, any::<bool>(), 0u8..3), 4..120),
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 29.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mut pooled_s = Vec::new();
            let mut pooled_l = Vec::new();
            for g in 0..3u8 {
                for (i, d) in data.iter().enumerate() {
                    if d.2 == g {
                        pooled_s.push(scores[i]);
                        pooled_l.push(labels[i]);
                    }
                }
            }
            prop_assert_eq!(auc(&pooled_s, &pooled_l).unwrap(), auc(&scores, &labels).unwrap());
        }
    }
}
