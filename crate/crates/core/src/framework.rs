//! Triage framework: sensitivity, proportion of confirmatory tests saved and
//! number needed to test, over single thresholds and full sweeps.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sample::{class_counts, SortedClasses};
use crate::stats::{wilson_ci, ConfidenceInterval};
use crate::thresholds::{match_operating_point, MatchKind};

/// Number of points in the uniform grid used for plot export.
pub const UNIFORM_GRID_POINTS: usize = 1001;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameworkPoint {
    pub threshold: f64,
    pub sensitivity: ConfidenceInterval,
    /// Fraction of the cohort not sent on to confirmatory testing.
    pub tests_saved: ConfidenceInterval,
    /// Confirmatory tests per true positive found; `None` when no true
    /// positive is triaged.
    pub nnt: Option<ConfidenceInterval>,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub approximate: bool,
}

impl FrameworkPoint {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Fraction of the cohort sent on to confirmatory testing.
    pub fn triaged_fraction(&self) -> f64 {
        (self.tp + self.fp) as f64 / self.n() as f64
    }

    fn from_counts(threshold: f64, tp: u64, fp: u64, n_pos: u64, n_neg: u64, level: f64) -> Result<Self> {
        let (fn_, tn) = (n_pos - tp, n_neg - fp);
        let n = n_pos + n_neg;
        let nnt = if tp == 0 {
            None
        } else {
            let ppv = wilson_ci(tp, tp + fp, level)?;
            Some(ConfidenceInterval {
                estimate: 1.0 / ppv.estimate,
                lower: 1.0 / ppv.upper,
                upper: 1.0 / ppv.lower,
                level,
            })
        };
        Ok(FrameworkPoint {
            threshold,
            sensitivity: wilson_ci(tp, n_pos, level)?,
            tests_saved: wilson_ci(tn + fn_, n, level)?,
            nnt,
            tp,
            fp,
            tn,
            fn_,
            approximate: false,
        })
    }
}

pub fn triage_metrics(scores: &[f64], labels: &[bool], threshold: f64, level: f64) -> Result<FrameworkPoint> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let (tp, fp) = SortedClasses::new(scores, labels).counts_at(threshold);
    FrameworkPoint::from_counts(threshold, tp as u64, fp as u64, n_pos as u64, n_neg as u64, level)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameworkSweep {
    pub product: String,
    pub grid: Vec<FrameworkPoint>,
}

/// All distinct scores plus 0 and 1, ascending.
pub fn default_grid(scores: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| a == b);
    grid
}

/// `UNIFORM_GRID_POINTS` equally spaced thresholds on `[0, 1]`.
pub fn uniform_grid() -> Vec<f64> {
    let last = (UNIFORM_GRID_POINTS - 1) as f64;
    (0..UNIFORM_GRID_POINTS).map(|i| i as f64 / last).collect()
}

pub fn framework_sweep(
    product: &str,
    scores: &[f64],
    labels: &[bool],
    grid: &[f64],
    level: f64,
) -> Result<FrameworkSweep> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    if grid.iter().any(|t| t.is_nan()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("threshold grid must be sorted ascending".into()));
    }
    let sorted = SortedClasses::new(scores, labels);
    let points = grid
        .iter()
        .map(|&t| {
            let (tp, fp) = sorted.counts_at(t);
            FrameworkPoint::from_counts(t, tp as u64, fp as u64, n_pos as u64, n_neg as u64, level)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameworkSweep { product: product.to_string(), grid: points })
}

impl FrameworkSweep {
    /// Columns: threshold, sens, sens_lo, sens_hi, saved, saved_lo,
    /// saved_hi, nnt, nnt_lo, nnt_hi. Undefined NNT cells are empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record([
            "threshold", "sens", "sens_lo", "sens_hi", "saved", "saved_lo", "saved_hi", "nnt", "nnt_lo", "nnt_hi",
        ])?;
        for p in &self.grid {
            let mut row = vec![p.threshold.to_string()];
            for ci in [&p.sensitivity, &p.tests_saved] {
                row.extend([ci.estimate.to_string(), ci.lower.to_string(), ci.upper.to_string()]);
            }
            match &p.nnt {
                Some(ci) => row.extend([ci.estimate.to_string(), ci.lower.to_string(), ci.upper.to_string()]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(tests_saved, sensitivity)` over the default sweep, ascending in
/// tests saved, keeping the highest sensitivity for repeated savings.
pub fn tradeoff_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let n = (n_pos + n_neg) as f64;
    let sorted = SortedClasses::new(scores, labels);
    let mut pairs: Vec<(f64, f64)> = default_grid(scores)
        .into_iter()
        .map(|t| {
            let (tp, fp) = sorted.counts_at(t);
            ((n - (tp + fp) as f64) / n, tp as f64 / n_pos as f64)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pairs.dedup_by(|later, first| later.0 == first.0);
    Ok(pairs)
}

/// Highest-savings operating point whose sensitivity is at least
/// `sens_floor`.
pub fn savings_at_sensitivity(scores: &[f64], labels: &[bool], sens_floor: f64, level: f64) -> Result<FrameworkPoint> {
    if !(sens_floor > 0.0 && sens_floor < 1.0) {
        return Err(Error::InvalidArgument(format!("sensitivity floor {sens_floor} is not in (0, 1)")));
    }
    let op = match_operating_point(scores, labels, sens_floor, MatchKind::Sensitivity, level)?;
    let mut p = FrameworkPoint::from_counts(op.threshold, op.tp, op.fp, op.n_pos(), op.n_neg(), level)?;
    p.approximate = op.approximate;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: f64 = 0.95;

    fn toy() -> (Vec<f64>, Vec<bool>) {
        let scores = vec![0.9, 0.8, 0.7, 0.3, 0.6, 0.4, 0.2, 0.1, 0.05, 0.0];
        let labels = (0..10).map(|i| i < 4).collect();
        (scores, labels)
    }

    #[test]
    fn toy_at_half() {
        let (s, l) = toy();
        let p = triage_metrics(&s, &l, 0.5, L).unwrap();
        assert_eq!(p.sensitivity.estimate, 0.75);
        assert_eq!(p.tests_saved.estimate, 0.6);
        assert!((p.nnt.unwrap().estimate - 4.0 / 3.0).abs() < 1e-15);
        let nnt = p.nnt.unwrap();
        assert!(nnt.lower <= nnt.estimate && nnt.estimate <= nnt.upper);
        assert!(nnt.lower >= 1.0);
    }

    #[test]
    fn toy_test_all_and_none() {
        let (s, l) = toy();
        let p = triage_metrics(&s, &l, 0.0, L).unwrap();
        assert_eq!((p.sensitivity.estimate, p.tests_saved.estimate), (1.0, 0.0));
        assert_eq!(p.nnt.unwrap().estimate, 2.5);

        let p = triage_metrics(&s, &l, 0.95, L).unwrap();
        assert_eq!((p.sensitivity.estimate, p.tests_saved.estimate), (0.0, 1.0));
        assert!(p.nnt.is_none());
    }

    #[test]
    fn toy_default_grid() {
        let (s, l) = toy();
        let grid = default_grid(&s);
        // ten distinct scores, 0.0 among them, plus 1.0
        assert_eq!(grid.len(), 11);
        let sweep = framework_sweep("ai", &s, &l, &grid, L).unwrap();
        assert_eq!(sweep.grid.len(), 11);
        for w in sweep.grid.windows(2) {
            assert!(w[0].sensitivity.estimate >= w[1].sensitivity.estimate);
            assert!(w[0].tests_saved.estimate <= w[1].tests_saved.estimate);
        }
    }

    #[test]
    fn single_point_sweep_matches_triage_metrics() {
        let (s, l) = toy();
        let sweep = framework_sweep("ai", &s, &l, &[0.5], L).unwrap();
        assert_eq!(sweep.grid, vec![triage_metrics(&s, &l, 0.5, L).unwrap()]);
    }

    #[test]
    fn constant_scores_two_regimes() {
        let s = vec![0.4; 8];
        let l: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
        let sweep = framework_sweep("ai", &s, &l, &default_grid(&s), L).unwrap();
        let mut regimes: Vec<(u64, u64)> = sweep.grid.iter().map(|p| (p.tp, p.fp)).collect();
        regimes.dedup();
        assert_eq!(regimes, vec![(4, 4), (0, 0)]);
    }

    #[test]
    fn bad_grids() {
        let (s, l) = toy();
        assert!(framework_sweep("ai", &s, &l, &[], L).is_err());
        assert!(framework_sweep("ai", &s, &l, &[0.5, 0.2], L).is_err());
    }

    #[test]
    fn uniform_grid_shape() {
        let g = uniform_grid();
        assert_eq!(g.len(), 1001);
        assert_eq!((g[0], g[500], g[1000]), (0.0, 0.5, 1.0));
    }

    #[test]
    fn tradeoff_examples() {
        let (s, l) = toy();
        let c = tradeoff_curve(&s, &l).unwrap();
        assert!(c.contains(&(0.6, 0.75)));
        assert!(c.windows(2).all(|w| w[0].0 < w[1].0));

        let s = [0.9, 0.8, 0.2, 0.1, 0.05];
        let l = [true, true, false, false, false];
        assert!(tradeoff_curve(&s, &l).unwrap().contains(&(0.6, 1.0)));
    }

    #[test]
    fn savings_toy() {
        let (s, l) = toy();
        let p = savings_at_sensitivity(&s, &l, 0.75, L).unwrap();
        assert_eq!(p.threshold, 0.7);
        assert_eq!(p.tests_saved.estimate, 0.7);
        let p = savings_at_sensitivity(&s, &l, 1e-9, L).unwrap();
        assert_eq!(p.threshold, 0.9);
        assert_eq!(p.tests_saved.estimate, 0.9);
        assert!(savings_at_sensitivity(&s, &l, 1.0, L).is_err());
    }

    #[test]
    fn sweep_csv_header_and_blank_nnt() {
        let (s, l) = toy();
        let sweep = framework_sweep("ai", &s, &l, &[0.5, 0.95], L).unwrap();
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "threshold,sens,sens_lo,sens_hi,saved,saved_lo,saved_hi,nnt,nnt_lo,nnt_hi");
        assert!(lines[2].ends_with(",,,"));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..80)
            .prop_flat_map(|n| {
                (proptest::collection::vec(0u16..50, n), proptest::collection::vec(any::<bool>(), n))
            })
            .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
            .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 / 49.0).collect(), l))
    }

    proptest! {
        #[test]
        fn sweep_invariants((s, l) in instance()) {
            let sweep = framework_sweep("ai", &s, &l, &default_grid(&s), L).unwrap();
            let n_pos = l.iter().filter(|&&x| x).count() as f64;
            for w in sweep.grid.windows(2) {
                prop_assert!(w[0].sensitivity.estimate >= w[1].sensitivity.estimate);
                prop_assert!(w[0].tests_saved.estimate <= w[1].tests_saved.estimate);
            }
            for p in &sweep.grid {
                prop_assert!((p.tests_saved.estimate + p.triaged_fraction() - 1.0).abs() <= f64::EPSILON);
                if let Some(nnt) = &p.nnt {
                    let ppv = p.tp as f64 / (p.tp + p.fp) as f64;
                    prop_assert_eq!(nnt.estimate, 1.0 / ppv);
                    prop_assert!(nnt.estimate >= 1.0);
                    prop_assert!(nnt.lower <= nnt.estimate && nnt.estimate <= nnt.upper);
                } else {
                    prop_assert_eq!(p.tp, 0);
                }
            }
            let first = &sweep.grid[0];
            prop_assert_eq!(first.threshold, 0.0);
            prop_assert_eq!(first.tests_saved.estimate, 0.0);
            prop_assert_eq!(first.nnt.unwrap().estimate, 1.0 / (n_pos / s.len() as f64));
        }

        #[test]
        fn savings_is_best_under_floor((s, l) in instance(), floor in 0.01f64..0.99) {
            let best = savings_at_sensitivity(&s, &l, floor, L).unwrap();
            prop_assert!(best.sensitivity.estimate >= floor);
            for &t in &s {
                let p = triage_metrics(&s, &l, t, L).unwrap();
                if p.sensitivity.estimate >= floor {
                    prop_assert!(p.tests_saved.estimate <= best.tests_saved.estimate);
                }
            }
        }
    }
}
