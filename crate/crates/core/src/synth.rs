//! Seeded binormal cohorts with analytically known ROC behavior.
//!
//! Latent scores are standard normal for negatives and shifted by `mu_sep`
//! for positives, so the population AUC is `Φ(mu_sep / √2)`. All draws come
//! from one ChaCha8 stream seeded with `seed_from_u64(seed)` (rand_chacha
//! 0.9): label shuffle, then one standard-normal latent per subject in
//! record order, then (for mixed cohorts) the prior-TB flag shuffle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, CohortRecord};
use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_quantile};

/// Name and version of the pinned generator.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";
pub const SYNTH_PRODUCT: &str = "synthetic";
pub const MIN_SUBJECTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Squash {
    /// `1 / (1 + e^-x)`.
    Logistic,
    /// Raw latents; only valid through `sample_latent`.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinormalSpec {
    pub mu_sep: f64,
    pub prevalence: f64,
    pub n: usize,
    pub seed: u64,
    pub squash: Squash,
}

impl BinormalSpec {
    pub fn new(mu_sep: f64, prevalence: f64, n: usize, seed: u64) -> Self {
        BinormalSpec { mu_sep, prevalence, n, seed, squash: Squash::Logistic }
    }

    /// `round(prevalence · n)`.
    pub fn n_positive(&self) -> usize {
        (self.prevalence * self.n as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !self.mu_sep.is_finite() {
            return Err(Error::BadSpec(format!("mu_sep {} is not finite", self.mu_sep)));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::BadSpec(format!("prevalence {} is not in (0, 1)", self.prevalence)));
        }
        if self.n < MIN_SUBJECTS {
            return Err(Error::BadSpec(format!("n = {} is below {MIN_SUBJECTS}", self.n)));
        }
        let k = self.n_positive();
        if k == 0 || k == self.n {
            return Err(Error::BadSpec(format!("{k} positives of {} leaves one class empty", self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorTbMixSpec {
    pub base: BinormalSpec,
    pub prior_tb_fraction: f64,
    /// Latent shift added to flagged negatives.
    pub neg_shift: f64,
}

/// Population AUC of the binormal model, `Φ(mu_sep / √2)`.
pub fn analytic_auc(mu_sep: f64) -> f64 {
    norm_cdf(mu_sep / std::f64::consts::SQRT_2)
}

/// Inverse of `analytic_auc`.
pub fn mu_for_auc(auc: f64) -> Result<f64> {
    if !(auc > 0.0 && auc < 1.0) {
        return Err(Error::InvalidArgument(format!("AUC {auc} is not in (0, 1)")));
    }
    Ok(std::f64::consts::SQRT_2 * norm_quantile(auc))
}

/// Population specificity at population sensitivity `sens`.
pub fn analytic_specificity_at(mu_sep: f64, sens: f64) -> f64 {
    norm_cdf(mu_sep - norm_quantile(sens))
}

/// Population fraction of confirmatory tests saved at sensitivity `sens`.
pub fn analytic_tests_saved_at(mu_sep: f64, prevalence: f64, sens: f64) -> f64 {
    (1.0 - prevalence) * analytic_specificity_at(mu_sep, sens) + prevalence * (1.0 - sens)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw(spec: &BinormalSpec) -> (ChaCha8Rng, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.n_positive();
    let mut labels: Vec<bool> = (0..spec.n).map(|i| i < k).collect();
    labels.shuffle(&mut rng);
    let latent = labels
        .iter()
        .map(|&pos| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if pos {
                z + spec.mu_sep
            } else {
                z
            }
        })
        .collect();
    (rng, latent, labels)
}

/// Unsquashed latent scores and labels.
pub fn sample_latent(spec: &BinormalSpec) -> Result<(Vec<f64>, Vec<bool>)> {
    spec.validate()?;
    let (_, latent, labels) = draw(spec);
    Ok((latent, labels))
}

fn build(latent: Vec<f64>, labels: Vec<bool>, prior_tb: Option<Vec<bool>>) -> Result<Cohort> {
    let width = latent.len().to_string().len();
    let records = latent
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (x, y))| {
            let mut r = CohortRecord::new(format!("S{i:0width$}"), y, vec![logistic(x)]);
            r.prior_tb = prior_tb.as_ref().map(|p| p[i]);
            r
        })
        .collect();
    Cohort::new(records, vec![SYNTH_PRODUCT.to_string()])
}

fn require_logistic(spec: &BinormalSpec) -> Result<()> {
    match spec.squash {
        Squash::Logistic => Ok(()),
        Squash::None => Err(Error::BadSpec(
            "cohort scores must lie in [0, 1]; use the logistic squash or sample_latent".into(),
        )),
    }
}

/// One-product cohort named `SYNTH_PRODUCT` with exactly
/// `round(prevalence · n)` positives in shuffled order.
pub fn generate(spec: &BinormalSpec) -> Result<Cohort> {
    spec.validate()?;
    require_logistic(spec)?;
    let (_, latent, labels) = draw(spec);
    build(latent, labels, None)
}

/// As `generate`, with `round(prior_tb_fraction · n)` subjects flagged as
/// having prior TB and flagged negatives shifted by `neg_shift` on the
/// latent scale.
pub fn generate_mixed(spec: &PriorTbMixSpec) -> Result<Cohort> {
    let base = &spec.base;
    base.validate()?;
    require_logistic(base)?;
    if !(0.0..=1.0).contains(&spec.prior_tb_fraction) {
        return Err(Error::BadSpec(format!("prior_tb_fraction {} is not in [0, 1]", spec.prior_tb_fraction)));
    }
    if !spec.neg_shift.is_finite() {
        return Err(Error::BadSpec(format!("neg_shift {} is not finite", spec.neg_shift)));
    }
    let (mut rng, mut latent, labels) = draw(base);
    let k = (spec.prior_tb_fraction * base.n as f64).round() as usize;
    let mut flags: Vec<bool> = (0..base.n).map(|i| i < k).collect();
    flags.shuffle(&mut rng);
    for i in 0..base.n {
        if flags[i] && !labels[i] {
            latent[i] += spec.neg_shift;
        }
    }
    build(latent, labels, Some(flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::write_cohort;
    use crate::curves::auc;

    fn empirical_auc(c: &Cohort) -> f64 {
        auc(&c.scores(SYNTH_PRODUCT).unwrap(), &c.labels()).unwrap().estimate
    }

    #[test]
    fn analytic_values() {
        assert_eq!(analytic_auc(0.0), 0.5);
        assert!((analytic_auc(1.0) - 0.760_249_938_906_523_6).abs() < 1e-12);
        assert!((analytic_auc(1.812) - 0.9).abs() < 5e-4);
        let mu = mu_for_auc(0.9).unwrap();
        assert!((mu - 1.8124).abs() < 1e-4);
        assert!((analytic_auc(mu) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn exact_positive_count_and_determinism() {
        let spec = BinormalSpec::new(1.0, 0.153, 1000, 5);
        let a = generate(&spec).unwrap();
        assert_eq!(a.n_positive(), 153);
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_cohort(&a, &mut x).unwrap();
        write_cohort(&generate(&spec).unwrap(), &mut y).unwrap();
        assert_eq!(x, y);
        let mut z = Vec::new();
        write_cohort(&generate(&BinormalSpec { seed: 6, ..spec }).unwrap(), &mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn no_separation_auc_half() {
        let c = generate(&BinormalSpec::new(0.0, 0.3, 10_000, 1)).unwrap();
        assert!((empirical_auc(&c) - 0.5).abs() < 0.02);
    }

    #[test]
    fn large_sample_auc_converges() {
        let c = generate(&BinormalSpec::new(1.0, 0.15, 100_000, 2)).unwrap();
        assert!((empirical_auc(&c) - analytic_auc(1.0)).abs() < 0.005);
    }

    #[test]
    fn squash_preserves_auc() {
        let spec = BinormalSpec::new(1.3, 0.2, 5000, 9);
        let (latent, labels) = sample_latent(&BinormalSpec { squash: Squash::None, ..spec }).unwrap();
        let c = generate(&spec).unwrap();
        assert_eq!(auc(&latent, &labels).unwrap().estimate, empirical_auc(&c));
        assert_eq!(c.labels(), labels);
    }

    #[test]
    fn bad_specs() {
        let ok = BinormalSpec::new(1.0, 0.2, 100, 0);
        for bad in [
            BinormalSpec { n: 9, ..ok },
            BinormalSpec { prevalence: 0.0, ..ok },
            BinormalSpec { prevalence: 1.0, ..ok },
            BinormalSpec { mu_sep: f64::NAN, ..ok },
            BinormalSpec { prevalence: 0.001, ..ok },
            BinormalSpec { squash: Squash::None, ..ok },
        ] {
            assert!(matches!(generate(&bad), Err(Error::BadSpec(_))), "{bad:?}");
        }
        let mix = PriorTbMixSpec { base: ok, prior_tb_fraction: 1.5, neg_shift: 0.0 };
        assert!(matches!(generate_mixed(&mix), Err(Error::BadSpec(_))));
    }

    #[test]
    fn mixed_zero_shift_matches_base() {
        let base = BinormalSpec::new(1.0, 0.15, 2000, 4);
        let plain = generate(&base).unwrap();
        let mixed = generate_mixed(&PriorTbMixSpec { base, prior_tb_fraction: 0.3, neg_shift: 0.0 }).unwrap();
        assert_eq!(plain.scores(SYNTH_PRODUCT).unwrap(), mixed.scores(SYNTH_PRODUCT).unwrap());
        let flagged = mixed.records().iter().filter(|r| r.prior_tb == Some(true)).count();
        assert_eq!(flagged, 600);
    }

    #[test]
    fn mixed_full_fraction_flags_all() {
        let base = BinormalSpec::new(1.0, 0.15, 200, 4);
        let c = generate_mixed(&PriorTbMixSpec { base, prior_tb_fraction: 1.0, neg_shift: 0.5 }).unwrap();
        assert!(c.records().iter().all(|r| r.prior_tb == Some(true)));
    }

    #[test]
    fn mixed_shift_lowers_auc() {
        let base = BinormalSpec::new(1.5, 0.15, 50_000, 8);
        let c = generate_mixed(&PriorTbMixSpec { base, prior_tb_fraction: 0.15, neg_shift: 1.5 }).unwrap();
        assert!(empirical_auc(&c) < analytic_auc(1.5));
    }

    #[test]
    fn analytic_savings() {
        let mu = mu_for_auc(0.903).unwrap();
        let saved = analytic_tests_saved_at(mu, 0.153, 0.9);
        assert!((saved - 0.61).abs() < 0.03);
    }
}
