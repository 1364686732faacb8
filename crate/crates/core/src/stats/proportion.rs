//! Binomial-proportion intervals and the McNemar test.

use libm::erfc;
use libm::lgamma as ln_gamma;

use super::normal::z_for_level;
use super::{ConfidenceInterval, TestMethod, TestResult};
use crate::error::{Error, Result};

/// Wilson score interval for `successes / trials`.
pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<ConfidenceInterval> {
    let z = z_for_level(level)?;
    if trials == 0 {
        return Err(Error::ZeroTrials);
    }
    if successes > trials {
        return Err(Error::InvalidCounts(format!("{successes} successes of {trials} trials")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lower = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let upper = if successes == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok(ConfidenceInterval { estimate: p, lower, upper, level })
}

/// Wald interval for the difference of two paired proportions, `(b - c) / n`,
/// where `b` and `c` are the discordant counts among `n` shared subjects.
pub fn paired_diff_ci(b: u64, c: u64, n: u64, level: f64) -> Result<ConfidenceInterval> {
    let z = z_for_level(level)?;
    if n == 0 {
        return Err(Error::ZeroTrials);
    }
    if b + c > n {
        return Err(Error::InvalidCounts(format!("b + c = {} exceeds n = {n}", b + c)));
    }
    let (bf, cf, nf) = (b as f64, c as f64, n as f64);
    let estimate = (bf - cf) / nf;
    let se = (bf + cf - (bf - cf).powi(2) / nf).max(0.0).sqrt() / nf;
    Ok(ConfidenceInterval::around(estimate, z * se, level, -1.0, 1.0))
}

/// Default discordant-pair count below which McNemar uses the exact test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// McNemar test on discordant counts `b` and `c`.
///
/// Below `exact_threshold` discordant pairs the two-sided exact binomial
/// test with success probability 1/2 is used; otherwise the
/// continuity-corrected chi-square with one degree of freedom.
pub fn mcnemar(b: u64, c: u64, exact_threshold: u64) -> TestResult {
    let n = b + c;
    if n == 0 {
        return TestResult {
            statistic: 0.0,
            p_value: 1.0,
            method: TestMethod::McnemarExact,
            degenerate: true,
        };
    }
    if n < exact_threshold {
        let k = b.min(c);
        let tail: f64 = (0..=k).map(|i| binomial_half_pmf(n, i)).sum();
        TestResult {
            statistic: k as f64,
            p_value: (2.0 * tail).min(1.0),
            method: TestMethod::McnemarExact,
            degenerate: false,
        }
    } else {
        let diff = (b as f64 - c as f64).abs();
        let chi2 = (diff - 1.0).max(0.0).powi(2) / n as f64;
        TestResult {
            statistic: chi2,
            p_value: erfc((chi2 / 2.0).sqrt()).min(1.0),
            method: TestMethod::McnemarAsymptotic,
            degenerate: false,
        }
    }
}

/// `C(n, k) / 2^n`, evaluated in log space.
fn binomial_half_pmf(n: u64, k: u64) -> f64 {
    let (n, k) = (n as f64, k as f64);
    (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0) - n * std::f64::consts::LN_2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_boundaries() {
        let ci = wilson_ci(0, 10, 0.95).unwrap();
        assert_eq!(ci.lower, 0.0);
        assert!(ci.upper > 0.0);
        let ci = wilson_ci(10, 10, 0.95).unwrap();
        assert_eq!(ci.upper, 1.0);
        assert!(ci.lower < 1.0);
    }

    #[test]
    fn wilson_half() {
        let ci = wilson_ci(50, 100, 0.95).unwrap();
        assert!((ci.lower - 0.4038).abs() < 1e-3);
        assert!((ci.upper - 0.5962).abs() < 1e-3);
        assert_eq!(ci.estimate, 0.5);
    }

    #[test]
    fn wilson_errors() {
        assert!(matches!(wilson_ci(0, 0, 0.95), Err(Error::ZeroTrials)));
        assert!(matches!(wilson_ci(1, 2, 1.5), Err(Error::BadLevel(_))));
        assert!(wilson_ci(3, 2, 0.95).is_err());
    }

    #[test]
    fn mcnemar_examples() {
        let t = mcnemar(0, 0, MCNEMAR_EXACT_BELOW);
        assert_eq!(t.p_value, 1.0);

        let t = mcnemar(10, 4, MCNEMAR_EXACT_BELOW);
        assert_eq!(t.method, TestMethod::McnemarExact);
        // 2 * (1 + 14 + 91 + 364 + 1001) / 2^14
        assert!((t.p_value - 2.0 * 1471.0 / 16384.0).abs() < 1e-12);
        assert!((t.p_value - 0.1796).abs() < 1e-3);

        let t = mcnemar(100, 40, MCNEMAR_EXACT_BELOW);
        assert_eq!(t.method, TestMethod::McnemarAsymptotic);
        assert!((t.statistic - 59.0 * 59.0 / 140.0).abs() < 1e-12);
        assert!((t.p_value - 6.1e-7).abs() < 0.1e-7);
    }

    #[test]
    fn mcnemar_symmetry_and_floor() {
        for (b, c) in [(3, 9), (30, 12), (0, 7), (13, 12)] {
            assert_eq!(mcnemar(b, c, 25).p_value, mcnemar(c, b, 25).p_value);
        }
        let t = mcnemar(20, 21, 25);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn paired_diff_examples() {
        let ci = paired_diff_ci(0, 0, 100, 0.95).unwrap();
        assert_eq!((ci.estimate, ci.lower, ci.upper), (0.0, 0.0, 0.0));

        let ci = paired_diff_ci(30, 10, 200, 0.95).unwrap();
        assert!((ci.estimate - 0.10).abs() < 1e-15);
        assert!((ci.lower - 0.0396).abs() < 1e-3);
        assert!((ci.upper - 0.1604).abs() < 1e-3);

        let ci = paired_diff_ci(5, 5, 50, 0.95).unwrap();
        assert_eq!(ci.estimate, 0.0);
        assert!((ci.upper + ci.lower).abs() < 1e-15);

        assert!(matches!(paired_diff_ci(0, 0, 0, 0.95), Err(Error::ZeroTrials)));
        assert!(paired_diff_ci(6, 5, 10, 0.95).is_err());
    }
}
