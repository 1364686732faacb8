//! Inference kernels: proportion intervals, DeLong AUC variance and tests,
//! McNemar, and the stratified percentile bootstrap.

mod bootstrap;
mod delong;
mod normal;
mod proportion;

use serde::Serialize;

pub use bootstrap::{bootstrap_percentile, BootstrapConfig};
pub use delong::{
    delong_ci, delong_paired, delong_unpaired, delong_variance, fast_auc_kernel,
    naive_auc_kernel, Placements,
};
pub use normal::{norm_cdf, norm_quantile, norm_sf, two_sided_p, z_for_level};
pub use proportion::{mcnemar, paired_diff_ci, wilson_ci, MCNEMAR_EXACT_BELOW};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    /// `estimate ± half_width`, truncated to `[min, max]`.
    pub fn around(estimate: f64, half_width: f64, level: f64, min: f64, max: f64) -> Self {
        ConfidenceInterval {
            estimate,
            lower: (estimate - half_width).clamp(min, estimate.max(min)),
            upper: (estimate + half_width).clamp(estimate.min(max), max),
            level,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    DelongPaired,
    DelongUnpaired,
    McnemarAsymptotic,
    McnemarExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Set when the test statistic had no variance to work with (zero
    /// discordant pairs, or a zero DeLong variance).
    pub degenerate: bool,
}
