//! Error metrics, exploratory statistics, hypothesis tests and STL.

mod adf;
mod boxplot;
mod correlation;
mod hypothesis;
mod metrics;
mod stl;

use serde::{Deserialize, Serialize};

pub use adf::{adf_critical_values, adf_test, schwert_max_lag, AdfCriticalValues, AdfResult};
pub use boxplot::{boxplot_stats, BoxplotSummary};
pub use correlation::{acf, pacf, white_noise_band};
pub use hypothesis::{anova_oneway, mann_whitney_u, Anova, MannWhitney};
pub use metrics::{mape, rmse, Mape};
pub use stl::{stl_decompose, StlConfig, StlResult};

/// Outcome of a hypothesis test.
///
/// Tests with a tabulated null distribution (ADF) report the 5% critical
/// value instead of a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub critical_value: Option<f64>,
    pub reject_at_5pct: bool,
}

impl TestResult {
    pub(crate) fn from_p_value(statistic: f64, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        TestResult { statistic, p_value: Some(p), critical_value: None, reject_at_5pct: p < 0.05 }
    }
}
