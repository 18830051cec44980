use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::quantile_sorted;

/// Tukey boxplot summary with the 1.5 x IQR outlier rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Smallest sample inside the lower fence.
    pub whisker_low: f64,
    /// Largest sample inside the upper fence.
    pub whisker_high: f64,
    /// Samples outside `[q1 - 1.5 iqr, q3 + 1.5 iqr]`, ascending.
    pub outliers: Vec<f64>,
}

/// Quartiles use linear interpolation between order statistics.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotSummary> {
    if values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "boxplot needs at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("boxplot sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let inside = || sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    let whisker_low = inside().next().unwrap_or(q1);
    let whisker_high = inside().last().unwrap_or(q3);
    let outliers = sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    Ok(BoxplotSummary { q1, median, q3, iqr, whisker_low, whisker_high, outliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_far_outlier() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        v.push(1000.0);
        let b = boxplot_stats(&v).unwrap();
        // n = 101: Q1 and Q3 fall exactly on the 26th and 76th order statistics.
        assert_eq!(b.q1, 26.0);
        assert_eq!(b.median, 51.0);
        assert_eq!(b.q3, 76.0);
        assert_eq!(b.outliers, vec![1000.0]);
        assert_eq!(b.whisker_high, 100.0);
        assert_eq!(b.whisker_low, 1.0);
    }

    #[test]
    fn constant_sample() {
        let b = boxplot_stats(&[4.0; 9]).unwrap();
        assert_eq!(b.iqr, 0.0);
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn too_few_values() {
        assert!(boxplot_stats(&[1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn invariants(v in proptest::collection::vec(-1e3f64..1e3, 4..80)) {
            let b = boxplot_stats(&v).unwrap();
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            let hi = b.q3 + 1.5 * b.iqr;
            let lo = b.q1 - 1.5 * b.iqr;
            prop_assert!(b.whisker_high <= hi);
            prop_assert!(v.iter().filter(|x| **x <= hi).all(|x| *x <= b.whisker_high));
            for o in &b.outliers {
                prop_assert!(*o < lo || *o > hi);
            }
        }

        #[test]
        fn symmetric_sample_median_is_mean(v in proptest::collection::vec(0.0f64..100.0, 2..40)) {
            let mut s: Vec<f64> = v.iter().map(|x| 50.0 + x).collect();
            s.extend(v.iter().map(|x| 50.0 - x));
            let b = boxplot_stats(&s).unwrap();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            prop_assert!((b.median - mean).abs() < 1e-9);
        }
    }
}
