use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use super::TestResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs (a_i, b_j) with a_i > b_j, ties counting one half.
    pub u_a: f64,
    pub u_b: f64,
    /// Continuity-corrected z score of `u_a`.
    pub z: f64,
    /// `statistic` is `u_a`; two-sided p-value.
    pub result: TestResult,
}

/// Two-sided Mann-Whitney U test with the tie-corrected normal approximation.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("Mann-Whitney U needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Mann-Whitney sample".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut pooled: Vec<(f64, bool)> =
        a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    // Midranks, accumulating the tie correction sum(t^3 - t).
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += pooled[i..=j].iter().filter(|p| p.1).count() as f64 * midrank;
        i = j + 1;
    }
    let u_a = rank_sum_a - na * (na + 1.0) / 2.0;
    let u_b = na * nb - u_a;

    let n = na + nb;
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    let (z, p) = if var <= 0.0 {
        (0.0, 1.0)
    } else {
        let diff = u_a - mean;
        let corrected = (diff.abs() - 0.5).max(0.0) * diff.signum();
        let z = corrected / var.sqrt();
        let normal = Normal::standard();
        (z, 2.0 * (1.0 - normal.cdf(z.abs())))
    };
    Ok(MannWhitney { u_a, u_b, z, result: TestResult::from_p_value(u_a, p) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    pub result: TestResult,
}

/// One-way ANOVA F test.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData("ANOVA needs at least two groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "every ANOVA group needs two points, found one with {}",
            g.len()
        )));
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    if ss_within <= 0.0 {
        return Err(Error::ZeroVariance("within-group variance".into()));
    }
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = 1.0 - dist.cdf(f);
    Ok(Anova { f, df_between, df_within, ss_between, ss_within, result: TestResult::from_p_value(f, p) })
}
