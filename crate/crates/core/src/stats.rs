//! Small statistical helpers: normal quantiles and chi-square goodness of fit.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided standard normal critical value for `confidence` in (0, 1).
pub fn normal_critical_value(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + 0.5 * confidence)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Expected count below which a bin is pooled with others.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// Pearson goodness-of-fit test of `observed` counts against `probabilities`.
///
/// Bins with expected count under five are pooled, smallest first, until the
/// pooled bin reaches five or absorbs a regular bin. An observation in a
/// zero-probability bin yields `p_value = 0`.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> ChiSquareOutcome {
    assert_eq!(observed.len(), probabilities.len());
    let total: u64 = observed.iter().sum();
    let total_f = total as f64;

    if observed
        .iter()
        .zip(probabilities)
        .any(|(&o, &p)| p <= 0.0 && o > 0)
    {
        return ChiSquareOutcome {
            statistic: f64::INFINITY,
            dof: 0,
            p_value: 0.0,
        };
    }

    let mut bins: Vec<(f64, f64)> = observed
        .iter()
        .zip(probabilities)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| (o as f64, p * total_f))
        .collect();
    bins.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut pooled = (0.0, 0.0);
    let mut regular = Vec::with_capacity(bins.len());
    for (o, e) in bins {
        if e < MIN_EXPECTED_COUNT || (pooled.1 > 0.0 && pooled.1 < MIN_EXPECTED_COUNT) {
            pooled.0 += o;
            pooled.1 += e;
        } else {
            regular.push((o, e));
        }
    }
    if pooled.1 > 0.0 {
        regular.push(pooled);
    }

    if regular.len() < 2 {
        return ChiSquareOutcome {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let statistic: f64 = regular.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = regular.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    ChiSquareOutcome {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    }
}
