//! Sample statistics and the two-tailed variance-ratio F-test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n − 1) variance; zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Upper tail `P(F ≥ x)`, evaluated directly rather than as `1 − cdf`.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
}

/// Two-tailed p-value for equality of variances. The larger sample
/// variance goes in the numerator, so the result does not depend on
/// argument order.
pub fn f_test_two_tailed(a: &[f64], b: &[f64]) -> Result<f64> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::invalid(
                "sample",
                "an F-test needs at least two values per sample",
            ));
        }
    }
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let ((v_hi, n_hi), (v_lo, n_lo)) = if (va, a.len()) >= (vb, b.len()) {
        ((va, a.len()), (vb, b.len()))
    } else {
        ((vb, b.len()), (va, a.len()))
    };
    if v_hi == v_lo && n_hi == n_lo {
        return Ok(1.0);
    }
    let f = v_hi / v_lo;
    let (d1, d2) = ((n_hi - 1) as f64, (n_lo - 1) as f64);
    let p = 2.0 * f_cdf(f, d1, d2).min(f_sf(f, d1, d2));
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub mean: [f64; 2],
    /// Sample std of the distances to `mean`.
    pub std: f64,
    pub distances: Vec<f64>,
}

/// Centroid of `points` and the spread of distances around it.
pub fn summarize(points: &[[f64; 2]]) -> Result<PointSummary> {
    if points.is_empty() {
        return Err(Error::Empty("point list"));
    }
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let distances: Vec<f64> = points
        .iter()
        .map(|p| (p[0] - mean[0]).hypot(p[1] - mean[1]))
        .collect();
    Ok(PointSummary {
        mean,
        std: sample_std(&distances),
        distances,
    })
}
