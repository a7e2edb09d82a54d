//! Kolmogorov-Smirnov tests and small regression helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used in the p-value.
    pub effective_n: f64,
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Small-argument form: P(K <= x) = sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2)).
        let c = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=6).map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=6)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value with the finite-sample correction
/// `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
fn ks_p_value(d: f64, n: f64) -> f64 {
    let rn = n.sqrt();
    kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d)
}

fn sorted_finite(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diagnostic("sample contains non-finite values".into()));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample test of `sample` against the standard normal distribution.
pub fn ks_normal(sample: &[f64]) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::Diagnostic("empty sample".into()));
    }
    let v = sorted_finite(sample)?;
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n), effective_n: n })
}

/// Two-sample test of equal distributions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Diagnostic("empty sample".into()));
    }
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, ne), effective_n: ne })
}

/// Sample mean and standard deviation (denominator `n - 1`).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Least-squares slope of `y` against `t`; `None` with fewer than two
/// distinct abscissae.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
