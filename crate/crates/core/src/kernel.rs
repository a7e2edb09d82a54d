//! Periodic heat kernel on the torus of circumference 2 and its semigroup.
//!
//! Two representations of the same kernel are available:
//!
//! * the Gaussian image sum `(4 pi t)^{-1/2} sum_n exp(-(d + 2n)^2 / 4t)`,
//!   which converges fast for small `t`;
//! * the cosine series `1/2 + sum_{m >= 1} exp(-pi^2 m^2 t) cos(pi m d)`,
//!   which converges fast for large `t`.
//!
//! Each is truncated where an a-priori bound on the omitted tail drops below
//! [`KernelConfig::tail_tolerance`].

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::fields::{norm_l1, GridFunction, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub tail_tolerance: f64,
    pub crossover_time: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { tail_tolerance: 1e-15, crossover_time: 0.25 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tolerance > 0.0 && self.tail_tolerance <= 1e-6) {
            return Err(Error::Config(format!(
                "tail_tolerance must lie in (0, 1e-6], got {}",
                self.tail_tolerance
            )));
        }
        if !(self.crossover_time > 0.0 && self.crossover_time <= 1.0) {
            return Err(Error::Config(format!(
                "crossover_time must lie in (0, 1], got {}",
                self.crossover_time
            )));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")))
    }
}

/// Signed displacement `x - y` reduced to `[-1, 1]`.
fn displacement(x: f64, y: f64) -> f64 {
    let d = (x - y + 1.0).rem_euclid(2.0) - 1.0;
    if d < -1.0 {
        d + 2.0
    } else {
        d
    }
}

/// Number of image pairs needed so that the omitted images `|n| > terms`
/// contribute at most `tol`.
///
/// For `|d| <= 1` and `|n| >= N + 1`, `|d + 2n| >= 2|n| - 1`, and successive
/// bounds shrink by at least `exp(-2 (N + 1) / t)`.
pub(crate) fn image_terms(t: f64, tol: f64) -> usize {
    let pref = 1.0 / (4.0 * PI * t).sqrt();
    let mut n = 0usize;
    loop {
        let k = (n + 1) as f64;
        let lead = (-(2.0 * k - 1.0).powi(2) / (4.0 * t)).exp();
        let ratio = (-2.0 * k / t).exp();
        if 2.0 * pref * lead / (1.0 - ratio) <= tol {
            return n;
        }
        n += 1;
    }
}

/// Number of cosine modes needed so that modes `m > terms` contribute at most
/// `tol`, bounding the tail by a geometric series.
pub(crate) fn spectral_terms(t: f64, tol: f64) -> usize {
    let mut m = 0usize;
    loop {
        let k = (m + 1) as f64;
        let lead = (-PI * PI * k * k * t).exp();
        let ratio = (-PI * PI * (2.0 * k + 1.0) * t).exp();
        if lead / (1.0 - ratio) <= tol {
            return m;
        }
        m += 1;
    }
}

/// Image-sum evaluation for displacement `d` in `[-1, 1]`.
pub fn kernel_image_sum(t: f64, d: f64, tol: f64) -> f64 {
    let terms = image_terms(t, tol) as i64;
    let inv4t = 1.0 / (4.0 * t);
    let sum: f64 = (-terms..=terms)
        .map(|n| {
            let z = d + 2.0 * n as f64;
            (-z * z * inv4t).exp()
        })
        .sum();
    sum / (4.0 * PI * t).sqrt()
}

/// Cosine-series evaluation for displacement `d`.
pub fn kernel_spectral(t: f64, d: f64, tol: f64) -> f64 {
    let terms = spectral_terms(t, tol);
    let mut sum = 0.5;
    for m in 1..=terms {
        let mf = m as f64;
        sum += (-PI * PI * mf * mf * t).exp() * (PI * mf * d).cos();
    }
    sum
}

/// `p_t(x, y)` on the torus.
pub fn heat_kernel(t: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    check_time(t)?;
    let d = displacement(x, y);
    Ok(if t <= cfg.crossover_time {
        kernel_image_sum(t, d, cfg.tail_tolerance)
    } else {
        kernel_spectral(t, d, cfg.tail_tolerance)
    })
}

/// Kernel values `p_t(k dx)` for `k = 0..n`, the first row of the circulant
/// kernel matrix.
fn kernel_row(t: f64, grid: TorusGrid, cfg: &KernelConfig) -> Result<Vec<f64>> {
    (0..grid.n_points())
        .map(|k| heat_kernel(t, k as f64 * grid.spacing(), 0.0, cfg))
        .collect()
}

/// Discrete semigroup `(P_t f)(x_i) = dx sum_j p_t(x_i, x_j) f(x_j)`.
pub fn semigroup_apply(t: f64, f: &GridFunction, cfg: &KernelConfig) -> Result<GridFunction> {
    check_time(t)?;
    let grid = f.grid();
    let n = grid.n_points();
    let dx = grid.spacing();
    let row = kernel_row(t, grid, cfg)?;
    let values = f.values();
    let out = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, &v) in values.iter().enumerate() {
                acc += row[(i + n - j) % n] * v;
            }
            dx * acc
        })
        .collect();
    GridFunction::new(grid, out)
}

/// Largest adjacent difference quotient `|g_{i+1} - g_i| / dx`, periodic.
pub fn discrete_lipschitz(g: &GridFunction) -> f64 {
    let v = g.values();
    let n = v.len();
    let dx = g.grid().spacing();
    (0..n).map(|i| (v[(i + 1) % n] - v[i]).abs() / dx).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub t: f64,
    pub measured_lip: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Smoothing bound `Lip(P_t f) <= (7 / sqrt t)(1 + 1 / sqrt t) ||f||_1`.
pub fn lipschitz_bound(t: f64, l1: f64) -> f64 {
    let s = t.sqrt();
    7.0 / s * (1.0 + 1.0 / s) * l1
}

pub fn check_lipschitz_bound(
    t: f64,
    f: &GridFunction,
    cfg: &KernelConfig,
) -> Result<LipschitzReport> {
    let smoothed = semigroup_apply(t, f, cfg)?;
    let measured_lip = discrete_lipschitz(&smoothed);
    let bound = lipschitz_bound(t, norm_l1(f)?);
    Ok(LipschitzReport { t, measured_lip, bound, pass: measured_lip <= bound })
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `A = P{1/sqrt 2 <= Z <= 3/sqrt 2}` for standard normal `Z`.
pub fn ball_mass_constant() -> f64 {
    normal_cdf(3.0 / SQRT_2) - normal_cdf(1.0 / SQRT_2)
}

/// `int_{a - r}^{a + r} p_t(x, y) dy` over the torus, evaluated exactly from
/// the image sum as a sum of normal-CDF differences. Requires `r <= 1`.
pub fn ball_integral(t: f64, x: f64, a: f64, r: f64, tol: f64) -> f64 {
    let d = displacement(a, x);
    let s = (2.0 * t).sqrt();
    let terms = image_terms(t, tol) as i64 + 1;
    (-terms..=terms)
        .map(|n| {
            let c = d + 2.0 * n as f64;
            normal_cdf((c + r) / s) - normal_cdf((c - r) / s)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallMassReport {
    pub t: f64,
    pub center: f64,
    pub c: f64,
    pub min_over_ball: f64,
    pub points_checked: usize,
    #[serde(rename = "A")]
    pub a_constant: f64,
    /// `log 8 - log A`.
    pub chi_log: f64,
    /// `log 8 - A`.
    pub chi_linear: f64,
    pub pass: bool,
}

/// Lower bound on the kernel mass of a ball, checked at every grid point
/// `x` within distance `(c + 1) sqrt t` of `a`.
pub fn check_ball_mass(
    t: f64,
    a: f64,
    c: f64,
    grid: TorusGrid,
    cfg: &KernelConfig,
) -> Result<BallMassReport> {
    check_time(t)?;
    if !(c >= 1.0) {
        return Err(Error::Domain(format!("ball-mass check needs c >= 1, got {c}")));
    }
    let radius = c * t.sqrt();
    if radius > 1.0 {
        return Err(Error::Domain(format!("ball radius c sqrt t = {radius} exceeds 1")));
    }
    let outer = (c + 1.0) * t.sqrt();
    let mut min_over_ball = f64::INFINITY;
    let mut points_checked = 0;
    for x in grid.points().filter(|&x| TorusGrid::distance(x, a) <= outer) {
        let mass = ball_integral(t, x, a, radius, cfg.tail_tolerance);
        min_over_ball = min_over_ball.min(mass);
        points_checked += 1;
    }
    let a_constant = ball_mass_constant();
    let log8 = 8f64.ln();
    Ok(BallMassReport {
        t,
        center: a,
        c,
        min_over_ball,
        points_checked,
        a_constant,
        chi_log: log8 - a_constant.ln(),
        chi_linear: log8 - a_constant,
        pass: points_checked == 0 || min_over_ball >= a_constant,
    })
}
