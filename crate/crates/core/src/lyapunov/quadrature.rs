//! Quadrature for the closed-form exponent
//!
//! `lambda(Q) = (1/pi) (Q/2)^6 e^{(pi/Q)^2} int_0^inf g(y) sin(2 pi y / Q^2) e^{-(y/Q)^2} dy`,
//! with `g(y) = sinh(y) / cosh(y/2)^6`.
//!
//! On the real line the prefactor `e^{(pi/Q)^2}` multiplies an integral that
//! is that many times smaller than its integrand, so double precision runs
//! out of digits as `Q` decreases. The main route moves the contour instead.
//! The integrand is even in `y`, so the half-line integral is half the
//! full-line one; writing the sine as the imaginary part of `e^{i a y}` and
//! completing the square gives
//!
//! `e^{(pi/Q)^2} int_R g(y) sin(a y) e^{-(y/Q)^2} dy = Im int_R g(y) e^{-(y - i pi)^2 / Q^2} dy`.
//!
//! `g` is meromorphic with poles at `i pi (2k + 1)`, so the line can be moved
//! to `Im y = pi / 2`. There the Gaussian has modulus
//! `e^{pi^2 / (4 Q^2)} e^{-s^2/Q^2}`, which leaves a far milder cancellation,
//! and symmetry folds the line back onto `s >= 0`:
//!
//! `lambda(Q) = (1/pi) (Q/2)^6 Im int_0^inf g(s + i pi/2) e^{-(s - i pi/2)^2 / Q^2} ds`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Range of `Q` accepted by [`gk_lambda`].
pub const GK_Q_RANGE: (f64, f64) = (0.5, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    /// `|I_{2N} - I_N|` between the last two panel doublings plus the
    /// truncation bound for the discarded tail.
    pub error_estimate: f64,
    pub nodes_used: usize,
}

/// Composite Gauss-Legendre settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Nodes per panel.
    pub order: usize,
    pub initial_panels: usize,
    pub max_panels: usize,
    /// Relative tolerance for the doubling test and the tail bound.
    pub tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { order: 20, initial_panels: 8, max_panels: 1 << 14, tolerance: 1e-13 }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre needs at least one node");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// `int_a^b f` with `panels` equal Gauss-Legendre panels.
fn composite<T, F>(f: &F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    F: Fn(f64) -> T,
{
    let h = (b - a) / panels as f64;
    let mut total = T::default();
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut panel = T::default();
        for (x, w) in rule.0.iter().zip(&rule.1) {
            panel = panel + f(mid + 0.5 * h * x) * *w;
        }
        total = total + panel * (0.5 * h);
    }
    total
}

/// Double the panel count until successive values agree.
fn adaptive<F: Fn(usize) -> f64>(eval: F, cfg: &QuadratureConfig) -> (f64, f64, usize) {
    let mut panels = cfg.initial_panels;
    let mut prev = eval(panels);
    loop {
        let next_panels = panels * 2;
        let next = eval(next_panels);
        let diff = (next - prev).abs();
        if diff <= cfg.tolerance * next.abs() || next_panels >= cfg.max_panels {
            return (next, diff, next_panels * cfg.order);
        }
        prev = next;
        panels = next_panels;
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= GK_Q_RANGE.0 && q <= GK_Q_RANGE.1) {
        return Err(Error::Domain(format!(
            "Q = {q} is outside [{}, {}]: below the window the e^(pi/Q)^2 prefactor cancels \
             more digits than double precision holds, above it the oscillation period \
             approaches the node spacing and the prefactor (Q/2)^6 overflows the tail bound",
            GK_Q_RANGE.0, GK_Q_RANGE.1
        )));
    }
    Ok(())
}

fn prefactor(q: f64) -> f64 {
    (q / 2.0).powi(6) / std::f64::consts::PI
}

/// `g(z) = sinh z / cosh(z/2)^6 = 2 tanh(z/2) sech(z/2)^4`, evaluated with
/// `e^{-z/2}` so that large `Re z` does not overflow.
fn g_complex(z: Complex64) -> Complex64 {
    let e = (-0.5 * z).exp();
    let e2 = e * e;
    let denom = Complex64::new(1.0, 0.0) + e2;
    let sech = 2.0 * e / denom;
    let tanh = (Complex64::new(1.0, 0.0) - e2) / denom;
    let s2 = sech * sech;
    2.0 * tanh * s2 * s2
}

fn g_real(y: f64) -> f64 {
    let e = (-0.5 * y).exp();
    let e2 = e * e;
    let sech = 2.0 * e / (1.0 + e2);
    let tanh = (1.0 - e2) / (1.0 + e2);
    2.0 * tanh * sech.powi(4)
}

/// Upper limit on the shifted line. `|g(s + i pi/2)| <= 32 e^{-2 s}` and the
/// Gaussian factor is at most `e^{pi^2/(4 Q^2)} e^{-s^2/Q^2}`, so the tail
/// past `Y` is below `tol` relative once both exponents exceed `log(1/tol)`.
fn contour_limit(q: f64, tol: f64) -> f64 {
    let l = (1.0 / tol).ln();
    let gauss = 3.0 * q * l.sqrt();
    let exponential = (std::f64::consts::PI.powi(2) / (4.0 * q * q) + l + 32f64.ln()) / 2.0;
    8f64.max(gauss).max(exponential)
}

/// Contour integrand `Im[g(s + i pi/2) e^{-(s - i pi/2)^2/Q^2}]`.
fn contour_integrand(q: f64) -> impl Fn(f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let inv_q2 = 1.0 / (q * q);
    move |s: f64| {
        let z = Complex64::new(s, half_pi);
        let w = Complex64::new(s, -half_pi);
        (g_complex(z) * (-(w * w) * inv_q2).exp()).im
    }
}

/// Value of the contour route with a fixed number of panels.
pub fn gk_lambda_fixed(q: f64, panels: usize) -> Result<f64> {
    check_q(q)?;
    let cfg = QuadratureConfig::default();
    let rule = gauss_legendre(cfg.order);
    let f = contour_integrand(q);
    let y = contour_limit(q, cfg.tolerance);
    Ok(prefactor(q) * composite(&f, 0.0, y, panels.max(1), &rule))
}

/// Closed-form exponent by quadrature along the shifted contour.
pub fn gk_lambda(q: f64) -> Result<QuadratureResult> {
    gk_lambda_with(q, &QuadratureConfig::default())
}

pub fn gk_lambda_with(q: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    check_q(q)?;
    let rule = gauss_legendre(cfg.order);
    let f = contour_integrand(q);
    let y = contour_limit(q, cfg.tolerance);
    let (integral, diff, nodes) = adaptive(|p| composite(&f, 0.0, y, p, &rule), cfg);
    let pre = prefactor(q);
    let value = pre * integral;
    let tail = cfg.tolerance * value.abs();
    finish(value, pre * diff + tail, nodes)
}

/// The same exponent integrated on the real line. Accurate for `Q >= 1`;
/// kept as an independent cross-check of the contour route.
pub fn gk_lambda_real_line(q: f64) -> Result<QuadratureResult> {
    check_q(q)?;
    let cfg = QuadratureConfig::default();
    let rule = gauss_legendre(cfg.order);
    let a = 2.0 * std::f64::consts::PI / (q * q);
    let f = move |y: f64| g_real(y) * (a * y).sin() * (-(y / q).powi(2)).exp();
    let l = (1.0 / cfg.tolerance).ln();
    let y = 8f64.max(3.0 * q * l.sqrt()).max((l + 32f64.ln() + (std::f64::consts::PI / q).powi(2)) / 2.0);
    let (integral, diff, nodes) = adaptive(|p| composite(&f, 0.0, y, p, &rule), &cfg);
    let pre = prefactor(q) * (std::f64::consts::PI / q).powi(2).exp();
    finish(pre * integral, pre * diff + cfg.tolerance * (pre * integral).abs(), nodes)
}

fn finish(value: f64, error_estimate: f64, nodes_used: usize) -> Result<QuadratureResult> {
    if !value.is_finite() {
        return Err(Error::Domain(format!("quadrature produced {value}")));
    }
    Ok(QuadratureResult { value, error_estimate, nodes_used })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Deserialize)]
    struct Fixture {
        values: Vec<FixtureValue>,
    }

    #[derive(Deserialize)]
    struct FixtureValue {
        q: f64,
        lambda: String,
    }

    fn fixture() -> Vec<(f64, f64)> {
        let f: Fixture = serde_json::from_str(include_str!("../../fixtures/gk_lambda.json")).unwrap();
        f.values.into_iter().map(|v| (v.q, v.lambda.parse().unwrap())).collect()
    }

    /// Tanh-sinh rule on `[a, b]` with step 1/64 on `t in [-4, 4]`.
    fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
        let r = 0.5 * (b - a);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let h = 1.0 / 64.0;
        let mut total = 0.0;
        let kmax = (4.0 / h) as i64;
        for k in -kmax..=kmax {
            let t = k as f64 * h;
            let u = half_pi * t.sinh();
            let x = u.tanh();
            let w = half_pi * t.cosh() / u.cosh().powi(2);
            if w < 1e-300 {
                continue;
            }
            // 1 - |x| computed without cancellation.
            let comp = 1.0 / (u.abs().exp() * u.cosh());
            let node = if x < 0.0 { a + r * comp } else { b - r * comp };
            total += w * f(node);
        }
        h * r * total
    }

    /// Independent oracle: tanh-sinh along `Im y = 2 pi / 3`, a different
    /// contour from the main route.
    fn oracle_contour(q: f64) -> f64 {
        let c = 2.0 * std::f64::consts::PI / 3.0;
        let shift = c - std::f64::consts::PI;
        let f = |s: f64| {
            let z = Complex64::new(s, c);
            let w = Complex64::new(s, shift);
            let g = z.sinh() / (0.5 * z).cosh().powi(6);
            (g * (-(w * w) / (q * q)).exp()).im
        };
        let upper = 40f64.max(12.0 * q);
        let panels = 16;
        let step = upper / panels as f64;
        let integral: f64 = (0..panels).map(|p| tanh_sinh(f, p as f64 * step, (p + 1) as f64 * step)).sum();
        prefactor(q) * integral
    }

    /// Independent oracle: tanh-sinh on the real line, split at the zeros of
    /// the sine. Usable where the cancellation is mild.
    fn oracle_real_line(q: f64) -> f64 {
        let a = 2.0 * std::f64::consts::PI / (q * q);
        let f = |y: f64| y.sinh() / (0.5 * y).cosh().powi(6) * (a * y).sin() * (-(y / q).powi(2)).exp();
        let period = std::f64::consts::PI / a;
        let upper = 40f64.max(12.0 * q);
        let mut lo = 0.0;
        let mut total = 0.0;
        while lo < upper {
            let hi = (lo + period).min(upper);
            total += tanh_sinh(f, lo, hi);
            lo = hi;
        }
        prefactor(q) * (std::f64::consts::PI / q).powi(2).exp() * total
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(20);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..40 {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((got - exact).abs() < 1e-14, "degree {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn stable_g_matches_definition() {
        for &y in &[0.0f64, 0.3, 2.0, 10.0] {
            let direct = y.sinh() / (0.5 * y).cosh().powi(6);
            assert!((g_real(y) - direct).abs() <= 1e-15 * direct.abs().max(1e-300));
            let z = Complex64::new(y, 1.1);
            let direct = z.sinh() / (0.5 * z).cosh().powi(6);
            assert!((g_complex(z) - direct).norm() <= 1e-14 * direct.norm());
        }
        assert!(g_real(800.0).is_finite());
    }

    #[test]
    fn oracles_agree_with_fixture() {
        for (q, v) in fixture() {
            let c = oracle_contour(q);
            assert!((c - v).abs() <= 1e-10 * v, "contour oracle Q={q}: {c} vs {v}");
            if q >= 1.0 {
                let r = oracle_real_line(q);
                assert!((r - v).abs() <= 1e-10 * v, "real-line oracle Q={q}: {r} vs {v}");
            }
        }
    }

    #[test]
    fn main_route_matches_fixture() {
        for (q, v) in fixture() {
            let r = gk_lambda(q).unwrap();
            assert!((r.value - v).abs() <= 1e-9 * v, "Q={q}: {} vs {v}", r.value);
            assert!(r.error_estimate <= 1e-8 * r.value.abs(), "Q={q}: {r:?}");
            assert!(r.value > 0.0);
        }
    }

    #[test]
    fn real_line_route_matches_where_cancellation_is_mild() {
        for (q, v) in fixture().into_iter().filter(|(q, _)| *q >= 1.0) {
            let r = gk_lambda_real_line(q).unwrap();
            assert!((r.value - v).abs() <= 1e-9 * v, "Q={q}: {} vs {v}", r.value);
        }
    }

    #[test]
    fn fixture_matches_polynomial_closed_form() {
        for (q, v) in fixture() {
            let closed = q * q / 4.0 + q.powi(4) / 24.0;
            assert!((closed - v).abs() <= 1e-14 * v, "Q={q}");
        }
    }

    #[test]
    fn doubling_nodes_is_stable_at_two() {
        let a = gk_lambda_fixed(2.0, 64).unwrap();
        let b = gk_lambda_fixed(2.0, 128).unwrap();
        assert!((a - b).abs() < 1e-10 * b.abs());
    }

    #[test]
    fn continuous_across_the_window() {
        // Third differences of a smooth function are O(h^3); a change in the
        // node count between neighbouring Q would show up as a jump.
        let h = 1e-3;
        let mut q = 0.5;
        while q + 3.0 * h <= 8.0 {
            let r: Vec<QuadratureResult> = (0..4).map(|k| gk_lambda(q + k as f64 * h).unwrap()).collect();
            let third = (r[3].value - 3.0 * r[2].value + 3.0 * r[1].value - r[0].value).abs();
            let noise: f64 = r.iter().map(|x| 3.0 * x.error_estimate).sum();
            assert!(third <= 1e-8 * (1.0 + r[0].value) + noise, "Q={q}: third difference {third}");
            assert!(r.windows(2).all(|w| w[0].value < w[1].value));
            q += 0.0625;
        }
    }

    #[test]
    fn rejects_q_outside_window() {
        for q in [0.49, 8.01, 0.0, -1.0, f64::NAN] {
            assert!(matches!(gk_lambda(q), Err(Error::Domain(_))));
        }
    }
}
