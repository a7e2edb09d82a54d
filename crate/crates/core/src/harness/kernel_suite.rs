//! Invariant suite for the heat kernel and its semigroup.

use serde::Serialize;

use crate::error::Result;
use crate::fields::{norm_l1, GridFunction, TorusGrid};
use crate::kernel::{
    ball_mass_constant, check_ball_mass, check_lipschitz_bound, heat_kernel, kernel_image_sum, kernel_spectral,
    semigroup_apply, KernelConfig,
};
use crate::noise::NoiseStream;

/// One named check: the worst measured value against its limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Extreme measured value: a maximum for upper limits, a minimum for
    /// lower limits.
    pub worst: f64,
    pub limit: f64,
    pub cases: usize,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, worst: f64, limit: f64, cases: usize) -> Self {
        Self { name: name.into(), worst, limit, cases, pass: worst <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSuiteReport {
    pub checks: Vec<Check>,
    pub ball_mass_constant: f64,
    /// `log 8 - log A`.
    pub chi_log: f64,
    /// `log 8 - A`.
    pub chi_linear: f64,
    pub pass: bool,
}

/// Non-negative test fields of three shapes: log-normal, folded normal and a
/// spike on a small background.
pub fn random_field(seed: u64, id: u64, grid: TorusGrid) -> Result<GridFunction> {
    let z: Vec<f64> = NoiseStream::new(seed, id, grid, 1.0)?
        .increments(0)
        .into_iter()
        .map(|w| w / grid.spacing().sqrt())
        .collect();
    let values = match id % 3 {
        0 => z.iter().map(|x| x.exp()).collect(),
        1 => z.iter().map(|x| x.abs()).collect(),
        _ => {
            let peak = (z[0].abs() * 1e6) as usize % grid.n_points();
            let mut v: Vec<f64> = z.iter().map(|x| 1e-3 * x.abs()).collect();
            v[peak] += 1.0 / grid.spacing();
            v
        }
    };
    GridFunction::new(grid, values)
}

fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn run_kernel_suite(seed: u64, cfg: &KernelConfig) -> Result<KernelSuiteReport> {
    cfg.validate()?;
    let mut checks = Vec::new();

    // Normalization over the grid for t in [1e-3, 10].
    let grid = TorusGrid::new(1024)?;
    let times = [1e-3, 3e-3, 0.01, 0.05, 0.1, 0.25, 0.3, 1.0, 3.0, 10.0];
    let mut worst = 0.0f64;
    for &t in &times {
        for i in [0, 17, 511] {
            let xi = grid.point(i);
            let mut s = 0.0;
            for xj in grid.points() {
                s += heat_kernel(t, xi, xj, cfg)?;
            }
            worst = worst.max((grid.spacing() * s - 1.0).abs());
        }
    }
    checks.push(Check::at_most("normalization", worst, 1e-9, times.len() * 3));

    // Symmetry and positivity on pseudo-random pairs.
    let z = NoiseStream::new(seed, u64::MAX, TorusGrid::new(256)?, 1.0)?.increments(0);
    let mut worst_sym = 0.0f64;
    let mut min_val = f64::INFINITY;
    for pair in z.chunks(2) {
        let x = (pair[0] * 10.0).sin();
        let y = (pair[1] * 10.0).cos();
        for &t in &[1e-3, 0.05, 0.3, 2.0] {
            let a = heat_kernel(t, x, y, cfg)?;
            let b = heat_kernel(t, y, x, cfg)?;
            worst_sym = worst_sym.max((a - b).abs());
            min_val = min_val.min(a);
        }
    }
    checks.push(Check::at_most("symmetry", worst_sym, 1e-12, z.len() / 2 * 4));
    checks.push(Check { name: "positivity".into(), worst: min_val, limit: 0.0, cases: z.len() * 2, pass: min_val > 0.0 });

    // Semigroup composition on a smooth field.
    let g256 = TorusGrid::new(256)?;
    let smooth = GridFunction::from_fn(g256, |x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos() + 0.3 * (3.0 * std::f64::consts::PI * x).sin())?;
    let mut worst_comp = 0.0f64;
    for &(s, t) in &[(0.01, 0.02), (0.1, 0.2), (0.2, 0.3), (0.5, 1.0)] {
        let two = semigroup_apply(s, &semigroup_apply(t, &smooth, cfg)?, cfg)?;
        let one = semigroup_apply(s + t, &smooth, cfg)?;
        worst_comp = worst_comp.max(sup_diff(&two, &one));
    }
    checks.push(Check::at_most("semigroup_composition", worst_comp, 1e-7, 4));

    // Both representations in a band around the crossover.
    let mut worst_dual = 0.0f64;
    let mut cases = 0;
    let mut t = 0.1;
    while t <= 0.5 + 1e-12 {
        for k in 0..=20 {
            let d = -1.0 + 0.1 * k as f64;
            let a = kernel_image_sum(t, d, cfg.tail_tolerance);
            let b = kernel_spectral(t, d, cfg.tail_tolerance);
            worst_dual = worst_dual.max((a - b).abs());
            cases += 1;
        }
        t += 0.05;
    }
    checks.push(Check::at_most("dual_representation", worst_dual, 1e-10, cases));

    // Long-time limit.
    let mut worst_long = 0.0f64;
    for k in 0..=20 {
        let x = -1.0 + 0.1 * k as f64;
        worst_long = worst_long.max((heat_kernel(10.0, x, 0.0, cfg)? - 0.5).abs());
    }
    checks.push(Check::at_most("long_time_limit", worst_long, 1e-12, 21));

    // Pointwise bound sup_x p_t(x) <= 2 max(1, t^{-1/2}).
    let mut worst_ratio = 0.0f64;
    for &t in &[1e-3, 0.01, 0.1, 0.5, 1.0, 2.0] {
        let sup = heat_kernel(t, 0.0, 0.0, cfg)?;
        worst_ratio = worst_ratio.max(sup / (2.0 * 1f64.max(t.powf(-0.5))));
    }
    checks.push(Check::at_most("pointwise_bound_ratio", worst_ratio, 1.0, 6));

    // Lipschitz smoothing bound on 100 random fields at three times.
    let g128 = TorusGrid::new(128)?;
    let mut worst_lip = 0.0f64;
    let mut lip_cases = 0;
    for id in 0..100 {
        let f = random_field(seed, id, g128)?;
        for &t in &[0.01, 0.1, 1.0] {
            let r = check_lipschitz_bound(t, &f, cfg)?;
            worst_lip = worst_lip.max(r.measured_lip / r.bound);
            lip_cases += 1;
        }
    }
    checks.push(Check::at_most("lipschitz_bound_ratio", worst_lip, 1.0, lip_cases));

    // Ball-mass lower bound: margin min_over_ball - A must be non-negative.
    let mut worst_ball = f64::INFINITY;
    let mut ball_cases = 0;
    for &t in &[1e-3f64, 0.01, 0.04, 0.1] {
        for &c in &[1.0, 1.5, 2.0, 3.0] {
            if c * t.sqrt() > 1.0 {
                continue;
            }
            for &a in &[0.0, 0.37, -0.9] {
                let r = check_ball_mass(t, a, c, g128, cfg)?;
                worst_ball = worst_ball.min(r.min_over_ball - r.a_constant);
                ball_cases += 1;
            }
        }
    }
    checks.push(Check {
        name: "ball_mass_margin".into(),
        worst: worst_ball,
        limit: 0.0,
        cases: ball_cases,
        pass: worst_ball >= 0.0,
    });

    let spike = GridFunction::unit_spike(g128, g128.origin_index(), 1.0)?;
    let lip_example = check_lipschitz_bound(0.04, &spike, cfg)?;
    checks.push(Check::at_most("lipschitz_bound_example_0.04", lip_example.measured_lip, lip_example.bound, 1));
    debug_assert!((norm_l1(&spike)? - 1.0).abs() < 1e-12);

    let a = ball_mass_constant();
    let log8 = 8f64.ln();
    let pass = checks.iter().all(|c| c.pass);
    Ok(KernelSuiteReport { checks, ball_mass_constant: a, chi_log: log8 - a.ln(), chi_linear: log8 - a, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_fields_are_non_negative_and_varied() {
        let grid = TorusGrid::new(64).unwrap();
        for id in 0..6 {
            let f = random_field(1, id, grid).unwrap();
            assert!(f.values().iter().all(|&v| v >= 0.0));
            assert!(norm_l1(&f).unwrap() > 0.0);
        }
        assert_ne!(random_field(1, 0, grid).unwrap(), random_field(2, 0, grid).unwrap());
    }
}
