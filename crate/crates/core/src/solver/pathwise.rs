//! Pathwise checks that drive two solutions with the same noise.

use serde::Serialize;

use super::{SigmaSpec, Simulation, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::GridFunction;
use crate::noise::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledReport {
    pub path_id: u64,
    pub steps: u64,
    /// `max_{t, x} (low - high)` on the renormalized scale of the upper path.
    pub max_difference: f64,
    pub violations: u64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Run `u0_low <= u0_high` on the same noise for `steps` steps and record the
/// largest excursion of the lower solution above the upper one.
pub fn coupled_pair(
    config: &SolverConfig,
    sigma: &SigmaSpec,
    stream: &NoiseStream,
    u0_low: &GridFunction,
    u0_high: &GridFunction,
    steps: u64,
    tolerance: f64,
) -> Result<CoupledReport> {
    u0_low.check_positive()?;
    u0_high.check_positive()?;
    if u0_low.values().iter().zip(u0_high.values()).any(|(a, b)| a > b) {
        return Err(Error::Domain("coupled pair needs u0_low <= u0_high pointwise".into()));
    }
    let mut low = Simulation::new(config.clone(), sigma.clone(), stream.clone(), u0_low.clone())?;
    let mut high = Simulation::new(config.clone(), sigma.clone(), stream.clone(), u0_high.clone())?;
    let mut max_difference = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut record = |low: &Simulation, high: &Simulation| {
        let rel = (low.state().log_mass - high.state().log_mass).exp();
        let worst = low
            .state()
            .field
            .values()
            .iter()
            .zip(high.state().field.values())
            .map(|(a, b)| rel * a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > tolerance {
            violations += 1;
        }
        max_difference = max_difference.max(worst);
    };
    record(&low, &high);
    for _ in 0..steps {
        low.advance()?;
        high.advance()?;
        record(&low, &high);
    }
    Ok(CoupledReport {
        path_id: stream.path_id(),
        steps,
        max_difference,
        violations,
        tolerance,
        pass: max_difference <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubadditivityReport {
    pub path_id: u64,
    pub s_steps: u64,
    pub t_steps: u64,
    /// `log S_s`.
    pub log_sup_s: f64,
    /// `log S_{s+t}`.
    pub log_sup_total: f64,
    /// `log sup` at time `t` of the solution started from the constant
    /// `S_s` on the shifted noise.
    pub log_sup_restarted: f64,
    /// Same quantity for the restart from the constant 1: `log (S_t o theta_s)`.
    pub log_sup_shifted_unit: f64,
    pub slack: f64,
    pub pass: bool,
}

/// `S_{s+t} <= S_s (S_t o theta_s)` for one path started from `u0 = 1`.
pub fn subadditivity_check(
    config: &SolverConfig,
    sigma: &SigmaSpec,
    stream: &NoiseStream,
    s_steps: u64,
    t_steps: u64,
) -> Result<SubadditivityReport> {
    if !(sigma.is_zero() || sigma.linear_coefficient().is_some()) {
        return Err(Error::Config("subadditivity check needs linear sigma".into()));
    }
    let grid = config.grid;
    let one = GridFunction::constant(grid, 1.0)?;
    let mut u = Simulation::new(config.clone(), sigma.clone(), stream.clone(), one.clone())?;
    u.advance_to(s_steps)?;
    let log_sup_s = u.log_sup();
    u.advance_to(s_steps + t_steps)?;
    let log_sup_total = u.log_sup();

    let shifted = stream.shifted(s_steps as i64)?;
    let restart = GridFunction::constant(grid, log_sup_s.exp())?;
    let mut v = Simulation::new(config.clone(), sigma.clone(), shifted.clone(), restart)?;
    v.advance_to(t_steps)?;
    let log_sup_restarted = v.log_sup();

    let mut w = Simulation::new(config.clone(), sigma.clone(), shifted, one)?;
    w.advance_to(t_steps)?;
    let log_sup_shifted_unit = w.log_sup();

    let slack = 1e-8 * (1.0 + log_sup_total.abs());
    Ok(SubadditivityReport {
        path_id: stream.path_id(),
        s_steps,
        t_steps,
        log_sup_s,
        log_sup_total,
        log_sup_restarted,
        log_sup_shifted_unit,
        slack,
        pass: log_sup_total <= log_sup_s + log_sup_shifted_unit + slack
            && log_sup_total <= log_sup_restarted + slack,
    })
}
