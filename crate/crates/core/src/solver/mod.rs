//! Time stepping of `du = u_xx dt + sigma(u) dW` on the torus grid.
//!
//! The solution is carried as `u(t) = exp(log_mass) * field`, where `field`
//! is renormalized to unit L1 mass at schedule epochs and whenever its mass
//! leaves `[1/2, 2]`. Between renormalizations the field evolves with the
//! rescaled coefficient `w -> sigma(M w) / M`, `M = exp(log_mass)`, which
//! makes the ledger an exact change of variables rather than an
//! approximation.

mod pathwise;
mod run;
mod schedule;
mod sigma;
mod tridiag;

use serde::{Deserialize, Serialize};

pub use pathwise::{coupled_pair, subadditivity_check, CoupledReport, SubadditivityReport};
pub use run::{run_path, PathStatus, RunRecord, Sample, SampleTimes};
pub use schedule::{EpochCursor, Epochs, RenormSchedule};
pub use sigma::{rescale_sigma, SigmaKind, SigmaSpec};
pub use tridiag::PeriodicResolvent;

use crate::error::{Error, Result};
use crate::fields::{GridFunction, TorusGrid};
use crate::noise::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Scheme {
    /// Backward-Euler diffusion, explicit Euler-Maruyama noise.
    #[default]
    SemiImplicitEm,
    /// Backward-Euler diffusion followed by the exact geometric noise factor.
    /// Linear sigma only.
    SplitStepGeometric,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: TorusGrid,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Renormalization epochs; `None` keeps only the mass-band trigger.
    #[serde(default)]
    pub schedule: Option<RenormSchedule>,
    /// Disable all renormalization and evolve `u` directly.
    #[serde(default)]
    pub direct: bool,
    /// Cells below `clamp_relative * mean(field)` are raised to that value.
    #[serde(default = "default_clamp")]
    pub clamp_relative: f64,
}

fn default_clamp() -> f64 {
    1e-12
}

/// Mass band outside of which the field is renormalized.
pub const MASS_BAND: (f64, f64) = (0.5, 2.0);

impl SolverConfig {
    pub fn new(grid: TorusGrid, dt: f64) -> Self {
        Self {
            grid,
            dt,
            scheme: Scheme::default(),
            schedule: Some(RenormSchedule::default()),
            direct: false,
            clamp_relative: default_clamp(),
        }
    }

    /// `min(dx^2 / 4, dx / (10 Lip^2))`.
    pub fn default_dt(grid: TorusGrid, lipschitz: f64) -> f64 {
        let dx = grid.spacing();
        let diffusive = dx * dx / 4.0;
        if lipschitz > 0.0 {
            diffusive.min(dx / (10.0 * lipschitz * lipschitz))
        } else {
            diffusive
        }
    }

    pub fn validate(&self, sigma: &SigmaSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        if !(self.clamp_relative > 0.0 && self.clamp_relative < 1.0) {
            return Err(Error::Config(format!(
                "clamp_relative must lie in (0, 1), got {}",
                self.clamp_relative
            )));
        }
        if self.scheme == Scheme::SplitStepGeometric && !(sigma.is_zero() || sigma.linear_coefficient().is_some()) {
            return Err(Error::Config("split_step_geometric requires linear or zero sigma".into()));
        }
        Ok(())
    }
}

/// Renormalized representation of the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub field: GridFunction,
    pub step_index: u64,
    pub time: f64,
    pub log_mass: f64,
    pub clamp_count: u64,
    pub scheme: Scheme,
}

impl SolverState {
    pub fn new(initial: GridFunction, scheme: Scheme) -> Result<Self> {
        initial.check_finite()?;
        if initial.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("initial profile must be non-negative".into()));
        }
        Ok(Self { field: initial, step_index: 0, time: 0.0, log_mass: 0.0, clamp_count: 0, scheme })
    }

    /// `u = exp(log_mass) * field`.
    pub fn reconstruct(&self) -> GridFunction {
        let scale = self.log_mass.exp();
        let values = self.field.values().iter().map(|v| scale * v).collect();
        GridFunction::new(self.field.grid(), values).expect("finite reconstruction")
    }

    fn field_sum(&self) -> f64 {
        self.field.values().iter().sum()
    }
}

/// Divide the field by its L1 mass and move `log` of the mass into the ledger.
pub fn renormalize(state: &mut SolverState) -> Result<f64> {
    let mass = state.field.grid().spacing() * state.field_sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::PathFatal {
            time: state.time,
            reason: format!("cannot renormalize field with mass {mass}"),
        });
    }
    let inv = 1.0 / mass;
    for v in state.field.values_mut() {
        *v *= inv;
    }
    state.log_mass += mass.ln();
    Ok(mass)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    /// `dx * sum(field)` before and after the update (before renormalization).
    pub mass_before: f64,
    pub mass_after: f64,
    /// `dx * sum sigma_eff(v_j)^2` at the start of the step.
    pub sigma_sq: f64,
    pub max_after: f64,
    pub clamps: u64,
}

/// One-step propagator with its factorization and scratch space.
#[derive(Debug, Clone)]
pub struct Stepper {
    config: SolverConfig,
    resolvent: PeriodicResolvent,
    noise: Vec<f64>,
    rhs: Vec<f64>,
}

impl Stepper {
    pub fn new(config: SolverConfig) -> Self {
        let n = config.grid.n_points();
        let resolvent = PeriodicResolvent::new(n, config.dt, config.grid.spacing());
        Self { config, resolvent, noise: vec![0.0; n], rhs: vec![0.0; n] }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Advance `state` by one step with coefficient `sigma_eff` acting on the
    /// renormalized field.
    pub fn step(
        &mut self,
        state: &mut SolverState,
        sigma_eff: &SigmaSpec,
        stream: &NoiseStream,
    ) -> Result<StepInfo> {
        let dx = self.config.grid.spacing();
        let dt = self.config.dt;
        let inv_dx = 1.0 / dx;
        stream.fill_increments(state.step_index, &mut self.noise);

        let mut info = StepInfo::default();
        let values = state.field.values_mut();
        let mut sum_before = 0.0;
        let mut sig2 = 0.0;
        match (state.scheme, sigma_eff.kind()) {
            (_, SigmaKind::Zero) => {
                for (r, &v) in self.rhs.iter_mut().zip(values.iter()) {
                    sum_before += v;
                    *r = v;
                }
                self.resolvent.solve(&self.rhs, values);
            }
            (Scheme::SemiImplicitEm, SigmaKind::Linear { q }) => {
                let q = *q;
                for ((r, &v), &w) in self.rhs.iter_mut().zip(values.iter()).zip(&self.noise) {
                    sum_before += v;
                    let s = q * v;
                    sig2 += s * s;
                    *r = v + s * w * inv_dx;
                }
                self.resolvent.solve(&self.rhs, values);
            }
            (Scheme::SemiImplicitEm, _) => {
                for ((r, &v), &w) in self.rhs.iter_mut().zip(values.iter()).zip(&self.noise) {
                    sum_before += v;
                    let s = sigma_eff.eval(v);
                    sig2 += s * s;
                    *r = v + s * w * inv_dx;
                }
                self.resolvent.solve(&self.rhs, values);
            }
            (Scheme::SplitStepGeometric, SigmaKind::Linear { q }) => {
                let q = *q;
                for (r, &v) in self.rhs.iter_mut().zip(values.iter()) {
                    sum_before += v;
                    sig2 += q * q * v * v;
                    *r = v;
                }
                self.resolvent.solve(&self.rhs, values);
                let drift = 0.5 * q * q * dt * inv_dx;
                for (v, &w) in values.iter_mut().zip(&self.noise) {
                    *v *= (q * w * inv_dx - drift).exp();
                }
            }
            (Scheme::SplitStepGeometric, _) => {
                return Err(Error::Config("split_step_geometric requires linear sigma".into()));
            }
        }

        let n = values.len() as f64;
        let mut sum_after: f64 = values.iter().sum();
        if !(sum_after.is_finite() && sum_after > 0.0) {
            return Err(Error::PathFatal {
                time: state.time + dt,
                reason: format!("field mass became {}", sum_after * dx),
            });
        }
        let floor = self.config.clamp_relative * sum_after / n;
        let mut max = 0.0_f64;
        for v in values.iter_mut() {
            if *v < floor {
                sum_after += floor - *v;
                *v = floor;
                info.clamps += 1;
            }
            max = max.max(*v);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::PathFatal { time: state.time + dt, reason: "non-finite field".into() });
        }
        state.clamp_count += info.clamps;
        state.step_index += 1;
        state.time = state.step_index as f64 * dt;

        info.mass_before = dx * sum_before;
        info.mass_after = dx * sum_after;
        info.sigma_sq = dx * sig2;
        info.max_after = max;
        Ok(info)
    }
}

/// A single path: stepper, state, effective coefficient and epoch cursor.
#[derive(Debug, Clone)]
pub struct Simulation {
    stepper: Stepper,
    state: SolverState,
    sigma: SigmaSpec,
    sigma_eff: SigmaSpec,
    stream: NoiseStream,
    epochs: Option<EpochCursor>,
    renormalizations: u64,
    /// `sum (Delta M)^2` of the reconstructed mass.
    pub realized_qv: f64,
    /// `sum dt * ||sigma(u)||_{L2}^2`.
    pub predicted_qv: f64,
    /// Running maximum of `log sup u`.
    pub log_sup_running_max: f64,
}

impl Simulation {
    pub fn new(
        config: SolverConfig,
        sigma: SigmaSpec,
        stream: NoiseStream,
        initial: GridFunction,
    ) -> Result<Self> {
        config.validate(&sigma)?;
        if initial.grid() != config.grid || stream.grid() != config.grid {
            return Err(Error::Config("grid mismatch between config, stream and profile".into()));
        }
        if stream.dt() != config.dt {
            return Err(Error::Config(format!(
                "stream dt {} differs from solver dt {}",
                stream.dt(),
                config.dt
            )));
        }
        let mut state = SolverState::new(initial, config.scheme)?;
        let epochs = match (&config.schedule, config.direct) {
            (Some(s), false) => Some(EpochCursor::new(*s, config.dt)),
            _ => None,
        };
        if !config.direct {
            renormalize(&mut state)?;
        }
        let sigma_eff = sigma.rescale(state.log_mass.exp())?;
        let log_sup_running_max = state.log_mass + crate::fields::norm_sup(&state.field)?.ln();
        Ok(Self {
            stepper: Stepper::new(config),
            state,
            sigma,
            sigma_eff,
            stream,
            epochs,
            renormalizations: 0,
            realized_qv: 0.0,
            predicted_qv: 0.0,
            log_sup_running_max,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        self.stepper.config()
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    pub fn stream(&self) -> &NoiseStream {
        &self.stream
    }

    pub fn renormalizations(&self) -> u64 {
        self.renormalizations
    }

    pub fn epochs(&self) -> Option<&EpochCursor> {
        self.epochs.as_ref()
    }

    /// One step, followed by renormalization when due.
    pub fn advance(&mut self) -> Result<StepInfo> {
        let info = self.stepper.step(&mut self.state, &self.sigma_eff, &self.stream)?;
        let scale = self.state.log_mass.exp();
        let dm = scale * (info.mass_after - info.mass_before);
        self.realized_qv += dm * dm;
        self.predicted_qv += scale * scale * self.stepper.config.dt * info.sigma_sq;
        let log_sup = self.state.log_mass + info.max_after.ln();
        self.log_sup_running_max = self.log_sup_running_max.max(log_sup);

        if !self.stepper.config.direct {
            let at_epoch = self.epochs.as_mut().is_some_and(|e| e.is_epoch(self.state.step_index));
            let out_of_band = info.mass_after < MASS_BAND.0 || info.mass_after > MASS_BAND.1;
            if at_epoch || out_of_band {
                renormalize(&mut self.state)?;
                self.renormalizations += 1;
                if !(self.sigma.is_zero() || self.sigma.linear_coefficient().is_some()) {
                    self.sigma_eff = self.sigma.rescale(self.state.log_mass.exp())?;
                }
            }
        }
        Ok(info)
    }

    /// Advance until `step_index == target`.
    pub fn advance_to(&mut self, target: u64) -> Result<()> {
        while self.state.step_index < target {
            self.advance()?;
        }
        Ok(())
    }

    /// `log sup u` of the reconstructed solution.
    pub fn log_sup(&self) -> f64 {
        let (_, hi) = crate::fields::min_max(self.state.field.values());
        self.state.log_mass + hi.ln()
    }

    /// `log ||u||_{L1}` of the reconstructed solution.
    pub fn log_l1(&self) -> f64 {
        let dx = self.state.field.grid().spacing();
        self.state.log_mass + (dx * self.state.field_sum()).ln()
    }
}

/// Free-function form of [`Stepper::step`] for one-off use.
pub fn step(state: &SolverState, sigma: &SigmaSpec, stream: &NoiseStream, config: &SolverConfig) -> Result<SolverState> {
    config.validate(sigma)?;
    let mut next = state.clone();
    let sigma_eff = sigma.rescale(state.log_mass.exp())?;
    Stepper::new(config.clone()).step(&mut next, &sigma_eff, stream)?;
    Ok(next)
}
