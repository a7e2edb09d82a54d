use serde::{Deserialize, Serialize};

use super::{SigmaSpec, Simulation, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::{min_max, GridFunction};
use crate::noise::NoiseStream;

/// Step indices at which observables are recorded. Always contains 0 and
/// the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTimes {
    steps: Vec<u64>,
}

impl SampleTimes {
    pub fn from_steps(mut steps: Vec<u64>, final_step: u64) -> Self {
        steps.push(0);
        steps.push(final_step);
        steps.retain(|&s| s <= final_step);
        steps.sort_unstable();
        steps.dedup();
        Self { steps }
    }

    /// Geometric cadence from `t_min` with `per_decade` points per decade,
    /// merged with a uniform grid of spacing `interval` (if positive) and any
    /// `extra` times.
    pub fn cadence(dt: f64, horizon: f64, t_min: f64, per_decade: usize, interval: f64, extra: &[f64]) -> Self {
        let final_step = (horizon / dt).round() as u64;
        let snap = |t: f64| (t / dt).round() as u64;
        let mut steps = Vec::new();
        if per_decade > 0 && t_min > 0.0 {
            let ratio = 10f64.powf(1.0 / per_decade as f64);
            let mut t = t_min;
            while t <= horizon {
                steps.push(snap(t).max(1));
                t *= ratio;
            }
        }
        if interval > 0.0 {
            let mut k = 1u64;
            while (k as f64) * interval <= horizon + 0.5 * dt {
                steps.push(snap(k as f64 * interval));
                k += 1;
            }
        }
        steps.extend(extra.iter().filter(|&&t| t >= 0.0).map(|&t| snap(t)));
        Self::from_steps(steps, final_step)
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn final_step(&self) -> u64 {
        *self.steps.last().expect("non-empty")
    }
}

/// Observables of one path at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub path_id: u64,
    pub step: u64,
    pub time: f64,
    pub log_mass: f64,
    /// Observables of the renormalized field.
    pub log_sup: f64,
    pub log_inf: f64,
    pub log_l1: f64,
    pub osc: f64,
    pub ratio: f64,
    /// `log u(t, 0)` of the reconstructed solution.
    pub log_u_origin: f64,
    pub log_sup_running_max: f64,
    /// Reconstructed total mass `||u(t)||_{L1}`.
    pub mass: f64,
    pub realized_qv: f64,
    pub predicted_qv: f64,
    pub clamp_count: u64,
}

impl Sample {
    /// `log sup u` of the reconstructed solution.
    pub fn log_sup_u(&self) -> f64 {
        self.log_mass + self.log_sup
    }

    pub fn log_inf_u(&self) -> f64 {
        self.log_mass + self.log_inf
    }

    pub fn log_l1_u(&self) -> f64 {
        self.log_mass + self.log_l1
    }

    fn observe(sim: &Simulation) -> Self {
        let st = sim.state();
        let v = st.field.values();
        let grid = st.field.grid();
        let (lo, hi) = min_max(v);
        let l1 = grid.spacing() * v.iter().sum::<f64>();
        Self {
            path_id: sim.stream().path_id(),
            step: st.step_index,
            time: st.time,
            log_mass: st.log_mass,
            log_sup: hi.ln(),
            log_inf: lo.ln(),
            log_l1: l1.ln(),
            osc: hi.ln() - lo.ln(),
            ratio: hi / l1,
            log_u_origin: st.log_mass + v[grid.origin_index()].ln(),
            log_sup_running_max: sim.log_sup_running_max,
            mass: (st.log_mass + l1.ln()).exp(),
            realized_qv: sim.realized_qv,
            predicted_qv: sim.predicted_qv,
            clamp_count: st.clamp_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathStatus {
    Completed,
    Failed { time: f64, reason: String },
}

/// Time series of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub path_id: u64,
    pub status: PathStatus,
    pub samples: Vec<Sample>,
    pub steps: u64,
    pub cells: u64,
    pub clamp_count: u64,
    pub renormalizations: u64,
    /// Final renormalized field, for pathwise checks.
    #[serde(skip)]
    pub final_field: Option<GridFunction>,
    #[serde(skip)]
    pub final_log_mass: f64,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == PathStatus::Completed
    }

    pub fn clamp_rate(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.clamp_count as f64 / self.cells as f64
        }
    }

    /// Last sample at or before `t`.
    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().rev().find(|s| s.time <= t + 1e-12)
    }
}

/// Run one path to the last sample time and record observables. Path-fatal
/// errors end the path and are stored in the record; configuration errors
/// are returned.
pub fn run_path(
    config: &SolverConfig,
    sigma: &SigmaSpec,
    stream: &NoiseStream,
    initial: &GridFunction,
    observer: &SampleTimes,
) -> Result<RunRecord> {
    let mut sim = Simulation::new(config.clone(), sigma.clone(), stream.clone(), initial.clone())?;
    let n = config.grid.n_points() as u64;
    let mut samples = Vec::with_capacity(observer.steps().len());
    let mut status = PathStatus::Completed;
    for &target in observer.steps() {
        match sim.advance_to(target) {
            Ok(()) => samples.push(Sample::observe(&sim)),
            Err(Error::PathFatal { time, reason }) => {
                status = PathStatus::Failed { time, reason };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let st = sim.state();
    Ok(RunRecord {
        path_id: stream.path_id(),
        status,
        samples,
        steps: st.step_index,
        cells: st.step_index * n,
        clamp_count: st.clamp_count,
        renormalizations: sim.renormalizations(),
        final_field: Some(st.field.clone()),
        final_log_mass: st.log_mass,
    })
}
