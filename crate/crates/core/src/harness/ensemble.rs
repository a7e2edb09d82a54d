//! Parallel ensembles over path ids with deterministic merging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Budget, ExperimentConfig, InitialProfile};
use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::solver::{run_path, PathStatus, RunRecord, SampleTimes, SigmaSpec, SolverConfig};

/// A path removed from the statistics, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub path_id: u64,
    pub reason: String,
}

/// Records of one ensemble in path order.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub label: String,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub excluded: Vec<Exclusion>,
}

impl Ensemble {
    /// Records that passed the exclusion rules.
    pub fn included(&self) -> Vec<RunRecord> {
        self.records
            .iter()
            .filter(|r| !self.excluded.iter().any(|e| e.path_id == r.path_id))
            .cloned()
            .collect()
    }

    pub fn excluded_fraction(&self) -> f64 {
        self.excluded.len() as f64 / self.records.len().max(1) as f64
    }

    pub fn total_clamp_rate(&self) -> f64 {
        let clamps: u64 = self.records.iter().map(|r| r.clamp_count).sum();
        let cells: u64 = self.records.iter().map(|r| r.cells).sum();
        if cells == 0 {
            0.0
        } else {
            clamps as f64 / cells as f64
        }
    }

    pub fn summary(&self, budget: &Budget) -> EnsembleSummary {
        EnsembleSummary {
            label: self.label.clone(),
            seed: self.seed,
            paths: self.records.len(),
            excluded: self.excluded.clone(),
            excluded_fraction: self.excluded_fraction(),
            clamp_rate: self.total_clamp_rate(),
            max_path_clamp_rate: self.records.iter().map(|r| r.clamp_rate()).fold(0.0, f64::max),
            within_budget: self.excluded_fraction() <= budget.max_excluded_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub label: String,
    pub seed: u64,
    pub paths: usize,
    pub excluded: Vec<Exclusion>,
    pub excluded_fraction: f64,
    pub clamp_rate: f64,
    pub max_path_clamp_rate: f64,
    pub within_budget: bool,
}

/// Everything needed to run paths of one ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub label: String,
    pub solver: SolverConfig,
    pub sigma: SigmaSpec,
    pub profile: InitialProfile,
    pub seed: u64,
    pub paths: u64,
    pub observer: SampleTimes,
    pub budget: Budget,
}

impl EnsembleSpec {
    pub fn from_config(cfg: &ExperimentConfig, profile: &InitialProfile, seed: u64) -> Self {
        Self {
            label: profile.label(),
            solver: cfg.solver_config(),
            sigma: cfg.sigma.clone(),
            profile: profile.clone(),
            seed,
            paths: cfg.n_paths,
            observer: cfg.sample_times(cfg.horizon),
            budget: cfg.budget.clone(),
        }
    }
}

/// Build a pool with `workers` threads (0 means one per core).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Run all paths of `spec` on `pool`. Records come back in path order
/// regardless of the number of workers.
pub fn run_ensemble(spec: &EnsembleSpec, pool: &rayon::ThreadPool) -> Result<Ensemble> {
    let grid = spec.solver.grid;
    let initial = spec.profile.build(grid)?;
    let records = pool.install(|| {
        (0..spec.paths)
            .into_par_iter()
            .map(|p| {
                let stream = NoiseStream::new(spec.seed, p, grid, spec.solver.dt)?;
                run_path(&spec.solver, &spec.sigma, &stream, &initial, &spec.observer)
            })
            .collect::<Result<Vec<RunRecord>>>()
    })?;
    let excluded = records
        .iter()
        .filter_map(|r| match &r.status {
            PathStatus::Failed { time, reason } => {
                Some(Exclusion { path_id: r.path_id, reason: format!("failed at t = {time}: {reason}") })
            }
            PathStatus::Completed if r.clamp_rate() > spec.budget.clamp_rate => Some(Exclusion {
                path_id: r.path_id,
                reason: format!("clamp rate {} above budget {}", r.clamp_rate(), spec.budget.clamp_rate),
            }),
            PathStatus::Completed => None,
        })
        .collect();
    Ok(Ensemble { label: spec.label.clone(), seed: spec.seed, records, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TorusGrid;

    fn spec(paths: u64) -> EnsembleSpec {
        let grid = TorusGrid::new(16).unwrap();
        let dt = SolverConfig::default_dt(grid, 1.0);
        EnsembleSpec {
            label: "c".into(),
            solver: SolverConfig::new(grid, dt),
            sigma: SigmaSpec::linear(1.0).unwrap(),
            profile: InitialProfile::Constant { value: 1.0 },
            seed: 3,
            paths,
            observer: SampleTimes::cadence(dt, 0.5, 0.0, 0, 0.1, &[]),
            budget: Budget::default(),
        }
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let s = spec(12);
        let a = run_ensemble(&s, &worker_pool(1).unwrap()).unwrap();
        let b = run_ensemble(&s, &worker_pool(4).unwrap()).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.records.windows(2).all(|w| w[0].path_id < w[1].path_id));
        assert!(a.excluded.is_empty());
    }

    #[test]
    fn clamp_budget_excludes_paths() {
        let mut s = spec(4);
        s.budget.clamp_rate = -1.0;
        let e = run_ensemble(&s, &worker_pool(1).unwrap()).unwrap();
        assert_eq!(e.excluded.len(), 4);
        assert!(e.included().is_empty());
        assert!(!e.summary(&s.budget).within_budget);
    }
}
