//! Declarative experiment configuration, one TOML file per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{GridFunction, TorusGrid};
use crate::solver::{RenormSchedule, SampleTimes, Scheme, SigmaSpec, SolverConfig};

/// Initial data `u_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    /// Block of `round(width / dx)` cells centred on the origin carrying
    /// `mass`, on a uniform `background`.
    Spike {
        mass: f64,
        width: f64,
        #[serde(default = "default_background")]
        background: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

fn default_background() -> f64 {
    1e-9
}

impl InitialProfile {
    pub fn build(&self, grid: TorusGrid) -> Result<GridFunction> {
        let f = match self {
            InitialProfile::Constant { value } => GridFunction::constant(grid, *value)?,
            InitialProfile::Spike { mass, width, background } => {
                let dx = grid.spacing();
                if !(*mass > 0.0 && *width > 0.0 && *background > 0.0) {
                    return Err(Error::Config("spike needs positive mass, width and background".into()));
                }
                if *width < dx * (1.0 - 1e-9) {
                    return Err(Error::Config(format!(
                        "spike of width {width} is narrower than one cell ({dx}); height {} is not representable",
                        mass / width
                    )));
                }
                let cells = ((width / dx).round() as usize).clamp(1, grid.n_points());
                let height = mass / (cells as f64 * dx);
                let start = grid.origin_index() + grid.n_points() - cells / 2;
                let mut v = vec![*background; grid.n_points()];
                for k in 0..cells {
                    v[(start + k) % grid.n_points()] += height;
                }
                GridFunction::new(grid, v)?
            }
            InitialProfile::Table { values } => {
                if values.len() != grid.n_points() {
                    return Err(Error::Config(format!(
                        "table profile has {} values, grid has {}",
                        values.len(),
                        grid.n_points()
                    )));
                }
                GridFunction::new(grid, values.clone())?
            }
        };
        if f.values().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("initial profile must be strictly positive".into()));
        }
        Ok(f)
    }

    pub fn label(&self) -> String {
        match self {
            InitialProfile::Constant { value } => format!("constant({value})"),
            InitialProfile::Spike { mass, width, .. } => format!("spike({mass},{width})"),
            InitialProfile::Table { .. } => "table".into(),
        }
    }
}

/// Observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    /// First time of the geometric cadence (0 disables it).
    pub t_min: f64,
    pub per_decade: usize,
    /// Spacing of the uniform cadence (0 disables it).
    pub interval: f64,
    #[serde(default)]
    pub extra: Vec<f64>,
    /// Also sample at every renormalization epoch before epochs become
    /// dense on the step grid.
    #[serde(default = "yes")]
    pub include_epochs: bool,
    /// Sample after every step (overrides the cadences).
    #[serde(default)]
    pub every_step: bool,
}

fn yes() -> bool {
    true
}

impl Default for Sampling {
    fn default() -> Self {
        Self { t_min: 0.01, per_decade: 10, interval: 1.0, extra: Vec::new(), include_epochs: true, every_step: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSettings {
    /// Regression window; defaults to `[T/2, T]`.
    pub window: Option<(f64, f64)>,
    pub second_profile: Option<InitialProfile>,
    /// Seed of the second ensemble; defaults to `seed + 1`.
    pub second_seed: Option<u64>,
    pub relative_tolerance: f64,
}

impl Default for LambdaSettings {
    fn default() -> Self {
        Self { window: None, second_profile: None, second_seed: None, relative_tolerance: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscSettings {
    pub window_start: f64,
    pub max_osc_over_t: f64,
    /// Exponents `p` of the reported `osc / (log t)^p` curves.
    pub powers: Vec<f64>,
    /// Curves start here (needs `log t > 0`).
    pub curve_start: f64,
}

impl Default for OscSettings {
    fn default() -> Self {
        Self { window_start: 50.0, max_osc_over_t: 0.05, powers: vec![1.0, 2.0, 10.0], curve_start: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioSettings {
    pub beta: f64,
    /// Additive constant of the bound, frozen from the pilot calibration.
    pub c: f64,
    pub t_min: f64,
}

impl Default for RatioSettings {
    fn default() -> Self {
        Self { beta: 4.0, c: 0.0, t_min: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakSettings {
    pub gamma: f64,
    pub k_grid: Vec<f64>,
    pub k_assert: f64,
    pub max_frequency: f64,
    /// Valley experiment: exit frequency bound.
    pub max_exit_frequency: f64,
    /// Valley experiment: the micro window is `t <= micro_fraction N^{-2}`.
    pub micro_fraction: f64,
    /// Valley experiment: allowed rms mass deviation in units of `N sqrt t`.
    pub micro_factor: f64,
}

impl Default for PeakSettings {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            k_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            k_assert: 8.0,
            max_frequency: 0.05,
            max_exit_frequency: 0.05,
            micro_fraction: 0.1,
            micro_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltSettings {
    /// Evaluation time; defaults to the horizon.
    pub t: Option<f64>,
    pub min_p_value: f64,
}

impl Default for CltSettings {
    fn default() -> Self {
        Self { t: None, min_p_value: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    /// Paths whose clamp rate exceeds this are excluded.
    pub clamp_rate: f64,
    /// The experiment fails when more than this fraction is excluded.
    pub max_excluded_fraction: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { clamp_rate: 1e-5, max_excluded_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: TorusGrid,
    /// Time step; the default policy `min(dx^2/4, dx/(10 Lip^2))` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    pub horizon: f64,
    pub sigma: SigmaSpec,
    pub initial_profile: InitialProfile,
    pub n_paths: u64,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub schedule: RenormSchedule,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub lambda: LambdaSettings,
    #[serde(default)]
    pub osc: OscSettings,
    #[serde(default)]
    pub ratio: RatioSettings,
    #[serde(default)]
    pub peaks: PeakSettings,
    #[serde(default)]
    pub clt: CltSettings,
    #[serde(default)]
    pub budget: Budget,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be positive".into()));
        }
        self.schedule.validate()?;
        self.solver_config().validate(&self.sigma)?;
        self.initial_profile.build(self.grid)?;
        if let Some(p) = &self.lambda.second_profile {
            p.build(self.grid)?;
        }
        if let Some((lo, hi)) = self.lambda.window {
            if !(lo >= 0.0 && hi > lo && hi <= self.horizon) {
                return Err(Error::Config(format!("lambda window [{lo}, {hi}] not inside [0, {}]", self.horizon)));
            }
        }
        if !(self.budget.clamp_rate >= 0.0 && (0.0..1.0).contains(&self.budget.max_excluded_fraction)) {
            return Err(Error::Config("budget values out of range".into()));
        }
        if !(self.peaks.gamma > 4.0 / 3.0 && self.peaks.gamma < 2.0) {
            return Err(Error::Config(format!("peaks.gamma must lie in (4/3, 2), got {}", self.peaks.gamma)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| SolverConfig::default_dt(self.grid, self.sigma.lipschitz_constant()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.grid, self.dt());
        c.scheme = self.scheme;
        c.schedule = Some(self.schedule);
        c
    }

    pub fn lambda_window(&self) -> (f64, f64) {
        self.lambda.window.unwrap_or((0.5 * self.horizon, self.horizon))
    }

    /// Observation steps up to `horizon`.
    pub fn sample_times(&self, horizon: f64) -> SampleTimes {
        let dt = self.dt();
        let final_step = (horizon / dt).round() as u64;
        if self.sampling.every_step {
            return SampleTimes::from_steps((1..=final_step).collect(), final_step);
        }
        let s = &self.sampling;
        let base = SampleTimes::cadence(dt, horizon, s.t_min, s.per_decade, s.interval, &s.extra);
        if !s.include_epochs {
            return base;
        }
        let mut steps = base.steps().to_vec();
        steps.extend(epoch_steps(self.schedule, dt, final_step));
        SampleTimes::from_steps(steps, final_step)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Snapped epoch steps up to `final_step`, stopping where every step becomes
/// an epoch.
pub fn epoch_steps(schedule: RenormSchedule, dt: f64, final_step: u64) -> Vec<u64> {
    let mut cursor = crate::solver::EpochCursor::new(schedule, dt);
    let mut out = Vec::new();
    for step in 1..=final_step {
        if cursor.dense_from().is_some_and(|d| step >= d) {
            break;
        }
        if cursor.is_epoch(step) {
            out.push(step);
        }
    }
    out
}
