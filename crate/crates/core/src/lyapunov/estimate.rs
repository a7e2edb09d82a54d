//! Exponent estimators from ensembles of recorded paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{ks_normal, mean_std, ols_slope};
use crate::error::{Error, Result};
use crate::fields::{GridFunction, TorusGrid};
use crate::noise::NoiseStream;
use crate::solver::{run_path, RunRecord, Sample, SampleTimes, SigmaSpec, SolverConfig};

/// Minimum ensemble size for slope estimates.
pub const MIN_SLOPE_PATHS: usize = 8;
/// Minimum ensemble size for the CLT diagnostic.
pub const MIN_CLT_PATHS: usize = 200;

/// Series regressed against time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    LogSup,
    LogInf,
    LogL1,
}

impl Series {
    pub fn value(self, s: &Sample) -> f64 {
        match self {
            Series::LogSup => s.log_sup_u(),
            Series::LogInf => s.log_inf_u(),
            Series::LogL1 => s.log_l1_u(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// Minus the mean per-path slope.
    pub lambda_hat: f64,
    /// Standard deviation of the per-path slopes over `sqrt(paths)`.
    pub stderr: f64,
    pub window: (f64, f64),
    pub per_path_slopes: Vec<f64>,
    pub series: Series,
}

fn horizon(records: &[RunRecord]) -> f64 {
    records
        .iter()
        .filter_map(|r| r.samples.last())
        .map(|s| s.time)
        .fold(0.0, f64::max)
}

fn check_records(records: &[RunRecord], minimum: usize) -> Result<()> {
    if records.len() < minimum {
        return Err(Error::Domain(format!("need at least {minimum} paths, got {}", records.len())));
    }
    if let Some(r) = records.iter().find(|r| !r.completed()) {
        return Err(Error::Domain(format!("path {} did not complete", r.path_id)));
    }
    Ok(())
}

/// `-mean` of the per-path least-squares slopes of `log sup u` over `window`.
pub fn estimate_lambda(records: &[RunRecord], window: (f64, f64)) -> Result<SlopeEstimate> {
    estimate_slope(records, window, Series::LogSup)
}

/// Same estimator on any recorded series.
pub fn estimate_slope(records: &[RunRecord], window: (f64, f64), series: Series) -> Result<SlopeEstimate> {
    check_records(records, MIN_SLOPE_PATHS)?;
    let t_max = horizon(records);
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo && hi <= t_max + 1e-9) {
        return Err(Error::Domain(format!("window [{lo}, {hi}] is not inside the run horizon [0, {t_max}]")));
    }
    if hi - lo < 0.5 * t_max - 1e-9 {
        return Err(Error::Domain(format!(
            "window [{lo}, {hi}] is shorter than half the horizon {t_max}"
        )));
    }
    let mut slopes = Vec::with_capacity(records.len());
    for r in records {
        let pts: Vec<(f64, f64)> = r
            .samples
            .iter()
            .filter(|s| s.time >= lo - 1e-9 && s.time <= hi + 1e-9)
            .map(|s| (s.time, series.value(s)))
            .collect();
        let slope = ols_slope(&pts).ok_or_else(|| {
            Error::Domain(format!("path {} has fewer than two samples in the window", r.path_id))
        })?;
        slopes.push(slope);
    }
    let (m, sd) = mean_std(&slopes);
    Ok(SlopeEstimate {
        lambda_hat: -m,
        stderr: sd / (slopes.len() as f64).sqrt(),
        window,
        per_path_slopes: slopes,
        series,
    })
}

/// Sup-based and inf-based exponents over the same window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeComparison {
    pub sup: SlopeEstimate,
    pub inf: SlopeEstimate,
    pub difference: f64,
    pub combined_stderr: f64,
    /// `|difference| <= 3 combined_stderr`.
    pub pass: bool,
}

pub fn compare_sup_inf(records: &[RunRecord], window: (f64, f64)) -> Result<SlopeComparison> {
    let sup = estimate_slope(records, window, Series::LogSup)?;
    let inf = estimate_slope(records, window, Series::LogInf)?;
    let difference = sup.lambda_hat - inf.lambda_hat;
    let combined_stderr = sup.stderr.hypot(inf.stderr);
    Ok(SlopeComparison { pass: difference.abs() <= 3.0 * combined_stderr, sup, inf, difference, combined_stderr })
}

/// Ensemble means of `log S_n / n` at integer times and their running
/// infimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditiveEstimate {
    pub times: Vec<f64>,
    /// `E[log S_n] / n`.
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// `min_{m <= n} E[log S_m] / m`, an upper bound family for `-lambda`.
    pub running_inf: Vec<f64>,
    pub paths: usize,
}

impl SubadditiveEstimate {
    /// `-running_inf` at the last time, the estimate of `lambda`.
    pub fn lambda(&self) -> f64 {
        -self.running_inf.last().copied().unwrap_or(f64::NAN)
    }
}

/// Profile from records sampled at the integer times `1..=n_epochs`.
pub fn subadditive_profile(records: &[RunRecord], n_epochs: u64) -> Result<SubadditiveEstimate> {
    if records.is_empty() || n_epochs == 0 {
        return Err(Error::Domain("subadditive profile needs paths and epochs".into()));
    }
    check_records(records, 1)?;
    let mut times = Vec::new();
    let mut means = Vec::new();
    let mut stderrs = Vec::new();
    let mut running_inf = Vec::new();
    let mut best = f64::INFINITY;
    for n in 1..=n_epochs {
        let t = n as f64;
        let values = records
            .iter()
            .map(|r| {
                r.samples
                    .iter()
                    .find(|s| (s.time - t).abs() < 1e-6)
                    .map(|s| s.log_sup_u() / t)
                    .ok_or_else(|| Error::Domain(format!("path {} has no sample at t = {t}", r.path_id)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (m, sd) = mean_std(&values);
        best = best.min(m);
        times.push(t);
        means.push(m);
        stderrs.push(sd / (values.len() as f64).sqrt());
        running_inf.push(best);
    }
    Ok(SubadditiveEstimate { times, means, stderrs, running_inf, paths: records.len() })
}

/// Run `paths` paths from `u0 = 1` with noise `(seed, 0..paths)` and return
/// the subadditive profile up to time `n_epochs`.
pub fn estimate_lambda_subadditive(
    config: &SolverConfig,
    sigma: &SigmaSpec,
    seed: u64,
    paths: u64,
    n_epochs: u64,
) -> Result<SubadditiveEstimate> {
    if !(sigma.is_zero() || sigma.linear_coefficient().is_some()) {
        return Err(Error::Config("subadditive estimator needs linear sigma".into()));
    }
    let grid: TorusGrid = config.grid;
    let u0 = GridFunction::constant(grid, 1.0)?;
    let extra: Vec<f64> = (1..=n_epochs).map(|n| n as f64).collect();
    let obs = SampleTimes::cadence(config.dt, n_epochs as f64, 0.0, 0, 0.0, &extra);
    let records = (0..paths)
        .into_par_iter()
        .map(|p| {
            let stream = NoiseStream::new(seed, p, grid, config.dt)?;
            run_path(config, sigma, &stream, &u0, &obs)
        })
        .collect::<Result<Vec<_>>>()?;
    subadditive_profile(&records, n_epochs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub t: f64,
    pub lambda: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
    /// `(log u(t, 0) + lambda t) / sqrt(t)` per path.
    pub sample: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Kolmogorov-Smirnov distance of the standardized sample
/// `(log u(t, 0) + lambda t) / sqrt(t)` to the standard normal.
pub fn clt_diagnostic(records: &[RunRecord], lambda: f64, t: f64) -> Result<CltReport> {
    check_records(records, MIN_CLT_PATHS)?;
    let t_max = horizon(records);
    if !(t > 0.0 && t >= 0.5 * t_max - 1e-9 && t <= t_max + 1e-9) {
        return Err(Error::Domain(format!("t = {t} must lie in [T/2, T] with T = {t_max}")));
    }
    let sample = records
        .iter()
        .map(|r| {
            r.samples
                .iter()
                .rev()
                .find(|s| (s.time - t).abs() < 1e-6)
                .map(|s| (s.log_u_origin + lambda * t) / t.sqrt())
                .ok_or_else(|| Error::Domain(format!("path {} has no sample at t = {t}", r.path_id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&sample);
    if !(std > 1e-12 * (1.0 + mean.abs())) {
        return Err(Error::Diagnostic(format!("degenerate CLT sample: standard deviation {std}")));
    }
    let standardized: Vec<f64> = sample.iter().map(|x| (x - mean) / std).collect();
    let ks = ks_normal(&standardized)?;
    Ok(CltReport { t, lambda, ks_statistic: ks.statistic, p_value: ks.p_value, sample, mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PathStatus;

    fn synthetic(path_id: u64, f: impl Fn(f64) -> f64, horizon: f64) -> RunRecord {
        let samples = (0..=horizon as usize)
            .map(|i| {
                let t = i as f64;
                Sample {
                    path_id,
                    step: i as u64,
                    time: t,
                    log_mass: f(t),
                    log_sup: 0.0,
                    log_inf: -0.1,
                    log_l1: 0.0,
                    osc: 0.1,
                    ratio: 1.0,
                    log_u_origin: f(t),
                    log_sup_running_max: 0.0,
                    mass: 1.0,
                    realized_qv: 0.0,
                    predicted_qv: 0.0,
                    clamp_count: 0,
                }
            })
            .collect();
        RunRecord {
            path_id,
            status: PathStatus::Completed,
            samples,
            steps: horizon as u64,
            cells: 0,
            clamp_count: 0,
            renormalizations: 0,
            final_field: None,
            final_log_mass: 0.0,
        }
    }

    #[test]
    fn exact_linear_decay() {
        let recs: Vec<RunRecord> = (0..8).map(|p| synthetic(p, |t| -3.0 * t, 20.0)).collect();
        let est = estimate_lambda(&recs, (10.0, 20.0)).unwrap();
        assert!((est.lambda_hat - 3.0).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
        let cmp = compare_sup_inf(&recs, (10.0, 20.0)).unwrap();
        assert!(cmp.difference.abs() < 1e-12);
    }

    #[test]
    fn window_and_size_preconditions() {
        let recs: Vec<RunRecord> = (0..8).map(|p| synthetic(p, |t| -t, 20.0)).collect();
        assert!(matches!(estimate_lambda(&recs, (15.0, 20.0)), Err(Error::Domain(_))));
        assert!(matches!(estimate_lambda(&recs, (10.0, 30.0)), Err(Error::Domain(_))));
        assert!(matches!(estimate_lambda(&recs[..7], (10.0, 20.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_sigma_constant_solution() {
        let grid = TorusGrid::new(16).unwrap();
        let dt = SolverConfig::default_dt(grid, 0.0);
        let cfg = SolverConfig::new(grid, dt);
        let obs = SampleTimes::cadence(dt, 4.0, 0.0, 0, 0.5, &[]);
        let u0 = GridFunction::constant(grid, 1.0).unwrap();
        let recs: Vec<RunRecord> = (0..8)
            .map(|p| run_path(&cfg, &SigmaSpec::zero(), &NoiseStream::new(1, p, grid, dt).unwrap(), &u0, &obs).unwrap())
            .collect();
        let est = estimate_lambda(&recs, (2.0, 4.0)).unwrap();
        assert!(est.lambda_hat.abs() < 1e-12);

        let sub = estimate_lambda_subadditive(&cfg, &SigmaSpec::zero(), 1, 4, 3).unwrap();
        assert!(sub.means.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn subadditive_means_decrease_up_to_noise() {
        let grid = TorusGrid::new(32).unwrap();
        let dt = SolverConfig::default_dt(grid, 1.0);
        let cfg = SolverConfig::new(grid, dt);
        let sub = estimate_lambda_subadditive(&cfg, &SigmaSpec::linear(1.0).unwrap(), 7, 200, 2).unwrap();
        let combined = sub.stderrs[0].hypot(sub.stderrs[1]);
        assert!(sub.means[0] >= sub.means[1] - 3.0 * combined, "{sub:?}");
        assert!(sub.running_inf[1] <= sub.running_inf[0]);
    }

    #[test]
    fn clt_rejects_degenerate_sample() {
        let recs: Vec<RunRecord> = (0..200).map(|p| synthetic(p, |t| -t, 10.0)).collect();
        assert!(matches!(clt_diagnostic(&recs, 1.0, 10.0), Err(Error::Diagnostic(_))));
        assert!(matches!(clt_diagnostic(&recs[..100], 1.0, 10.0), Err(Error::Domain(_))));
    }

    fn normal_quantile(u: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if crate::kernel::normal_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn clt_on_gaussian_endpoints() {
        // Endpoints spread by a deterministic normal quantile pattern.
        let n = 400;
        let recs: Vec<RunRecord> = (0..n)
            .map(|p| {
                let u = (p as f64 + 0.5) / n as f64;
                let z = normal_quantile(u);
                synthetic(p, move |t| -0.3 * t + z * t.sqrt(), 10.0)
            })
            .collect();
        let rep = clt_diagnostic(&recs, 0.3, 10.0).unwrap();
        assert!(rep.p_value > 0.99, "{}", rep.p_value);
        assert!(rep.mean.abs() < 1e-12);
    }
}
