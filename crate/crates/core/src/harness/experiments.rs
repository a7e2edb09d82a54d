//! Named experiments. Each `exp_*` runs its ensembles and hands them to the
//! matching `analyze_*`, which is pure and can be reused on stored records.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InitialProfile};
use super::ensemble::{run_ensemble, Ensemble, EnsembleSpec, EnsembleSummary};
use crate::error::{Error, Result};
use crate::fields::{norm_l1, norm_sup};
use crate::kernel::{semigroup_apply, KernelConfig};
use crate::lyapunov::{
    clt_diagnostic, compare_sup_inf, estimate_lambda, gk_lambda, ols_slope, CltReport, QuadratureResult,
    SlopeComparison, SlopeEstimate,
};
use crate::noise::NoiseStream;
use crate::solver::{RunRecord, SigmaSpec, Simulation};

/// Outcome of an experiment as seen by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// A soft criterion failed; reported but not an error.
    Warn,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

fn ensemble_ok(cfg: &ExperimentConfig, e: &Ensemble) -> Result<Vec<RunRecord>> {
    let included = e.included();
    if included.is_empty() {
        return Err(Error::Diagnostic(format!("every path of ensemble {} was excluded", e.label)));
    }
    let _ = cfg;
    Ok(included)
}

// ---------------------------------------------------------------- lambda

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLambda {
    pub label: String,
    pub seed: u64,
    pub estimate: SlopeEstimate,
    /// `lambda_hat / gk_lambda`.
    pub ratio: Option<f64>,
    /// `|lambda_hat - gk_lambda| <= max(rel_tol gk_lambda, 3 stderr)`.
    pub matches_formula: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub q: Option<f64>,
    pub gk_lambda: Option<QuadratureResult>,
    pub relative_tolerance: f64,
    pub primary: ProfileLambda,
    pub secondary: Option<ProfileLambda>,
    pub u0_difference: Option<f64>,
    pub u0_combined_stderr: Option<f64>,
    pub u0_independent: Option<bool>,
    pub sup_inf: SlopeComparison,
    pub ensembles: Vec<EnsembleSummary>,
    pub pass: bool,
}

fn profile_lambda(
    e: &Ensemble,
    records: &[RunRecord],
    window: (f64, f64),
    gk: Option<f64>,
    rel_tol: f64,
) -> Result<ProfileLambda> {
    let estimate = estimate_lambda(records, window)?;
    let (ratio, matches_formula) = match gk {
        Some(g) => {
            let tol = (rel_tol * g).max(3.0 * estimate.stderr);
            (Some(estimate.lambda_hat / g), Some((estimate.lambda_hat - g).abs() <= tol))
        }
        None => (None, Some(estimate.lambda_hat.abs() <= 1e-12)),
    };
    Ok(ProfileLambda { label: e.label.clone(), seed: e.seed, estimate, ratio, matches_formula })
}

pub fn analyze_lambda(cfg: &ExperimentConfig, first: &Ensemble, second: Option<&Ensemble>) -> Result<LambdaReport> {
    let q = cfg.sigma.linear_coefficient();
    if q.is_none() && !cfg.sigma.is_zero() {
        return Err(Error::Config("lambda experiment needs linear or zero sigma".into()));
    }
    let gk = q.map(gk_lambda).transpose()?;
    let window = cfg.lambda_window();
    let rel = cfg.lambda.relative_tolerance;
    let r1 = ensemble_ok(cfg, first)?;
    let primary = profile_lambda(first, &r1, window, gk.map(|g| g.value), rel)?;
    let sup_inf = compare_sup_inf(&r1, window)?;
    let mut ensembles = vec![first.summary(&cfg.budget)];
    let (secondary, u0_difference, u0_combined_stderr, u0_independent) = match second {
        Some(e2) => {
            let r2 = ensemble_ok(cfg, e2)?;
            let p2 = profile_lambda(e2, &r2, window, gk.map(|g| g.value), rel)?;
            ensembles.push(e2.summary(&cfg.budget));
            let diff = primary.estimate.lambda_hat - p2.estimate.lambda_hat;
            let se = primary.estimate.stderr.hypot(p2.estimate.stderr);
            let independent = diff.abs() <= 3.0 * se || diff.abs() <= 1e-12;
            (Some(p2), Some(diff), Some(se), Some(independent))
        }
        None => (None, None, None, None),
    };
    let pass = primary.matches_formula == Some(true)
        && u0_independent != Some(false)
        && ensembles.iter().all(|s| s.within_budget);
    Ok(LambdaReport {
        q,
        gk_lambda: gk,
        relative_tolerance: rel,
        primary,
        secondary,
        u0_difference,
        u0_combined_stderr,
        u0_independent,
        sup_inf,
        ensembles,
        pass,
    })
}

/// Ensemble label prefixes of the lambda experiment.
pub const PRIMARY_PREFIX: &str = "primary:";
pub const SECOND_PREFIX: &str = "second:";

/// Seed of the second lambda ensemble; `seed + 1` unless configured.
pub fn second_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.lambda.second_seed.unwrap_or(cfg.seed.wrapping_add(1))
}

/// Ensembles of the lambda experiment: the configured profile, and the
/// second profile on an independent seed when configured.
pub fn lambda_ensembles(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Vec<Ensemble>> {
    let mut first = EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed);
    first.label = format!("{PRIMARY_PREFIX}{}", first.label);
    let mut out = vec![run_ensemble(&first, pool)?];
    if let Some(p) = &cfg.lambda.second_profile {
        let mut second = EnsembleSpec::from_config(cfg, p, second_seed(cfg));
        second.label = format!("{SECOND_PREFIX}{}", second.label);
        out.push(run_ensemble(&second, pool)?);
    }
    Ok(out)
}

pub fn exp_lambda_vs_formula(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(LambdaReport, Vec<Ensemble>)> {
    let ens = lambda_ensembles(cfg, pool)?;
    let report = analyze_lambda(cfg, &ens[0], ens.get(1))?;
    Ok((report, ens))
}

// ----------------------------------------------------------- oscillation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub mean_osc: f64,
    pub mean_osc_over_t: f64,
    /// Mean of `osc / (log t)^p` for each configured `p`.
    pub mean_osc_over_log_powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscReport {
    pub window_start: f64,
    pub threshold: f64,
    pub powers: Vec<f64>,
    /// Per path `max_{t in [window_start, T]} osc(t) / t`.
    pub per_path_max_osc_over_t: Vec<f64>,
    /// Per path `max_{t in [curve_start, T]} osc(t)`.
    pub per_path_max_osc: Vec<f64>,
    pub worst_osc_over_t: f64,
    pub below_threshold: bool,
    /// Least-squares slope of the ensemble mean of `osc / t` over the window.
    pub trend_slope: f64,
    pub trend_decreasing: bool,
    pub curve: Vec<CurvePoint>,
    pub pass: bool,
}

pub fn analyze_oscillation(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<OscReport> {
    if records.is_empty() {
        return Err(Error::Diagnostic("no records".into()));
    }
    let s = &cfg.osc;
    let in_window = |t: f64| t >= s.window_start - 1e-9;
    let per_path_max_osc_over_t: Vec<f64> = records
        .iter()
        .map(|r| r.samples.iter().filter(|x| in_window(x.time)).map(|x| x.osc / x.time).fold(0.0, f64::max))
        .collect();
    let per_path_max_osc: Vec<f64> = records
        .iter()
        .map(|r| r.samples.iter().filter(|x| x.time >= s.curve_start).map(|x| x.osc).fold(0.0, f64::max))
        .collect();
    let worst = per_path_max_osc_over_t.iter().cloned().fold(0.0, f64::max);

    // Sample times shared by every path (the observer is common).
    let times: Vec<f64> = records[0].samples.iter().map(|x| x.time).collect();
    let n = records.len() as f64;
    let mut curve = Vec::new();
    let mut trend_pts = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        if t < s.curve_start.min(s.window_start) || t <= 1.0 {
            continue;
        }
        let mean_osc = records.iter().map(|r| r.samples[k].osc).sum::<f64>() / n;
        let lt = t.ln();
        let point = CurvePoint {
            t,
            mean_osc,
            mean_osc_over_t: mean_osc / t,
            mean_osc_over_log_powers: s.powers.iter().map(|&p| mean_osc / lt.powf(p)).collect(),
        };
        if in_window(t) {
            trend_pts.push((t, point.mean_osc_over_t));
        }
        curve.push(point);
    }
    let trend_slope = ols_slope(&trend_pts).unwrap_or(0.0);
    let trend_decreasing = trend_slope <= 1e-15;
    let below_threshold = worst <= s.max_osc_over_t;
    Ok(OscReport {
        window_start: s.window_start,
        threshold: s.max_osc_over_t,
        powers: s.powers.clone(),
        per_path_max_osc_over_t,
        per_path_max_osc,
        worst_osc_over_t: worst,
        below_threshold,
        trend_slope,
        trend_decreasing,
        curve,
        pass: below_threshold && trend_decreasing,
    })
}

pub fn exp_oscillation_scaling(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(OscReport, Ensemble)> {
    let e = run_ensemble(&EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed), pool)?;
    let records = ensemble_ok(cfg, &e)?;
    let mut report = analyze_oscillation(cfg, &records)?;
    report.pass &= e.summary(&cfg.budget).within_budget;
    Ok((report, e))
}

// ------------------------------------------------------------------- gap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub sign_convention: String,
    pub beta: f64,
    pub c: f64,
    pub t_min: f64,
    /// Ensemble mean of the gap at the first sample.
    pub initial_gap: f64,
    /// Per path `max_{t >= t_min} gap(t) - beta log log t`.
    pub per_path_max_excess: Vec<f64>,
    pub worst_excess: f64,
    pub pass: bool,
}

/// `gap = log sup(field) - log L1(field)`.
pub fn analyze_gap(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<GapReport> {
    if records.is_empty() {
        return Err(Error::Diagnostic("no records".into()));
    }
    let s = &cfg.ratio;
    if !(s.t_min > std::f64::consts::E) {
        return Err(Error::Config("ratio.t_min must exceed e so that log log t > 0".into()));
    }
    let per_path_max_excess: Vec<f64> = records
        .iter()
        .map(|r| {
            r.samples
                .iter()
                .filter(|x| x.time >= s.t_min - 1e-9)
                .map(|x| x.ratio.ln() - s.beta * x.time.ln().ln())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let worst_excess = per_path_max_excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let initial_gap = records.iter().map(|r| r.samples[0].ratio.ln()).sum::<f64>() / records.len() as f64;
    Ok(GapReport {
        sign_convention: "gap = log sup - log L1 of the field; a constant field gives -log 2".into(),
        beta: s.beta,
        c: s.c,
        t_min: s.t_min,
        initial_gap,
        per_path_max_excess,
        worst_excess,
        pass: worst_excess <= s.c,
    })
}

pub fn exp_ratio_interpolation(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(GapReport, Ensemble)> {
    let e = run_ensemble(&EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed), pool)?;
    let records = ensemble_ok(cfg, &e)?;
    let mut report = analyze_gap(cfg, &records)?;
    report.pass &= e.summary(&cfg.budget).within_budget;
    Ok((report, e))
}

/// Pilot calibration of the additive constant of the gap bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCalibration {
    pub pilot_seed: u64,
    pub pilot_paths: usize,
    pub beta: f64,
    pub t_min: f64,
    pub pilot_worst_excess: f64,
    pub margin: f64,
    /// `ceil(10 (worst + margin)) / 10`, the value to freeze in configs.
    pub frozen_c: f64,
}

/// Margin added to the pilot maximum before freezing.
pub const GAP_CALIBRATION_MARGIN: f64 = 1.0;

pub fn calibrate_gap(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(GapCalibration, Ensemble)> {
    let e = run_ensemble(&EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed), pool)?;
    let records = ensemble_ok(cfg, &e)?;
    let report = analyze_gap(cfg, &records)?;
    let frozen_c = (10.0 * (report.worst_excess + GAP_CALIBRATION_MARGIN)).ceil() / 10.0;
    Ok((
        GapCalibration {
            pilot_seed: cfg.seed,
            pilot_paths: records.len(),
            beta: report.beta,
            t_min: report.t_min,
            pilot_worst_excess: report.worst_excess,
            margin: GAP_CALIBRATION_MARGIN,
            frozen_c,
        },
        e,
    ))
}

// ------------------------------------------------------- peaks / valleys

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSetup {
    /// `N = sup u_0`.
    pub n_height: f64,
    pub gamma: f64,
    /// `N^{-gamma}`.
    pub t_end: f64,
    pub steps: u64,
    pub initial_mass: f64,
}

fn spike_setup(cfg: &ExperimentConfig) -> Result<SpikeSetup> {
    let InitialProfile::Spike { mass, .. } = &cfg.initial_profile else {
        return Err(Error::Config("peak and valley experiments need a spike initial profile".into()));
    };
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("spike must carry unit mass, got {mass}")));
    }
    let u0 = cfg.initial_profile.build(cfg.grid)?;
    let n_height = norm_sup(&u0)?;
    if n_height > 1.0 / cfg.grid.spacing() * (1.0 + 1e-6) {
        return Err(Error::Config(format!("spike height {n_height} exceeds 1/dx")));
    }
    let t_end = n_height.powf(-cfg.peaks.gamma);
    let steps = (t_end / cfg.dt()).round().max(1.0) as u64;
    Ok(SpikeSetup { n_height, gamma: cfg.peaks.gamma, t_end, steps, initial_mass: norm_l1(&u0)? })
}

/// Spike ensembles sample every step up to `N^{-gamma}`.
fn spike_spec(cfg: &ExperimentConfig, setup: &SpikeSetup) -> EnsembleSpec {
    let mut spec = EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed);
    spec.observer = crate::solver::SampleTimes::from_steps((1..=setup.steps).collect(), setup.steps);
    spec
}

pub fn spike_ensemble(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Ensemble> {
    let setup = spike_setup(cfg)?;
    run_ensemble(&spike_spec(cfg, &setup), pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicSpike {
    pub t: f64,
    /// `sup P_t u_0` from the kernel.
    pub sup_kernel: f64,
    /// Same quantity from the solver with `sigma = 0`.
    pub sup_solver: f64,
    /// `||u_0||_1 2 max(1, t^{-1/2})`.
    pub bound: f64,
    pub pass: bool,
}

fn deterministic_spike(cfg: &ExperimentConfig, setup: &SpikeSetup) -> Result<DeterministicSpike> {
    let u0 = cfg.initial_profile.build(cfg.grid)?;
    let t = setup.steps as f64 * cfg.dt();
    let sup_kernel = norm_sup(&semigroup_apply(t, &u0, &KernelConfig::default())?)?;
    let solver = cfg.solver_config();
    let stream = NoiseStream::new(cfg.seed, 0, cfg.grid, solver.dt)?;
    let mut sim = Simulation::new(solver, SigmaSpec::zero(), stream, u0.clone())?;
    sim.advance_to(setup.steps)?;
    let sup_solver = sim.log_sup().exp();
    let bound = norm_l1(&u0)? * 2.0 * 1f64.max(t.powf(-0.5));
    Ok(DeterministicSpike { t, sup_kernel, sup_solver, bound, pass: sup_kernel <= bound && sup_solver <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub k: f64,
    /// Fraction of paths with `||u(N^{-gamma})||_inf >= K N^{gamma/2}`.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub setup: SpikeSetup,
    pub exceedance: Vec<Exceedance>,
    pub k_assert: f64,
    pub frequency_at_k_assert: f64,
    pub max_frequency: f64,
    /// Fraction of paths with `sup_{s <= N^{-gamma}} ||u(s)||_inf >= 2N`.
    pub doubling_frequency: f64,
    pub deterministic: DeterministicSpike,
    pub ensemble: EnsembleSummary,
    pub pass: bool,
}

pub fn analyze_peaks(cfg: &ExperimentConfig, e: &Ensemble) -> Result<PeakReport> {
    let setup = spike_setup(cfg)?;
    let records = ensemble_ok(cfg, e)?;
    let n = records.len() as f64;
    let last = |r: &RunRecord| -> Result<crate::solver::Sample> {
        r.samples
            .last()
            .copied()
            .filter(|s| s.step == setup.steps)
            .ok_or_else(|| Error::Diagnostic(format!("path {} stopped before N^-gamma", r.path_id)))
    };
    let finals = records.iter().map(last).collect::<Result<Vec<_>>>()?;
    let scale = setup.n_height.powf(setup.gamma / 2.0);
    let freq = |k: f64| finals.iter().filter(|s| s.log_sup_u().exp() >= k * scale).count() as f64 / n;
    let exceedance: Vec<Exceedance> = cfg.peaks.k_grid.iter().map(|&k| Exceedance { k, frequency: freq(k) }).collect();
    let frequency_at_k_assert = freq(cfg.peaks.k_assert);
    let doubling_frequency = finals
        .iter()
        .filter(|s| s.log_sup_running_max.exp() >= 2.0 * setup.n_height)
        .count() as f64
        / n;
    let deterministic = deterministic_spike(cfg, &setup)?;
    let ensemble = e.summary(&cfg.budget);
    let pass = frequency_at_k_assert <= cfg.peaks.max_frequency && deterministic.pass && ensemble.within_budget;
    Ok(PeakReport {
        setup,
        exceedance,
        k_assert: cfg.peaks.k_assert,
        frequency_at_k_assert,
        max_frequency: cfg.peaks.max_frequency,
        doubling_frequency,
        deterministic,
        ensemble,
        pass,
    })
}

pub fn exp_peak_taming(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(PeakReport, Ensemble)> {
    let e = spike_ensemble(cfg, pool)?;
    Ok((analyze_peaks(cfg, &e)?, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassDeviation {
    pub t: f64,
    /// Root mean square of `M_t - M_0` over paths.
    pub rms_deviation: f64,
    /// Mean predicted quadratic variation `int_0^t ||sigma(u)||_2^2`.
    pub mean_predicted_qv: f64,
    pub n_sqrt_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyReport {
    pub setup: SpikeSetup,
    /// Fraction of paths whose mass leaves `[1/2, 2]` before `N^{-gamma}`.
    pub exit_frequency: f64,
    pub max_exit_frequency: f64,
    pub overlay: Vec<MassDeviation>,
    /// End of the micro window `micro_fraction N^{-2}`.
    pub micro_window: f64,
    pub micro_factor: f64,
    pub worst_micro_ratio: f64,
    pub micro_pass: bool,
    pub ensemble: EnsembleSummary,
    pub pass: bool,
}

pub fn analyze_valleys(cfg: &ExperimentConfig, e: &Ensemble) -> Result<ValleyReport> {
    let setup = spike_setup(cfg)?;
    let records = ensemble_ok(cfg, e)?;
    let n = records.len() as f64;
    let exits = records
        .iter()
        .filter(|r| r.samples.iter().any(|s| !(0.5..=2.0).contains(&s.mass)))
        .count();
    let m0 = setup.initial_mass;
    let len = records.iter().map(|r| r.samples.len()).min().unwrap_or(0);
    let overlay: Vec<MassDeviation> = (0..len)
        .filter(|&k| records[0].samples[k].time > 0.0)
        .map(|k| {
            let t = records[0].samples[k].time;
            let ms = records.iter().map(|r| (r.samples[k].mass - m0).powi(2)).sum::<f64>() / n;
            let qv = records.iter().map(|r| r.samples[k].predicted_qv).sum::<f64>() / n;
            MassDeviation { t, rms_deviation: ms.sqrt(), mean_predicted_qv: qv, n_sqrt_t: setup.n_height * t.sqrt() }
        })
        .collect();
    let micro_window = cfg.peaks.micro_fraction * setup.n_height.powi(-2);
    let worst_micro_ratio = overlay
        .iter()
        .filter(|d| d.t <= micro_window + 1e-15)
        .map(|d| d.rms_deviation / d.n_sqrt_t)
        .fold(0.0, f64::max);
    let micro_pass = worst_micro_ratio <= cfg.peaks.micro_factor;
    let exit_frequency = exits as f64 / n;
    let ensemble = e.summary(&cfg.budget);
    let pass = exit_frequency < cfg.peaks.max_exit_frequency && micro_pass && ensemble.within_budget;
    Ok(ValleyReport {
        setup,
        exit_frequency,
        max_exit_frequency: cfg.peaks.max_exit_frequency,
        overlay,
        micro_window,
        micro_factor: cfg.peaks.micro_factor,
        worst_micro_ratio,
        micro_pass,
        ensemble,
        pass,
    })
}

pub fn exp_mass_valleys(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(ValleyReport, Ensemble)> {
    let e = spike_ensemble(cfg, pool)?;
    Ok((analyze_valleys(cfg, &e)?, e))
}

// ------------------------------------------------------------------- CLT

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub lambda_hat: SlopeEstimate,
    pub report: CltReport,
    pub min_p_value: f64,
    pub soft_pass: bool,
    pub ensemble: EnsembleSummary,
}

pub fn analyze_clt(cfg: &ExperimentConfig, e: &Ensemble) -> Result<CltSummary> {
    let records = ensemble_ok(cfg, e)?;
    let lambda_hat = estimate_lambda(&records, cfg.lambda_window())?;
    let t = cfg.clt.t.unwrap_or(cfg.horizon);
    let report = clt_diagnostic(&records, lambda_hat.lambda_hat, t)?;
    let soft_pass = report.p_value > cfg.clt.min_p_value;
    Ok(CltSummary { lambda_hat, report, min_p_value: cfg.clt.min_p_value, soft_pass, ensemble: e.summary(&cfg.budget) })
}

pub fn exp_clt(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<(CltSummary, Ensemble)> {
    let e = run_ensemble(&EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed), pool)?;
    Ok((analyze_clt(cfg, &e)?, e))
}

impl CltSummary {
    pub fn status(&self) -> Status {
        if !self.ensemble.within_budget {
            Status::Fail
        } else if self.soft_pass {
            Status::Pass
        } else {
            Status::Warn
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ensemble::worker_pool;

    fn cfg(body: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(body).unwrap()
    }

    const ZERO: &str = r#"
name = "z"
grid = 16
horizon = 4.0
n_paths = 8
seed = 2

[sigma]
kind = "zero"

[initial_profile]
kind = "constant"
value = 1.0

[lambda.second_profile]
kind = "constant"
value = 5.0

[ratio]
t_min = 3.0
"#;

    #[test]
    fn zero_sigma_has_zero_exponent_and_flat_observables() {
        let c = cfg(ZERO);
        let pool = worker_pool(1).unwrap();
        let (r, ens) = exp_lambda_vs_formula(&c, &pool).unwrap();
        assert!(r.gk_lambda.is_none());
        assert!(r.primary.estimate.lambda_hat.abs() <= 1e-12);
        assert_eq!(r.u0_independent, Some(true));
        assert!(r.pass);
        assert!(ens[0].label.starts_with(PRIMARY_PREFIX) && ens[1].label.starts_with(SECOND_PREFIX));
        assert_eq!(ens[1].seed, 3);

        let records = ens[0].included();
        assert!(records.iter().flat_map(|r| &r.samples).all(|s| s.osc == 0.0));
        let gap = analyze_gap(&c, &records).unwrap();
        assert_eq!(gap.initial_gap, -std::f64::consts::LN_2);
    }

    #[test]
    fn zero_sigma_smooths_a_bump_monotonically() {
        let mut c = cfg(ZERO);
        let grid = c.grid;
        c.initial_profile = InitialProfile::Table {
            values: grid.points().map(|x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos().powi(2)).collect(),
        };
        c.osc.window_start = 2.0;
        c.osc.curve_start = 2.0;
        let e = run_ensemble(&EnsembleSpec::from_config(&c, &c.initial_profile, c.seed), &worker_pool(1).unwrap())
            .unwrap();
        let osc: Vec<f64> = e.records[0].samples.iter().map(|s| s.osc).collect();
        assert!(osc[0] > 0.4);
        assert!(osc.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(*osc.last().unwrap() < 1e-6);
        let report = analyze_oscillation(&c, &e.included()).unwrap();
        assert!(report.pass && report.trend_decreasing);
    }

    #[test]
    fn lambda_experiment_needs_linear_sigma() {
        let mut c = cfg(ZERO);
        c.sigma = SigmaSpec::piecewise_linear(vec![1.0], vec![1.0, 0.5]).unwrap();
        let e = Ensemble { label: "x".into(), seed: 0, records: Vec::new(), excluded: Vec::new() };
        assert!(matches!(analyze_lambda(&c, &e, None), Err(Error::Config(_))));
    }

    fn spike(grid: usize, width: f64, paths: u64, sigma: &str) -> ExperimentConfig {
        cfg(&format!(
            r#"
name = "s"
grid = {grid}
horizon = 1.0
n_paths = {paths}
seed = 11

[sigma]
{sigma}

[initial_profile]
kind = "spike"
mass = 1.0
width = {width}
"#
        ))
    }

    #[test]
    fn spike_gap_and_deterministic_peak() {
        let c = spike(512, 1.0 / 256.0, 2, "kind = \"zero\"");
        let setup = spike_setup(&c).unwrap();
        assert!((setup.n_height - 256.0).abs() < 1e-6);
        let u0 = c.initial_profile.build(c.grid).unwrap();
        let gap = (norm_sup(&u0).unwrap() / norm_l1(&u0).unwrap()).ln();
        assert!((gap - 256f64.ln()).abs() < 1e-6);

        let c = spike(512, 1.0 / 64.0, 2, "kind = \"zero\"");
        let e = spike_ensemble(&c, &worker_pool(1).unwrap()).unwrap();
        let peaks = analyze_peaks(&c, &e).unwrap();
        let d = &peaks.deterministic;
        assert!(d.pass, "{d:?}");
        assert!(d.bound <= 2.0 * 64f64.powf(0.75) * (1.0 + 1e-6));
        assert!((d.sup_kernel - d.sup_solver).abs() < 0.01 * d.sup_kernel);
        let valleys = analyze_valleys(&c, &e).unwrap();
        assert_eq!(valleys.exit_frequency, 0.0);
        assert!(valleys.overlay.iter().all(|m| m.rms_deviation < 1e-12));
    }

    #[test]
    fn flat_start_has_no_tall_peaks() {
        let c = spike(64, 1.0, 16, "kind = \"linear\"\nq = 1.0");
        let e = spike_ensemble(&c, &worker_pool(1).unwrap()).unwrap();
        let r = analyze_peaks(&c, &e).unwrap();
        assert!((r.setup.n_height - 1.0).abs() < 1e-6);
        for x in r.exceedance.iter().filter(|x| x.k >= 4.0) {
            assert_eq!(x.frequency, 0.0);
        }
        assert!(r.pass);
    }

    #[test]
    fn spike_narrower_than_a_cell_is_rejected() {
        let err = ExperimentConfig::from_toml_str(
            r#"
name = "s"
grid = 64
horizon = 1.0
n_paths = 1
seed = 1
[sigma]
kind = "zero"
[initial_profile]
kind = "spike"
mass = 1.0
width = 0.001
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not representable"), "{err}");
    }
}
