//! Acceptance criteria. Each criterion prints one `criterion N: PASS|FAIL|WARN`
//! line with the measured values. Criteria run one after another so the
//! reported runtimes are not shared; the process fails if any criterion does.
//! Arguments that do not start with `-` select criteria by substring.

use std::path::Path;
use std::process::Command;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use shelab::fields::{GridFunction, TorusGrid};
use shelab::harness::{
    analyze_gap, analyze_oscillation, analyze_peaks, analyze_valleys, exp_clt, exp_lambda_vs_formula, run_ensemble,
    run_kernel_suite, spike_ensemble, worker_pool, Ensemble, EnsembleSpec, ExperimentConfig, LambdaReport, Status,
};
use shelab::kernel::KernelConfig;
use shelab::lyapunov::mean_std;
use shelab::noise::NoiseStream;
use shelab::solver::{
    coupled_pair, rescale_sigma, subadditivity_check, SampleTimes, SigmaSpec, Simulation, SolverConfig,
};

const SEED: u64 = 20_240_701;

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn verdict(n: u32, pass: bool, elapsed: Duration, limit: Option<Duration>, detail: &str) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let word = if pass && in_time { "PASS" } else { "FAIL" };
    let limit = limit.map_or(String::new(), |l| format!(" (limit {:.0} s)", l.as_secs_f64()));
    println!("criterion {n}: {word} | {detail} | runtime {:.1} s{limit}", elapsed.as_secs_f64());
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime limit");
}

fn criterion_01_kernel_suite() {
    let start = Instant::now();
    let r = run_kernel_suite(SEED, &KernelConfig::default()).unwrap();
    let detail = r
        .checks
        .iter()
        .map(|c| format!("{} {:.2e}/{:.0e}{}", c.name, c.worst, c.limit, if c.pass { "" } else { " FAIL" }))
        .collect::<Vec<_>>()
        .join(", ");
    let detail = format!("{detail}; A = {:.6}, chi = {:.3} (log A) / {:.3} (A)", r.ball_mass_constant, r.chi_log, r.chi_linear);
    verdict(1, r.pass, start.elapsed(), Some(Duration::from_secs(30)), &detail);
}

fn criterion_02_deterministic_reduction() {
    let start = Instant::now();
    let pi = std::f64::consts::PI;
    let grid = TorusGrid::new(256).unwrap();
    let dt = 1e-4;
    let u0 = GridFunction::from_fn(grid, |x| 2.0 + (pi * x).cos()).unwrap();
    let stream = NoiseStream::new(SEED, 0, grid, dt).unwrap();
    let mut sim = Simulation::new(SolverConfig::new(grid, dt), SigmaSpec::zero(), stream, u0).unwrap();
    let mut worst_mass_step = 0.0f64;
    for _ in 0..10_000 {
        let scale = sim.state().log_mass.exp();
        let info = sim.advance().unwrap();
        worst_mass_step = worst_mass_step.max(scale * (info.mass_after - info.mass_before).abs());
    }
    let u = sim.state().reconstruct();
    let decay = (-pi * pi).exp();
    let err = grid
        .points()
        .zip(u.values())
        .map(|(x, v)| (v - (2.0 + decay * (pi * x).cos())).abs())
        .fold(0.0, f64::max);
    let pass = err <= 1e-3 && worst_mass_step <= 1e-10;
    let detail = format!("eigenmode error {err:.2e} (<= 1e-3), mass change per step {worst_mass_step:.2e} (<= 1e-10)");
    verdict(2, pass, start.elapsed(), Some(Duration::from_secs(60)), &detail);
}

fn criterion_03_algebraic_identities() {
    let start = Instant::now();
    let grid = TorusGrid::new(64).unwrap();
    let lin = SigmaSpec::linear(1.0).unwrap();
    let dt = SolverConfig::default_dt(grid, 1.0);
    let stream = NoiseStream::new(SEED, 3, grid, dt).unwrap();
    let u0 = GridFunction::from_fn(grid, |x| 1.5 + x.sin()).unwrap();
    let steps = (5.0 / dt).round() as u64;

    // Scale equivariance, with and without renormalization.
    let kappa = 3.7;
    let mut scale_err = 0.0f64;
    for direct in [true, false] {
        let cfg = SolverConfig { direct, ..SolverConfig::new(grid, dt) };
        let mut a = Simulation::new(cfg.clone(), lin.clone(), stream.clone(), u0.clone()).unwrap();
        let mut b = Simulation::new(cfg, lin.clone(), stream.clone(), u0.scaled(kappa).unwrap()).unwrap();
        a.advance_to(steps).unwrap();
        b.advance_to(steps).unwrap();
        for (x, y) in a.state().reconstruct().values().iter().zip(b.state().reconstruct().values()) {
            scale_err = scale_err.max((kappa * x - y).abs() / y.abs());
        }
    }

    // Renormalized run against the direct run.
    let piecewise = SigmaSpec::piecewise_linear(vec![0.5, 1.5], vec![1.0, 0.4, 1.2]).unwrap();
    let mut renorm_err = 0.0f64;
    for sigma in [lin.clone(), piecewise.clone()] {
        let dt = SolverConfig::default_dt(grid, sigma.lipschitz_constant());
        let stream = NoiseStream::new(SEED, 4, grid, dt).unwrap();
        let renorm = SolverConfig::new(grid, dt);
        let direct = SolverConfig { direct: true, ..renorm.clone() };
        let mut a = Simulation::new(renorm, sigma.clone(), stream.clone(), u0.clone()).unwrap();
        let mut b = Simulation::new(direct, sigma, stream, u0.clone()).unwrap();
        let steps = (5.0 / dt).round() as u64;
        a.advance_to(steps).unwrap();
        b.advance_to(steps).unwrap();
        for (x, y) in a.state().reconstruct().values().iter().zip(b.state().reconstruct().values()) {
            renorm_err = renorm_err.max((x - y).abs() / y.abs());
        }
    }

    // Shift law: theta_a theta_b = theta_{a+b}, bit for bit.
    let mut shift_exact = true;
    for (a, b) in [(0i64, 0i64), (0, 5), (17, 1000), (123_456, 7)] {
        let composed = stream.shifted(a).unwrap().shifted(b).unwrap();
        let once = stream.shifted(a + b).unwrap();
        for k in [0u64, 1, 99] {
            shift_exact &= composed.increments(k) == once.increments(k);
            shift_exact &= once.increments(k) == stream.increments((a + b) as u64 + k);
        }
    }
    shift_exact &= stream.shifted(-1).is_err();

    // Rescaling leaves linear and zero coefficients untouched.
    let masses = [1e-300, 1e-3, 0.5, 1.0, 7.0, 1e200];
    let rescale_exact = masses.iter().all(|&m| {
        rescale_sigma(&lin, m).unwrap() == lin && rescale_sigma(&SigmaSpec::zero(), m).unwrap() == SigmaSpec::zero()
    });
    let piecewise_consistent = [0.3, 1.0, 4.0].iter().all(|&m| {
        let r = rescale_sigma(&piecewise, m).unwrap();
        [0.01, 0.2, 0.9, 2.5].iter().all(|&v| (r.eval(v) - piecewise.eval(m * v) / m).abs() <= 1e-15 * (1.0 + v))
    });

    let pass = scale_err <= 1e-12 && renorm_err <= 1e-10 && shift_exact && rescale_exact && piecewise_consistent;
    let detail = format!(
        "scale equivariance {scale_err:.2e} (<= 1e-12), renormalized vs direct {renorm_err:.2e} (<= 1e-10), \
         shift law bit-exact {shift_exact}, rescale exact {rescale_exact}"
    );
    verdict(3, pass, start.elapsed(), Some(Duration::from_secs(60)), &detail);
}

fn criterion_04_pathwise_structure() {
    let start = Instant::now();
    let grid = TorusGrid::new(128).unwrap();
    let lin = SigmaSpec::linear(1.0).unwrap();
    let dt = SolverConfig::default_dt(grid, 1.0);
    let cfg = SolverConfig::new(grid, dt);
    let low = GridFunction::constant(grid, 1.0).unwrap();
    let high = GridFunction::from_fn(grid, |x| 1.0 + (std::f64::consts::PI * x).cos().powi(2)).unwrap();
    let steps = (5.0 / dt).round() as u64;
    let one = (1.0 / dt).round() as u64;
    let mut violations = 0u64;
    let mut worst_diff = f64::NEG_INFINITY;
    let mut sub_pass = 0;
    let mut worst_slack = f64::NEG_INFINITY;
    for p in 0..100 {
        let stream = NoiseStream::new(SEED, p, grid, dt).unwrap();
        let c = coupled_pair(&cfg, &lin, &stream, &low, &high, steps, 1e-8).unwrap();
        violations += c.violations;
        worst_diff = worst_diff.max(c.max_difference);
        let s = subadditivity_check(&cfg, &lin, &stream, one, one).unwrap();
        sub_pass += s.pass as usize;
        worst_slack = worst_slack.max(s.log_sup_total - s.log_sup_s - s.log_sup_shifted_unit);
    }
    let pass = violations == 0 && sub_pass == 100;
    let detail = format!(
        "coupling violations {violations} over 100 paths (max low - high {worst_diff:.2e}), \
         subadditivity {sub_pass}/100 (max log S_(s+t) - log S_s - log S_t o theta_s = {worst_slack:.3})"
    );
    verdict(4, pass, start.elapsed(), Some(Duration::from_secs(300)), &detail);
}

fn criterion_05_martingale() {
    let start = Instant::now();
    let grid = TorusGrid::new(64).unwrap();
    let lin = SigmaSpec::linear(1.0).unwrap();
    let dt = SolverConfig::default_dt(grid, 1.0);
    let u0 = GridFunction::from_fn(grid, |x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos().powi(2)).unwrap();
    let m0 = 2.5;
    let checkpoints = [0.4, 0.8, 1.2, 1.6, 2.0];
    let steps: Vec<u64> = checkpoints.iter().map(|t| (t / dt).round() as u64).collect();
    let observer = SampleTimes::from_steps(steps.clone(), *steps.last().unwrap());
    let spec = EnsembleSpec {
        label: "martingale".into(),
        solver: SolverConfig::new(grid, dt),
        sigma: lin,
        profile: shelab::harness::InitialProfile::Table { values: u0.values().to_vec() },
        seed: SEED,
        paths: 400,
        observer,
        budget: Default::default(),
    };
    let e = run_ensemble(&spec, &worker_pool(0).unwrap()).unwrap();
    assert!(e.excluded.is_empty());
    let mut within = 0;
    let mut lines = Vec::new();
    for &s in &steps {
        let masses: Vec<f64> = e
            .records
            .iter()
            .map(|r| r.samples.iter().find(|x| x.step == s).unwrap().mass)
            .collect();
        let (m, sd) = mean_std(&masses);
        let se = sd / (masses.len() as f64).sqrt();
        within += ((m - m0).abs() <= 3.0 * se) as usize;
        lines.push(format!("{:.4}+-{:.4}", m, se));
    }
    let realized: f64 = e.records.iter().map(|r| r.samples.last().unwrap().realized_qv).sum();
    let predicted: f64 = e.records.iter().map(|r| r.samples.last().unwrap().predicted_qv).sum();
    let qv_ratio = realized / predicted;
    let pass = within == checkpoints.len() && (qv_ratio - 1.0).abs() <= 0.1;
    let detail = format!(
        "mean mass at t = 0.4..2.0: [{}] vs {m0} ({within}/5 within 3 se), quadratic variation ratio {qv_ratio:.4}",
        lines.join(", ")
    );
    verdict(5, pass, start.elapsed(), Some(Duration::from_secs(300)), &detail);
}

struct LambdaRun {
    cfg: ExperimentConfig,
    report: LambdaReport,
    ensembles: Vec<Ensemble>,
    elapsed: Duration,
}

fn lambda_run() -> &'static LambdaRun {
    static RUN: OnceLock<LambdaRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = config("pam_q1.toml");
        let start = Instant::now();
        let (report, ensembles) = exp_lambda_vs_formula(&cfg, &worker_pool(0).unwrap()).unwrap();
        LambdaRun { cfg, report, ensembles, elapsed: start.elapsed() }
    })
}

fn criterion_06_lyapunov_headline() {
    let run = lambda_run();
    let r = &run.report;
    let gk = r.gk_lambda.as_ref().unwrap().value;
    let p = &r.primary;
    let s = r.secondary.as_ref().unwrap();
    let detail = format!(
        "gk_lambda(1) = {gk:.6}; u0=1: lambda_hat = {:.4} +- {:.4}, ratio {:.3}; u0=5: lambda_hat = {:.4} +- {:.4}, \
         ratio {:.3}; difference {:.4} vs 3 combined se {:.4}; sup/inf slopes {:.4}/{:.4}; clamp rates {:.1e}/{:.1e}",
        p.estimate.lambda_hat,
        p.estimate.stderr,
        p.ratio.unwrap(),
        s.estimate.lambda_hat,
        s.estimate.stderr,
        s.ratio.unwrap(),
        r.u0_difference.unwrap(),
        3.0 * r.u0_combined_stderr.unwrap(),
        r.sup_inf.sup.lambda_hat,
        r.sup_inf.inf.lambda_hat,
        r.ensembles[0].clamp_rate,
        r.ensembles[1].clamp_rate,
    );
    verdict(6, r.pass, run.elapsed, Some(Duration::from_secs(1200)), &detail);
}

fn criterion_07_oscillation_and_gap() {
    let run = lambda_run();
    let records = run.ensembles[0].included();
    assert_eq!(records.len(), 64);
    let start = Instant::now();
    let osc = analyze_oscillation(&run.cfg, &records).unwrap();
    let gap = analyze_gap(&run.cfg, &records).unwrap();
    let pass = osc.below_threshold && gap.pass;
    let detail = format!(
        "max over paths of max_(t in [50, 200]) osc/t = {:.4} (<= {}), osc/t trend slope {:.2e}; \
         max gap - 4 log log t over t >= 10 = {:.3} (<= C = {})",
        osc.worst_osc_over_t, osc.threshold, osc.trend_slope, gap.worst_excess, gap.c
    );
    verdict(7, pass, run.elapsed + start.elapsed(), None, &detail);
}

fn criterion_08_peaks_and_valleys() {
    let start = Instant::now();
    let cfg = config("peaks.toml");
    let e = spike_ensemble(&cfg, &worker_pool(0).unwrap()).unwrap();
    let peaks = analyze_peaks(&cfg, &e).unwrap();
    let valleys = analyze_valleys(&cfg, &e).unwrap();
    let freqs = peaks
        .exceedance
        .iter()
        .map(|x| format!("K={}: {:.3}", x.k, x.frequency))
        .collect::<Vec<_>>()
        .join(", ");
    let d = &peaks.deterministic;
    let detail = format!(
        "N = {:.0}, t = N^-1.5 = {:.3e}, {} paths; exceedance [{freqs}]; doubling {:.3}; mass exit {:.3}; \
         micro rms / (N sqrt t) {:.3} (<= {}); sigma = 0 sup {:.4} (kernel) / {:.4} (solver) <= {:.4}",
        peaks.setup.n_height,
        peaks.setup.t_end,
        e.records.len(),
        peaks.doubling_frequency,
        valleys.exit_frequency,
        valleys.worst_micro_ratio,
        valleys.micro_factor,
        d.sup_kernel,
        d.sup_solver,
        d.bound
    );
    verdict(8, peaks.pass && valleys.pass, start.elapsed(), Some(Duration::from_secs(600)), &detail);
}

fn criterion_09_clt_diagnostic() {
    let start = Instant::now();
    let cfg = config("clt.toml");
    let (s, _) = exp_clt(&cfg, &worker_pool(0).unwrap()).unwrap();
    let status = s.status();
    let word = match status {
        Status::Pass => "PASS",
        Status::Warn => "WARN",
        Status::Fail => "FAIL",
    };
    println!(
        "criterion 9: {word} | lambda_hat = {:.4} +- {:.4}, t = {}, KS D = {:.4}, p = {:.4} (soft threshold {}) | runtime {:.1} s",
        s.lambda_hat.lambda_hat,
        s.lambda_hat.stderr,
        s.report.t,
        s.report.ks_statistic,
        s.report.p_value,
        s.min_p_value,
        start.elapsed().as_secs_f64()
    );
    assert_ne!(status, Status::Fail, "clamp budget exceeded");
}

fn shelab(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_shelab")).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn criterion_10_reproducibility() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.toml");
    std::fs::write(
        &small,
        r#"
name = "small"
grid = 32
horizon = 16.0
n_paths = 8
seed = 5

[sigma]
kind = "linear"
q = 1.0

[initial_profile]
kind = "constant"
value = 1.0

[lambda.second_profile]
kind = "constant"
value = 5.0
"#,
    )
    .unwrap();
    let peaks = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/peaks.toml");
    let cases: [(&str, &Path, &[&str], &str); 3] = [
        ("lambda", &small, &["--format", "csv"], "series.csv"),
        ("osc", &small, &["--format", "jsonl"], "series.jsonl"),
        ("valleys", &peaks, &["--paths", "12", "--format", "jsonl"], "series.jsonl"),
    ];
    let mut lines = Vec::new();
    let mut all_identical = true;
    for (exp, cfg, extra, series) in cases {
        let first = dir.path().join(format!("{exp}-1"));
        let mut args = vec![exp, "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap(), "--workers", "1"];
        args.extend_from_slice(extra);
        let code = shelab(&args);
        assert!(code == 0 || code == 1, "{exp} exited with {code}");
        let reference = std::fs::read(first.join(series)).unwrap();
        for workers in ["1", "3"] {
            let again = dir.path().join(format!("{exp}-rerun-{workers}"));
            let manifest = first.join("manifest.json");
            let code = shelab(&[
                exp,
                "--config",
                manifest.to_str().unwrap(),
                "--out",
                again.to_str().unwrap(),
                "--workers",
                workers,
            ]);
            assert!(code == 0 || code == 1, "{exp} rerun exited with {code}");
            let identical = std::fs::read(again.join(series)).unwrap() == reference
                && std::fs::read(again.join("manifest.json")).unwrap()
                    == std::fs::read(first.join("manifest.json")).unwrap();
            all_identical &= identical;
            lines.push(format!("{exp} workers {workers}: {}", if identical { "identical" } else { "DIFFERENT" }));
        }
    }
    verdict(10, all_identical, start.elapsed(), None, &lines.join(", "));
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("criterion_01_kernel_suite", criterion_01_kernel_suite),
        ("criterion_02_deterministic_reduction", criterion_02_deterministic_reduction),
        ("criterion_03_algebraic_identities", criterion_03_algebraic_identities),
        ("criterion_04_pathwise_structure", criterion_04_pathwise_structure),
        ("criterion_05_martingale", criterion_05_martingale),
        ("criterion_06_lyapunov_headline", criterion_06_lyapunov_headline),
        ("criterion_07_oscillation_and_gap", criterion_07_oscillation_and_gap),
        ("criterion_08_peaks_and_valleys", criterion_08_peaks_and_valleys),
        ("criterion_09_clt_diagnostic", criterion_09_clt_diagnostic),
        ("criterion_10_reproducibility", criterion_10_reproducibility),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if let Err(e) = catch_unwind(AssertUnwindSafe(run)) {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("criterion {}: FAIL | {msg}", i + 1);
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
