//! Command line: one subcommand per experiment.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::config::ExperimentConfig;
use super::ensemble::{run_ensemble, worker_pool, Ensemble, EnsembleSpec, EnsembleSummary, Exclusion};
use super::experiments::*;
use super::kernel_suite::run_kernel_suite;
use super::output::{read_rows, Format, Manifest, OutputDir, SeriesRow, MANIFEST_FILE, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::solver::{PathStatus, RunRecord, Sample};

/// Stochastic heat equation laboratory.
#[derive(Debug, Parser)]
#[command(name = "shelab", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment TOML file, or a manifest.json to rerun a stored experiment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the number of paths.
    #[arg(long, global = true)]
    pub paths: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Series format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Heat kernel invariant suite.
    KernelCheck,
    /// One path with every sample written out.
    Simulate,
    /// Parallel paths and an ensemble summary.
    Ensemble,
    /// Lyapunov exponent against the closed-form integral.
    Lambda,
    /// Oscillation of the logarithm.
    Osc,
    /// Gap between the sup and L1 norms.
    Ratio,
    /// Tall-peak taming from a spike.
    Peaks,
    /// Mass valleys from a spike.
    Valleys,
    /// Fluctuations of log u(t, 0).
    Clt,
    /// Recompute the summary of a stored run from its series.
    Report,
    /// Pilot run freezing the additive constant of the gap bound.
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Lambda => "lambda",
            Command::Osc => "osc",
            Command::Ratio => "ratio",
            Command::Peaks => "peaks",
            Command::Valleys => "valleys",
            Command::Clt => "clt",
            Command::Report => "report",
            Command::Calibrate => "calibrate",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        [
            Command::KernelCheck,
            Command::Simulate,
            Command::Ensemble,
            Command::Lambda,
            Command::Osc,
            Command::Ratio,
            Command::Peaks,
            Command::Valleys,
            Command::Clt,
            Command::Calibrate,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// Machine-readable summary written next to every series.
#[derive(Debug, Clone, Serialize)]
pub struct Summary<T> {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: Option<String>,
    pub status: Status,
    pub report: T,
}

/// Summary of a single simulated path.
#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub path_id: u64,
    pub status: PathStatus,
    pub steps: u64,
    pub clamp_rate: f64,
    pub renormalizations: Option<u64>,
    pub last: Option<Sample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub ensembles: Vec<EnsembleSummary>,
    pub paths: Vec<PathSummary>,
}

fn path_summary(r: &RunRecord, renormalizations: bool) -> PathSummary {
    PathSummary {
        path_id: r.path_id,
        status: r.status.clone(),
        steps: r.steps,
        clamp_rate: r.clamp_rate(),
        renormalizations: renormalizations.then_some(r.renormalizations),
        last: r.samples.last().copied(),
    }
}

/// Parse `argv` and run. Returns the process exit code: 0 on pass or
/// warning, 1 on a failed assertion or runtime failure, 2 on usage or
/// configuration errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(Status::Fail) => {
            eprintln!("{}: FAIL", cli.command.name());
            1
        }
        Ok(status) => {
            eprintln!("{}: {}", cli.command.name(), if status == Status::Warn { "WARN" } else { "PASS" });
            0
        }
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            match e {
                Error::Config(_) | Error::InvalidGrid(_) | Error::Domain(_) => 2,
                _ => 1,
            }
        }
    }
}

/// Configuration and output settings after applying the global flags.
struct Resolved {
    config: ExperimentConfig,
    format: Format,
    out: PathBuf,
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let g = &cli.global;
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{} needs --config", cli.command.name())))?;
    let (mut config, stored_format) = if is_manifest(path) {
        let m = Manifest::load(path)?;
        if m.experiment != cli.command.name() {
            return Err(Error::Config(format!(
                "manifest belongs to experiment {}, not {}",
                m.experiment,
                cli.command.name()
            )));
        }
        (m.config, Some(m.format))
    } else {
        (ExperimentConfig::load(path)?, None)
    };
    if let Some(s) = g.seed {
        config.seed = s;
    }
    if let Some(p) = g.paths {
        config.n_paths = p;
    }
    config.validate()?;
    let format = g.format.or(stored_format).unwrap_or(Format::Csv);
    let out = g
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", config.name, cli.command.name())));
    Ok(Resolved { config, format, out })
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn emit<T: Serialize>(out: Option<&OutputDir>, summary: &Summary<T>) -> Result<Status> {
    if let Some(o) = out {
        o.write_summary(summary)?;
    }
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    println!("{text}");
    Ok(summary.status)
}

fn store(r: &Resolved, experiment: &str, ensembles: &[&Ensemble]) -> Result<OutputDir> {
    let out = OutputDir::create(&r.out, r.format)?;
    out.write_manifest(&Manifest::new(experiment, &r.config, r.format))?;
    out.write_series(ensembles)?;
    Ok(out)
}

fn summary<T>(experiment: &str, cfg: &ExperimentConfig, status: Status, report: T) -> Summary<T> {
    Summary {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.to_string(),
        config_hash: Some(cfg.hash()),
        status,
        report,
    }
}

fn execute(cli: &Cli) -> Result<Status> {
    let name = cli.command.name();
    match cli.command {
        Command::KernelCheck => {
            let seed = cli.global.seed.unwrap_or(1);
            let report = run_kernel_suite(seed, &KernelConfig::default())?;
            let out = match &cli.global.out {
                Some(dir) => Some(OutputDir::create(dir, cli.global.format.unwrap_or(Format::Csv))?),
                None => None,
            };
            let s = Summary {
                schema_version: SCHEMA_VERSION,
                experiment: name.into(),
                config_hash: None,
                status: Status::from_pass(report.pass),
                report,
            };
            emit(out.as_ref(), &s)
        }
        Command::Report => report(cli),
        command => {
            let r = resolve(cli)?;
            let pool = worker_pool(cli.global.workers)?;
            run_experiment(command, &r, &pool)
        }
    }
}

fn run_experiment(command: Command, r: &Resolved, pool: &rayon::ThreadPool) -> Result<Status> {
    let cfg = &r.config;
    let name = command.name();
    match command {
        Command::Simulate => {
            let mut spec = EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed);
            spec.paths = 1;
            let e = run_ensemble(&spec, pool)?;
            let out = store(r, name, &[&e])?;
            let rec = &e.records[0];
            let status = Status::from_pass(rec.completed() && e.excluded.is_empty());
            emit(Some(&out), &summary(name, cfg, status, path_summary(rec, true)))
        }
        Command::Ensemble => {
            let e = run_ensemble(&EnsembleSpec::from_config(cfg, &cfg.initial_profile, cfg.seed), pool)?;
            let out = store(r, name, &[&e])?;
            emit(Some(&out), &ensemble_summary(name, cfg, &e, true))
        }
        Command::Lambda => {
            let (report, ens) = exp_lambda_vs_formula(cfg, pool)?;
            let out = store(r, name, &ens.iter().collect::<Vec<_>>())?;
            emit(Some(&out), &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Osc => {
            let (report, e) = exp_oscillation_scaling(cfg, pool)?;
            let out = store(r, name, &[&e])?;
            emit(Some(&out), &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Ratio => {
            let (report, e) = exp_ratio_interpolation(cfg, pool)?;
            let out = store(r, name, &[&e])?;
            emit(Some(&out), &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Peaks => {
            let (report, e) = exp_peak_taming(cfg, pool)?;
            let out = store(r, name, &[&e])?;
            emit(Some(&out), &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Valleys => {
            let (report, e) = exp_mass_valleys(cfg, pool)?;
            let out = store(r, name, &[&e])?;
            emit(Some(&out), &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Clt => {
            let (report, e) = exp_clt(cfg, pool)?;
            let out = store(r, name, &[&e])?;
            let status = report.status();
            emit(Some(&out), &summary(name, cfg, status, report))
        }
        Command::Calibrate => {
            let (report, e) = calibrate_gap(cfg, pool)?;
            let out = store(r, name, &[&e])?;
            emit(Some(&out), &summary(name, cfg, Status::Pass, report))
        }
        Command::KernelCheck | Command::Report => unreachable!("handled by execute"),
    }
}

fn ensemble_summary(name: &str, cfg: &ExperimentConfig, e: &Ensemble, renorm: bool) -> Summary<EnsembleReport> {
    let s = e.summary(&cfg.budget);
    let status = Status::from_pass(s.within_budget);
    let paths = e.records.iter().map(|r| path_summary(r, renorm)).collect();
    summary(name, cfg, status, EnsembleReport { ensembles: vec![s], paths })
}

/// Rebuild ensembles from stored rows, in order of first appearance. Paths
/// whose series stops before the longest one in their ensemble are marked
/// failed; clamp exclusions are recomputed from the stored counts.
pub fn ensembles_from_rows(cfg: &ExperimentConfig, rows: &[SeriesRow]) -> Vec<Ensemble> {
    let n = cfg.grid.n_points() as u64;
    let mut labels: Vec<String> = Vec::new();
    for r in rows {
        if !labels.contains(&r.ensemble) {
            labels.push(r.ensemble.clone());
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let mut records: Vec<RunRecord> = Vec::new();
            for row in rows.iter().filter(|r| r.ensemble == label) {
                if records.last().is_none_or(|r| r.path_id != row.path_id) {
                    records.push(RunRecord {
                        path_id: row.path_id,
                        status: PathStatus::Completed,
                        samples: Vec::new(),
                        steps: 0,
                        cells: 0,
                        clamp_count: 0,
                        renormalizations: 0,
                        final_field: None,
                        final_log_mass: 0.0,
                    });
                }
                let rec = records.last_mut().expect("pushed above");
                rec.samples.push(row.sample());
                rec.steps = row.step;
                rec.cells = row.step * n;
                rec.clamp_count = row.clamp_count;
            }
            let final_step = records.iter().map(|r| r.steps).max().unwrap_or(0);
            let mut excluded = Vec::new();
            for rec in &mut records {
                if rec.steps < final_step {
                    let time = rec.samples.last().map_or(0.0, |s| s.time);
                    rec.status = PathStatus::Failed { time, reason: "series ends early".into() };
                    excluded.push(Exclusion { path_id: rec.path_id, reason: format!("failed at t = {time}") });
                } else if rec.clamp_rate() > cfg.budget.clamp_rate {
                    excluded.push(Exclusion {
                        path_id: rec.path_id,
                        reason: format!("clamp rate {} above budget {}", rec.clamp_rate(), cfg.budget.clamp_rate),
                    });
                }
            }
            let seed = if label.starts_with(SECOND_PREFIX) { second_seed(cfg) } else { cfg.seed };
            Ensemble { label, seed, records, excluded }
        })
        .collect()
}

/// `report`: read `manifest.json` and the series from `--out` (or from the
/// directory of a manifest given as `--config`) and recompute the summary.
fn report(cli: &Cli) -> Result<Status> {
    let dir = match (&cli.global.out, &cli.global.config) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) if is_manifest(c) => c.parent().map(Path::to_path_buf).unwrap_or_default(),
        _ => return Err(Error::Config("report needs --out <run directory> or --config <manifest.json>".into())),
    };
    let m = Manifest::load(&dir.join(MANIFEST_FILE))?;
    let rows = read_rows(&dir.join(m.format.series_file()), m.format)?;
    let cfg = &m.config;
    let ens = ensembles_from_rows(cfg, &rows);
    if ens.is_empty() {
        return Err(Error::Diagnostic("series file is empty".into()));
    }
    let command = Command::from_name(&m.experiment)
        .ok_or_else(|| Error::Config(format!("unknown experiment {} in manifest", m.experiment)))?;
    let name = m.experiment.as_str();
    let out = Some(OutputDir { dir: dir.clone(), format: m.format });
    let out = out.as_ref();
    let included = |e: &Ensemble| -> Result<Vec<RunRecord>> {
        let r = e.included();
        if r.is_empty() {
            Err(Error::Diagnostic(format!("every path of ensemble {} was excluded", e.label)))
        } else {
            Ok(r)
        }
    };
    match command {
        Command::Simulate | Command::Ensemble | Command::Calibrate => {
            emit(out, &ensemble_summary(name, cfg, &ens[0], false))
        }
        Command::Lambda => {
            let report = analyze_lambda(cfg, &ens[0], ens.get(1))?;
            emit(out, &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Osc => {
            let mut report = analyze_oscillation(cfg, &included(&ens[0])?)?;
            report.pass &= ens[0].summary(&cfg.budget).within_budget;
            emit(out, &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Ratio => {
            let mut report = analyze_gap(cfg, &included(&ens[0])?)?;
            report.pass &= ens[0].summary(&cfg.budget).within_budget;
            emit(out, &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Peaks => {
            let report = analyze_peaks(cfg, &ens[0])?;
            emit(out, &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Valleys => {
            let report = analyze_valleys(cfg, &ens[0])?;
            emit(out, &summary(name, cfg, Status::from_pass(report.pass), report))
        }
        Command::Clt => {
            let report = analyze_clt(cfg, &ens[0])?;
            let status = report.status();
            emit(out, &summary(name, cfg, status, report))
        }
        Command::KernelCheck | Command::Report => Err(Error::Config(format!("{name} runs have no series"))),
    }
}
