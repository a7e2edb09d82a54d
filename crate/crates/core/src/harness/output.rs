//! Manifest, row-level series and summaries on disk.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::noise::GENERATOR_VERSION;
use crate::solver::Sample;

/// Version of the manifest, series and summary layouts.
pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn series_file(self) -> &'static str {
        match self {
            Format::Csv => "series.csv",
            Format::Jsonl => "series.jsonl",
        }
    }
}

/// Everything needed to regenerate the series of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub generator_version: String,
    pub code_version: String,
    pub format: Format,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(experiment: &str, config: &ExperimentConfig, format: Format) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            generator_version: GENERATOR_VERSION.to_string(),
            code_version: CODE_VERSION.to_string(),
            format,
            config: config.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad manifest: {e}")))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema version {}", m.schema_version)));
        }
        m.config.validate()?;
        if m.config.hash() != m.config_hash {
            return Err(Error::Config("manifest config does not match its hash".into()));
        }
        Ok(m)
    }
}

/// One sample of one path, as written to the series file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub schema_version: u32,
    pub ensemble: String,
    pub path_id: u64,
    pub step: u64,
    pub time: f64,
    pub log_mass: f64,
    pub log_sup: f64,
    pub log_inf: f64,
    pub log_l1: f64,
    pub osc: f64,
    pub ratio: f64,
    pub log_u_origin: f64,
    pub log_sup_running_max: f64,
    pub mass: f64,
    pub realized_qv: f64,
    pub predicted_qv: f64,
    pub clamp_count: u64,
}

impl SeriesRow {
    pub fn new(ensemble: &str, s: &Sample) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            ensemble: ensemble.to_string(),
            path_id: s.path_id,
            step: s.step,
            time: s.time,
            log_mass: s.log_mass,
            log_sup: s.log_sup,
            log_inf: s.log_inf,
            log_l1: s.log_l1,
            osc: s.osc,
            ratio: s.ratio,
            log_u_origin: s.log_u_origin,
            log_sup_running_max: s.log_sup_running_max,
            mass: s.mass,
            realized_qv: s.realized_qv,
            predicted_qv: s.predicted_qv,
            clamp_count: s.clamp_count,
        }
    }

    pub fn sample(&self) -> Sample {
        Sample {
            path_id: self.path_id,
            step: self.step,
            time: self.time,
            log_mass: self.log_mass,
            log_sup: self.log_sup,
            log_inf: self.log_inf,
            log_l1: self.log_l1,
            osc: self.osc,
            ratio: self.ratio,
            log_u_origin: self.log_u_origin,
            log_sup_running_max: self.log_sup_running_max,
            mass: self.mass,
            realized_qv: self.realized_qv,
            predicted_qv: self.predicted_qv,
            clamp_count: self.clamp_count,
        }
    }
}

/// Output directory of one experiment run. Each file has a single writer.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub format: Format,
}

impl OutputDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), format })
    }

    pub fn series_path(&self) -> PathBuf {
        self.dir.join(self.format.series_file())
    }

    pub fn write_manifest(&self, m: &Manifest) -> Result<()> {
        write_json(&self.dir.join(MANIFEST_FILE), m)
    }

    pub fn write_summary<T: Serialize>(&self, summary: &T) -> Result<()> {
        write_json(&self.dir.join(SUMMARY_FILE), summary)
    }

    /// Write all samples of the ensembles, ensemble by ensemble in path order.
    pub fn write_series(&self, ensembles: &[&Ensemble]) -> Result<()> {
        let rows = ensembles
            .iter()
            .flat_map(|e| e.records.iter().flat_map(move |r| r.samples.iter().map(move |s| SeriesRow::new(&e.label, s))));
        write_rows(&self.series_path(), self.format, rows)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_rows(path: &Path, format: Format, rows: impl Iterator<Item = SeriesRow>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(file);
            for row in rows {
                w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = file;
            for row in rows {
                serde_json::to_writer(&mut w, &row).map_err(|e| Error::Io(e.to_string()))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_rows(path: &Path, format: Format) -> Result<Vec<SeriesRow>> {
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let rows = match format {
        Format::Csv => csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<Vec<SeriesRow>, _>>()
            .map_err(|e| Error::Config(format!("bad series file: {e}")))?,
        Format::Jsonl => BufReader::new(file)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|l| {
                let l = l?;
                serde_json::from_str(&l).map_err(|e| Error::Config(format!("bad series line: {e}")))
            })
            .collect::<Result<Vec<SeriesRow>>>()?,
    };
    if let Some(r) = rows.iter().find(|r| r.schema_version != SCHEMA_VERSION) {
        return Err(Error::Config(format!("unsupported schema version {}", r.schema_version)));
    }
    Ok(rows)
}
