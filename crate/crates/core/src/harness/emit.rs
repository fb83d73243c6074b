use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::AggregateResult;
use crate::harness::trial::TrialResult;

pub const CSV_FILE: &str = "results.csv";
pub const JSONL_FILE: &str = "results.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_HEADER: [&str; 6] = ["scenario", "trial_mean", "round", "metric", "value", "stderr"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    JsonLines,
}

/// One metric value. `trial_mean` rows carry a standard error; per-trial rows
/// leave it empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub trial_mean: bool,
    pub round: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Rows ordered by round, then metric.
pub fn aggregate_rows(result: &AggregateResult) -> Vec<Row> {
    let mut rows = Vec::with_capacity(result.rounds * result.series.len());
    for r in 0..result.rounds {
        for s in &result.series {
            rows.push(Row {
                scenario: result.scenario.clone(),
                trial_mean: true,
                round: r + 1,
                metric: s.metric.clone(),
                value: s.mean[r],
                stderr: Some(s.stderr[r]),
            });
        }
    }
    rows
}

pub fn trial_rows(scenario: &str, trial: &TrialResult) -> Vec<Row> {
    trial
        .rounds
        .iter()
        .flat_map(|rec| {
            rec.metrics().into_iter().map(move |(metric, value)| Row {
                scenario: format!("{scenario}/trial{}", trial.trial),
                trial_mean: false,
                round: rec.round,
                metric: metric.to_string(),
                value,
                stderr: None,
            })
        })
        .collect()
}

/// Provenance written next to the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub seed: u64,
    pub configs: Vec<ExperimentConfig>,
}

impl Manifest {
    pub fn new(configs: Vec<ExperimentConfig>) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: configs.first().map_or(0, |c| c.seed),
            configs,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_json_lines(path: &Path, rows: &[Row]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_json_lines(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Writes `rows` in each format plus the manifest into `dir` (created if
/// missing). Returns the written paths.
pub fn emit(rows: &[Row], manifest: &Manifest, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for f in formats {
        let path = match f {
            Format::Csv => {
                let p = dir.join(CSV_FILE);
                write_csv(&p, rows)?;
                p
            }
            Format::JsonLines => {
                let p = dir.join(JSONL_FILE);
                write_json_lines(&p, rows)?;
                p
            }
        };
        written.push(path);
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
