use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::trial::{run_trial, TrialData, TrialResult};
use crate::sharing::RunningStats;

/// Per-round mean and standard error of one metric across trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub scenario: String,
    pub trials: usize,
    pub rounds: usize,
    pub series: Vec<MetricSeries>,
}

impl AggregateResult {
    /// Reduces trials in index order, so the result does not depend on how
    /// they were scheduled.
    pub fn from_trials(scenario: &str, trials: &[TrialResult]) -> Result<Self> {
        let Some(first) = trials.first() else {
            return Ok(Self {
                scenario: scenario.to_string(),
                trials: 0,
                rounds: 0,
                series: Vec::new(),
            });
        };
        let rounds = first.rounds.len();
        let names: Vec<&'static str> = first.rounds[0].metrics().iter().map(|(k, _)| *k).collect();
        let mut stats = vec![vec![RunningStats::default(); rounds]; names.len()];
        for t in trials {
            if t.rounds.len() != rounds {
                return Err(Error::LengthMismatch {
                    expected: rounds,
                    actual: t.rounds.len(),
                });
            }
            for (r, rec) in t.rounds.iter().enumerate() {
                let metrics = rec.metrics();
                if metrics.len() != names.len() {
                    return Err(Error::LengthMismatch {
                        expected: names.len(),
                        actual: metrics.len(),
                    });
                }
                for (k, (_, v)) in metrics.into_iter().enumerate() {
                    stats[k][r].push(v);
                }
            }
        }
        let series = names
            .iter()
            .zip(stats)
            .map(|(name, per_round)| MetricSeries {
                metric: name.to_string(),
                mean: per_round.iter().map(RunningStats::mean).collect(),
                stderr: per_round
                    .iter()
                    .map(|s| if s.count() > 1 { s.stderr() } else { 0.0 })
                    .collect(),
            })
            .collect();
        Ok(Self {
            scenario: scenario.to_string(),
            trials: trials.len(),
            rounds,
            series,
        })
    }

    pub fn series(&self, metric: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == metric)
    }

    /// Mean of `metric` at 1-based `round`.
    pub fn mean_at(&self, metric: &str, round: usize) -> Option<f64> {
        self.series(metric)?.mean.get(round.checked_sub(1)?).copied()
    }
}

/// Runs every trial (in parallel) on already loaded data.
pub fn run_trials(cfg: &ExperimentConfig, data: &TrialData) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, data, t))
        .collect()
}

pub fn run_experiment_with(cfg: &ExperimentConfig, data: &TrialData) -> Result<(AggregateResult, Vec<TrialResult>)> {
    let trials = run_trials(cfg, data)?;
    Ok((AggregateResult::from_trials(&cfg.name, &trials)?, trials))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    let data = TrialData::load(cfg)?;
    Ok(run_experiment_with(cfg, &data)?.0)
}
