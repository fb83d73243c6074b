use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hetero::{PartitionKind, PartitionSpec};
use crate::sharing::ShareConfig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SIM_SEED";

/// Where the training pool and test set come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Evaluate on a fixed random subset of the test split.
        #[serde(default)]
        test_subsample: Option<usize>,
    },
    Synthetic {
        dim: usize,
        separation: f64,
        #[serde(default = "default_pool")]
        pool_per_class: usize,
        #[serde(default = "default_pool")]
        test_per_class: usize,
    },
}

fn default_pool() -> usize {
    100
}

impl DatasetSpec {
    /// The four standard MNIST file names under `dir`.
    pub fn mnist_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetSpec::Mnist {
            train_images: dir.join("train-images-idx3-ubyte.gz"),
            train_labels: dir.join("train-labels-idx1-ubyte.gz"),
            test_images: dir.join("t10k-images-idx3-ubyte.gz"),
            test_labels: dir.join("t10k-labels-idx1-ubyte.gz"),
            test_subsample: None,
        }
    }
}

fn default_name() -> String {
    "run".into()
}
fn default_rounds() -> usize {
    50
}
fn default_trials() -> usize {
    100
}
fn default_eta() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.97
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Scenario label; also keys the participation stream.
    #[serde(default = "default_name")]
    pub name: String,
    pub num_clients: usize,
    pub num_classes: usize,
    pub per_class: usize,
    /// Optional consistency check against `num_classes · per_class`.
    #[serde(default)]
    pub num_examples: Option<usize>,
    pub partition: PartitionKind,
    #[serde(default)]
    pub share: ShareConfig,
    pub p: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_eta")]
    pub eta0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Reuse one participation stream across scenarios instead of one per
    /// scenario name.
    #[serde(default)]
    pub paired_participation: bool,
    /// Per-round pair sums and exact second moments.
    #[serde(default = "default_true")]
    pub diagnostics: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults: `N = 10`, `L = 10`, `K = 30`, 50 rounds, 100 trials.
    pub fn desk(dataset: DatasetSpec, partition: PartitionKind) -> Self {
        Self {
            name: default_name(),
            num_clients: 10,
            num_classes: 10,
            per_class: 30,
            num_examples: None,
            partition,
            share: ShareConfig::none(),
            p: 0.5,
            rounds: default_rounds(),
            trials: default_trials(),
            eta0: default_eta(),
            gamma: default_gamma(),
            seed: 0,
            dataset,
            paired_participation: false,
            diagnostics: true,
        }
    }

    pub fn num_train(&self) -> usize {
        self.num_classes * self.per_class
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec::new(self.partition, self.num_clients)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.num_examples {
            if m != self.num_train() {
                return Err(invalid("num_examples", format!("M = {m} but K·L = {}", self.num_train())));
            }
        }
        if self.num_classes < 2 {
            return Err(invalid("num_classes", "need at least two classes"));
        }
        if self.per_class == 0 {
            return Err(invalid("per_class", "must be positive"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(invalid("p", format!("{} outside [0, 1)", self.p)));
        }
        if !(self.eta0 > 0.0 && self.gamma > 0.0) {
            return Err(invalid("eta0/gamma", "must be positive"));
        }
        self.share.validate(self.num_clients)?;
        if let PartitionKind::SingleClass = self.partition {
            if self.num_clients != self.num_classes {
                return Err(invalid("partition", "single-class needs N = L"));
            }
        }
        if let DatasetSpec::Synthetic { dim, pool_per_class, .. } = &self.dataset {
            if *dim < self.num_classes {
                return Err(invalid("dataset.dim", "need D ≥ L"));
            }
            if *pool_per_class < self.per_class {
                return Err(invalid("dataset.pool_per_class", "smaller than K"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Applies [`SEED_ENV`] if it is set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid("SIM_SEED", format!("`{v}` is not an unsigned integer")))?;
        }
        Ok(self)
    }
}
