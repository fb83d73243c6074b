use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coding::{
    aggregate_estimate, sign_condition_holds, sample_participation, variance_reduction_bound, weight, BoundVariant, GramView,
    SumsReport,
};
use crate::domain::{ClientSet, Example};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetSpec, ExperimentConfig};
use crate::hetero::partition;
use crate::ingest::{balanced_subset, load_idx, synthetic_blobs, RawDataset};
use crate::linalg::{dot_unchecked, squared_norm};
use crate::model::SoftmaxRegression;
use crate::rng::RngStream;
use crate::sharing::{mark_non_private, share_randomized};

/// Training pool and test examples, loaded once per experiment.
#[derive(Clone, Debug)]
pub struct TrialData {
    pub pool: RawDataset,
    pub test: Vec<Example<f64>>,
}

impl TrialData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let base = RngStream::new(cfg.seed, 0);
        let (pool, test) = match &cfg.dataset {
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                test_subsample,
            } => {
                let pool = load_idx(train_images, train_labels)?;
                let mut test = load_idx(test_images, test_labels)?;
                if let Some(n) = test_subsample {
                    test = test.subsample(*n, &mut base.derive_named("test").rng());
                }
                (pool, test)
            }
            DatasetSpec::Synthetic {
                dim,
                separation,
                pool_per_class,
                test_per_class,
            } => {
                let mut rng = base.derive_named("pool").rng();
                let pool = synthetic_blobs(cfg.num_classes, *pool_per_class, *dim, *separation, &mut rng)?;
                let mut rng = base.derive_named("test").rng();
                let test = synthetic_blobs(cfg.num_classes, *test_per_class, *dim, *separation, &mut rng)?;
                (pool, test)
            }
        };
        if pool.num_classes != cfg.num_classes {
            return Err(Error::Dataset(format!(
                "training data has {} classes, config expects {}",
                pool.num_classes, cfg.num_classes
            )));
        }
        Ok(Self {
            test: test.to_examples(),
            pool,
        })
    }
}

/// Pair sums, exact second moments and the variance-reduction bound for the
/// gradient of one round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    /// `full_norm_sq` is `‖g‖²` of the directly summed gradient.
    pub sums: SumsReport<f64>,
    /// `E‖ĝ‖²` under the shared placement.
    pub second_moment: f64,
    /// `E‖ĝ‖²` had nothing been shared.
    pub second_moment_unshared: f64,
    pub bound: f64,
    pub sign_condition: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based; metrics describe the model after this round's update, the
    /// gradient statistics the gradient used in it.
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    /// Realized `‖ĝ‖²`.
    pub est_norm_sq: f64,
    pub participants: usize,
    pub diagnostics: Option<RoundDiagnostics>,
}

/// Names of the per-round metrics, in emission order.
pub const BASE_METRICS: [&str; 4] = ["accuracy", "loss", "est_norm_sq", "participants"];
pub const DIAGNOSTIC_METRICS: [&str; 14] = [
    "full_norm_sq",
    "second_moment",
    "second_moment_unshared",
    "variance_gap",
    "bound",
    "sign_condition",
    "type_one",
    "type_two",
    "same_pp",
    "diff_pp",
    "same_npp",
    "diff_npp",
    "same_npnp",
    "diff_npnp",
];

impl RoundRecord {
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("accuracy", self.accuracy),
            ("loss", self.loss),
            ("est_norm_sq", self.est_norm_sq),
            ("participants", self.participants as f64),
        ];
        if let Some(d) = &self.diagnostics {
            let s = &d.sums;
            out.extend([
                ("full_norm_sq", s.full_norm_sq),
                ("second_moment", d.second_moment),
                ("second_moment_unshared", d.second_moment_unshared),
                ("variance_gap", d.second_moment_unshared - d.second_moment),
                ("bound", d.bound),
                ("sign_condition", if d.sign_condition { 1.0 } else { 0.0 }),
                ("type_one", s.type_one),
                ("type_two", s.type_two),
                ("same_pp", s.same_pp),
                ("diff_pp", s.diff_pp),
                ("same_npp", s.same_npp),
                ("diff_npp", s.diff_npp),
                ("same_npnp", s.same_npnp),
                ("diff_npnp", s.diff_npnp),
            ]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub rounds: Vec<RoundRecord>,
    pub non_private: usize,
    pub shared_copies: usize,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub final_weight_norm: f64,
}

/// Streams used by one trial. The data, partition, marking and sharing draws
/// depend only on `(seed, trial)`, so scenarios run with one seed share them.
#[derive(Clone, Copy, Debug)]
pub struct TrialStreams {
    pub dataset: RngStream,
    pub partition: RngStream,
    pub privacy: RngStream,
    pub sharing: RngStream,
    pub participation: RngStream,
}

impl TrialStreams {
    pub fn new(cfg: &ExperimentConfig, trial: usize) -> Self {
        let base = RngStream::new(cfg.seed, 0);
        let t = trial as u64;
        let mut participation = base.derive_named("participation").derive(t);
        if !cfg.paired_participation {
            participation = participation.derive_named(&cfg.name);
        }
        Self {
            dataset: base.derive_named("dataset").derive(t),
            partition: base.derive_named("partition").derive(t),
            privacy: base.derive_named("privacy").derive(t),
            sharing: base.derive_named("sharing").derive(t),
            participation,
        }
    }
}

/// One federated run: sample data, partition, mark and share once, then
/// train with straggling clients for `cfg.rounds` rounds.
pub fn run_trial(cfg: &ExperimentConfig, data: &TrialData, trial: usize) -> Result<TrialResult> {
    cfg.validate()?;
    let streams = TrialStreams::new(cfg, trial);

    let examples: Vec<Example<f64>> = balanced_subset(&data.pool, cfg.per_class, &mut streams.dataset.rng())?;
    let a = partition(examples, &cfg.partition_spec(), cfg.per_class, &mut streams.partition.rng())?;
    let a = mark_non_private(a, cfg.share.c, &mut streams.privacy.rng())?;
    let unshared: Vec<ClientSet> = a.examples.iter().map(|e| e.holders).collect();
    let shared = share_randomized(a, &cfg.share, &mut streams.sharing.rng())?;
    let a = shared.assignment;

    let n = cfg.num_clients;
    let m = a.num_examples();
    let l = cfg.num_classes;
    let dim = data.pool.dim;
    let holders: Vec<ClientSet> = a.examples.iter().map(|e| e.holders).collect();
    let held: Vec<Vec<usize>> = (0..n).map(|i| a.held_by(i).collect()).collect();
    let weights = holders
        .iter()
        .map(|h| weight(h.len(), cfg.p))
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<Arc<[f64]>> = a.examples.iter().map(|e| e.features.clone()).collect();
    let labels: Vec<usize> = a.examples.iter().map(|e| e.label).collect();
    let non_private: Vec<bool> = a.examples.iter().map(|e| e.non_private).collect();

    // ⟨[x1; 1], [x2; 1]⟩, constant over rounds.
    let feature_gram: Vec<f64> = if cfg.diagnostics {
        let mut g = vec![0.0; m * m];
        for j1 in 0..m {
            for j2 in j1..m {
                let v = dot_unchecked(&xs[j1], &xs[j2]) + 1.0;
                g[j1 * m + j2] = v;
                g[j2 * m + j1] = v;
            }
        }
        g
    } else {
        Vec::new()
    };

    let mut model = SoftmaxRegression::new(l, dim, cfg.eta0, cfg.gamma)?;
    let params = model.num_params();
    let mut prng = streams.participation.rng();
    let mut residuals = vec![0.0; m * l];
    let mut gram = vec![0.0; if cfg.diagnostics { m * m } else { 0 }];
    let mut records = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        for (j, r) in residuals.chunks_exact_mut(l).enumerate() {
            model.residual_into(&xs[j], labels[j], r);
        }
        let residual = |j: usize| &residuals[j * l..(j + 1) * l];

        let part = sample_participation(n, cfg.p, &mut prng)?;
        let partials: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut f = vec![0.0; params];
                if part.flags[i] {
                    for &j in &held[i] {
                        model.accumulate_outer(residual(j), &xs[j], weights[j], &mut f);
                    }
                }
                f
            })
            .collect();
        let est = aggregate_estimate(&partials, &part)?;

        let diagnostics = if cfg.diagnostics {
            for j1 in 0..m {
                for j2 in j1..m {
                    let v = dot_unchecked(residual(j1), residual(j2)) * feature_gram[j1 * m + j2];
                    gram[j1 * m + j2] = v;
                    gram[j2 * m + j1] = v;
                }
            }
            let view = GramView::new(&gram, &labels, &non_private, l)?;
            let mut sums = view.sums();
            let mut full = vec![0.0; params];
            for j in 0..m {
                model.accumulate_outer(residual(j), &xs[j], 1.0, &mut full);
            }
            sums.full_norm_sq = squared_norm(&full);
            Some(RoundDiagnostics {
                sums,
                second_moment: view.second_moment(&holders, cfg.p)?,
                second_moment_unshared: view.second_moment(&unshared, cfg.p)?,
                bound: variance_reduction_bound(&sums, cfg.share.d, cfg.p, BoundVariant::Standard)?,
                sign_condition: sign_condition_holds(&sums),
            })
        } else {
            None
        };

        model.apply_update(&est.value, m)?;
        let eval = model.evaluate(&data.test)?;
        records.push(RoundRecord {
            round,
            accuracy: eval.accuracy,
            loss: eval.loss,
            est_norm_sq: squared_norm(&est.value),
            participants: part.count(),
            diagnostics,
        });
    }

    let last = records.last().expect("rounds ≥ 1");
    Ok(TrialResult {
        trial,
        non_private: a.non_private_count(),
        shared_copies: shared.total_shared,
        final_accuracy: last.accuracy,
        final_loss: last.loss,
        final_weight_norm: squared_norm(model.weights()).sqrt(),
        rounds: records,
    })
}
