use fedcode::harness::experiment::run_experiment_with;
use fedcode::harness::trial::TrialStreams;
use fedcode::harness::{run_trial, AggregateResult, DatasetSpec, ExperimentConfig, TrialData};
use fedcode::hetero::PartitionKind;
use fedcode::ingest::balanced_subset;
use fedcode::{Example, Model, ShareConfig};

fn synthetic(separation: f64) -> DatasetSpec {
    DatasetSpec::Synthetic {
        dim: 12,
        separation,
        pool_per_class: 60,
        test_per_class: 50,
    }
}

fn small(partition: PartitionKind, separation: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(synthetic(separation), partition);
    cfg.num_clients = 5;
    cfg.num_classes = 5;
    cfg.per_class = 20;
    cfg.rounds = 15;
    cfg.trials = 4;
    cfg.seed = 3;
    cfg
}

#[test]
fn trial_is_deterministic() {
    let mut cfg = small(PartitionKind::Dirichlet { alpha: 0.3 }, 2.0);
    cfg.share = ShareConfig::new(0.4, 2);
    let data = TrialData::load(&cfg).unwrap();
    let a = run_trial(&cfg, &data, 1).unwrap();
    let b = run_trial(&cfg, &data, 1).unwrap();
    assert_eq!(a, b);
    let c = run_trial(&cfg, &data, 2).unwrap();
    assert_ne!(a.rounds, c.rounds);
}

#[test]
fn zero_rounds_rejected() {
    let mut cfg = small(PartitionKind::Iid, 2.0);
    let data = TrialData::load(&cfg).unwrap();
    cfg.rounds = 0;
    assert!(run_trial(&cfg, &data, 0).is_err());
}

#[test]
fn no_stragglers_no_sharing_is_full_batch_descent() {
    let mut cfg = small(PartitionKind::Iid, 2.0);
    cfg.p = 0.0;
    cfg.rounds = 10;
    let data = TrialData::load(&cfg).unwrap();
    let res = run_trial(&cfg, &data, 0).unwrap();

    let streams = TrialStreams::new(&cfg, 0);
    let examples: Vec<Example<f64>> = balanced_subset(&data.pool, cfg.per_class, &mut streams.dataset.rng()).unwrap();
    let mut model = Model::new(cfg.num_classes, data.pool.dim, cfg.eta0, cfg.gamma).unwrap();
    for rec in &res.rounds {
        let g = model.full_gradient(&examples).unwrap();
        assert!((rec.est_norm_sq - g.iter().map(|v| v * v).sum::<f64>()).abs() <= 1e-10 * rec.est_norm_sq.max(1.0));
        model.apply_update(&g, examples.len()).unwrap();
        let eval = model.evaluate(&data.test).unwrap();
        assert_eq!(rec.participants, cfg.num_clients);
        assert!((rec.accuracy - eval.accuracy).abs() <= 1e-10);
        assert!((rec.loss - eval.loss).abs() <= 1e-10);
    }
    let norm = model.weights().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((res.final_weight_norm - norm).abs() <= 1e-10);
}

#[test]
fn diagnostics_identity_and_variance_gap() {
    let mut cfg = small(PartitionKind::SingleClass, 2.0);
    cfg.share = ShareConfig::new(0.5, 2);
    let data = TrialData::load(&cfg).unwrap();
    let res = run_trial(&cfg, &data, 0).unwrap();
    for rec in &res.rounds {
        let d = rec.diagnostics.unwrap();
        let s = d.sums;
        assert!((s.type_one + s.type_two - s.full_norm_sq).abs() <= 1e-9 * s.full_norm_sq);
        assert!(d.second_moment >= s.full_norm_sq);
        if d.sign_condition {
            assert!(d.second_moment_unshared - d.second_moment >= d.bound - 1e-9 * d.second_moment);
        }
    }
    cfg.diagnostics = false;
    let plain = run_trial(&cfg, &data, 0).unwrap();
    assert!(plain.rounds.iter().all(|r| r.diagnostics.is_none()));
    assert_eq!(plain.final_accuracy, res.final_accuracy);
}

#[test]
fn single_trial_aggregate_equals_trial() {
    let mut cfg = small(PartitionKind::Iid, 2.0);
    cfg.trials = 1;
    let data = TrialData::load(&cfg).unwrap();
    let (agg, trials) = run_experiment_with(&cfg, &data).unwrap();
    assert_eq!(trials.len(), 1);
    for rec in &trials[0].rounds {
        for (metric, v) in rec.metrics() {
            assert_eq!(agg.mean_at(metric, rec.round), Some(v));
        }
    }
    assert!(agg.series("accuracy").unwrap().stderr.iter().all(|s| *s == 0.0));
}

#[test]
fn stderr_shrinks_with_more_trials() {
    let mut cfg = small(PartitionKind::Dirichlet { alpha: 0.3 }, 1.0);
    cfg.rounds = 5;
    cfg.p = 0.5;
    cfg.diagnostics = false;
    let data = TrialData::load(&cfg).unwrap();
    let mut se = |trials: usize| {
        cfg.trials = trials;
        let (agg, _) = run_experiment_with(&cfg, &data).unwrap();
        agg.series("accuracy").unwrap().stderr[4]
    };
    let ratio = se(160) / se(40);
    // 1/2 in expectation; wide band since the stderrs are themselves noisy
    assert!((0.3..0.75).contains(&ratio), "ratio {ratio}");
}

#[test]
fn accuracy_improves_on_separable_data() {
    let mut cfg = small(PartitionKind::Dirichlet { alpha: 0.3 }, 3.0);
    cfg.rounds = 30;
    cfg.eta0 = 1.0;
    let data = TrialData::load(&cfg).unwrap();
    let (agg, _) = run_experiment_with(&cfg, &data).unwrap();
    let acc = &agg.series("accuracy").unwrap().mean;
    let early: f64 = acc[..5].iter().sum::<f64>() / 5.0;
    let late: f64 = acc[25..].iter().sum::<f64>() / 5.0;
    assert!(late > early, "{early} -> {late}");
    assert!(late > 0.8);
}

fn train_accuracy(separation: f64, dim: usize, rounds: usize, eta0: f64) -> (f64, AggregateResult) {
    let mut cfg = ExperimentConfig::desk(
        DatasetSpec::Synthetic {
            dim,
            separation,
            pool_per_class: 500,
            test_per_class: 500,
        },
        PartitionKind::Iid,
    );
    cfg.num_clients = 4;
    cfg.num_classes = 4;
    cfg.per_class = 100;
    cfg.rounds = rounds;
    cfg.trials = 1;
    cfg.eta0 = eta0;
    cfg.gamma = 1.0;
    cfg.p = 0.0;
    cfg.diagnostics = false;
    let data = TrialData::load(&cfg).unwrap();
    let (agg, trials) = run_experiment_with(&cfg, &data).unwrap();
    (trials[0].final_accuracy, agg)
}

#[test]
fn indistinguishable_classes_stay_at_chance() {
    let (acc, _) = train_accuracy(0.0, 4, 100, 0.5);
    assert!((acc - 0.25).abs() < 0.06, "accuracy {acc}");
}

#[test]
fn well_separated_classes_are_learned() {
    let (acc, _) = train_accuracy(10.0, 4, 100, 0.5);
    assert!(acc > 0.995, "accuracy {acc}");
}
