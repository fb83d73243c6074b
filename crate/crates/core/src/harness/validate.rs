use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coding::{
    sign_condition_holds, exact_mean_estimate, lambda_table, overlap_lambda, realized_lambdas, scalar_product_sums,
    second_moment_bruteforce, second_moment_with, variance_reduction_bound, variance_gap_exact, BoundVariant, GradientSet,
    PairType,
};
use crate::domain::{Assignment, ClientSet, Example};
use crate::error::Result;
use crate::hetero::{owner_proportions, partition, PartitionKind, PartitionSpec};
use crate::ingest::synthetic_blobs;
use crate::linalg::squared_distance_to_uniform;
use crate::model::SoftmaxRegression;
use crate::rng::RngStream;
use crate::sharing::{
    expected_distance_after_sharing, mark_non_private, mc_distance_after_sharing, share_randomized, ShareConfig,
};

/// One comparison in a [`ValidationReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, value: f64, reference: f64, tolerance: f64, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            value,
            reference,
            tolerance,
            passed,
            detail: detail.into(),
        });
    }
}

/// Sizes for [`validate_closed_forms`]. Every field has a default, so `{}` (or an
/// experiment config, whose extra fields are ignored) is a valid document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub seed: u64,
    pub num_clients: usize,
    pub per_class: usize,
    pub c_grid: Vec<f64>,
    pub d_grid: Vec<usize>,
    pub mc_trials: usize,
    pub instances: usize,
    pub p_grid: Vec<f64>,
    pub placements: usize,
    /// Added to every overlap coefficient in the second-moment check. Any
    /// nonzero value must make that check fail.
    pub lambda_perturbation: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_clients: 10,
            per_class: 30,
            c_grid: vec![0.2, 0.5, 1.0],
            d_grid: vec![1, 3, 9],
            mc_trials: 2000,
            instances: 50,
            p_grid: vec![0.1, 0.5, 0.9],
            placements: 100,
            lambda_perturbation: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Instance generators
// ---------------------------------------------------------------------------

/// Single-class assignment (client `ℓ` owns class `ℓ`) of feature-less
/// examples.
pub fn single_class_assignment(num_clients: usize, per_class: usize) -> Result<Assignment<f64>> {
    let examples: Vec<Example<f64>> = (0..num_clients * per_class)
        .map(|j| Example::new(j, Vec::new(), j / per_class))
        .collect();
    let spec = PartitionSpec::new(PartitionKind::SingleClass, num_clients);
    // the single-class partition draws nothing
    partition(examples, &spec, per_class, &mut RngStream::new(0, 0).rng())
}

/// Random gradients on random holder sets; `non_private` marks replicated
/// examples.
pub fn random_gradient_set<R: Rng + ?Sized>(
    num_clients: usize,
    num_examples: usize,
    dim: usize,
    num_classes: usize,
    rng: &mut R,
) -> Result<GradientSet<f64>> {
    let mut grads = Vec::with_capacity(num_examples);
    let mut holders = Vec::with_capacity(num_examples);
    let mut labels = Vec::with_capacity(num_examples);
    let mut non_private = Vec::with_capacity(num_examples);
    for _ in 0..num_examples {
        grads.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        let dj = rng.random_range(1..=num_clients);
        holders.push(index::sample(rng, num_clients, dj).into_iter().collect::<ClientSet>());
        labels.push(rng.random_range(0..num_classes));
        non_private.push(dj > 1);
    }
    GradientSet::new(grads, labels, non_private, holders, num_clients, num_classes)
}

/// Softmax-regression gradients of a single-class instance before and after
/// sharing, at a small random model.
#[derive(Clone, Debug)]
pub struct SharedInstance {
    pub before: GradientSet<f64>,
    pub after: GradientSet<f64>,
}

pub fn softmax_shared_instance<R: Rng + ?Sized>(
    num_clients: usize,
    per_class: usize,
    share: &ShareConfig,
    dim: usize,
    rng: &mut R,
) -> Result<SharedInstance> {
    let raw = synthetic_blobs(num_clients, per_class, dim, 1.0, rng)?;
    let spec = PartitionSpec::new(PartitionKind::SingleClass, num_clients);
    let a = partition(raw.to_examples::<f64>(), &spec, per_class, rng)?;
    let a = mark_non_private(a, share.c, rng)?;
    let before_holders: Vec<ClientSet> = a.examples.iter().map(|e| e.holders).collect();
    let a = share_randomized(a, share, rng)?.assignment;
    let w: Vec<f64> = (0..num_clients * (dim + 1)).map(|_| rng.random_range(-0.1..0.1)).collect();
    let model = SoftmaxRegression::new(num_clients, dim, 0.1, 1.0)?.with_weights(w)?;
    let grads = a
        .examples
        .iter()
        .map(|e| model.example_gradient(e))
        .collect::<Result<Vec<_>>>()?;
    let after = GradientSet::from_assignment(&a, grads)?;
    let before = after.with_holders(before_holders)?;
    Ok(SharedInstance { before, after })
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

fn check_heterogeneity(cfg: &ValidationConfig, report: &mut ValidationReport) -> Result<()> {
    let base = RngStream::new(cfg.seed, 0).derive_named("heterogeneity");
    let a0 = single_class_assignment(cfg.num_clients, cfg.per_class)?;
    let x: crate::domain::ProportionVector<f64> = owner_proportions(&a0, 0)?;
    let dist0 = squared_distance_to_uniform(&x);
    let mut d_grid = cfg.d_grid.clone();
    if !d_grid.contains(&0) {
        d_grid.insert(0, 0);
    }
    for &c in &cfg.c_grid {
        for &d in d_grid.iter().filter(|&&d| d < cfg.num_clients) {
            let stream = base.derive((c * 1e6) as u64).derive(d as u64);
            let mut rng = stream.rng();
            let a = mark_non_private(a0.clone(), c, &mut rng)?;
            let share = ShareConfig::new(c, d);
            let mc = mc_distance_after_sharing(&a, &share, 0, cfg.mc_trials.max(2), &mut rng)?;
            let closed: f64 = expected_distance_after_sharing(dist0, cfg.num_clients, cfg.per_class, c, d)?;
            let tol = 4.0 * mc.stderr + 1e-12;
            report.push(
                format!("heterogeneity_after_sharing c={c} d={d}"),
                mc.mean,
                closed,
                tol,
                (mc.mean - closed).abs() <= tol,
                format!("{} sharing draws, stderr {:.3e}", mc.samples, mc.stderr),
            );
        }
    }
    Ok(())
}

fn check_unbiased(cfg: &ValidationConfig, report: &mut ValidationReport) -> Result<()> {
    let mut rng = RngStream::new(cfg.seed, 0).derive_named("unbiased").rng();
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.instances {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=40);
        let g = random_gradient_set(n, m, 3, 3, &mut rng)?;
        let p = cfg.p_grid[rng.random_range(0..cfg.p_grid.len())];
        let mean = exact_mean_estimate(&g, p)?;
        for (a, b) in mean.iter().zip(&g.full_gradient()) {
            worst = worst.max((a - b).abs());
        }
    }
    report.push(
        "estimator_unbiased",
        worst,
        0.0,
        1e-10,
        worst <= 1e-10,
        format!("{} instances, max component deviation", cfg.instances),
    );
    Ok(())
}

fn check_second_moment(cfg: &ValidationConfig, report: &mut ValidationReport) -> Result<()> {
    let mut rng = RngStream::new(cfg.seed, 0).derive_named("second_moment").rng();
    let delta = cfg.lambda_perturbation;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..cfg.instances {
        let n = rng.random_range(2..=10);
        let m = rng.random_range(2..=40);
        let g = random_gradient_set(n, m, 3, 3, &mut rng)?;
        for &p in &cfg.p_grid {
            let closed = second_moment_with(&g, |h1, h2| overlap_lambda(h1, h2, p) + delta);
            let brute = second_moment_bruteforce(&g, p)?;
            worst = worst.max((closed - brute).abs() / brute.abs().max(f64::MIN_POSITIVE));
            count += 1;
        }
    }
    report.push(
        "second_moment_closed_form",
        worst,
        0.0,
        1e-9,
        worst <= 1e-9,
        format!("{count} (instance, p) pairs, max relative error; λ perturbation {delta}"),
    );
    Ok(())
}

/// Pairwise coefficients against the table, plus class-average orderings.
pub fn lambda_conformance(a: &Assignment<f64>, d: usize, p: f64) -> Result<(bool, String)> {
    let table = lambda_table(d, p)?;
    let tol = 1e-12;
    let stats = realized_lambdas(a, p)?;
    let get = |t: PairType| stats.iter().find(|(k, _)| *k == t).map(|(_, s)| *s);
    let mut problems = Vec::new();
    for (t, s) in &stats {
        let ok = match t {
            PairType::SamePp => (s.min - table.same_pp).abs() <= tol && (s.max - table.same_pp).abs() <= tol,
            PairType::DiffPp => (s.min - table.diff_pp).abs() <= tol && (s.max - table.diff_pp).abs() <= tol,
            PairType::SameNpP => (s.min - table.same_npp).abs() <= tol && (s.max - table.same_npp).abs() <= tol,
            PairType::DiffNpP => table.diff_npp.contains(s.min, tol) && table.diff_npp.contains(s.max, tol),
            PairType::SameNpNp => table.same_npnp.contains(s.min, tol) && table.same_npnp.contains(s.max, tol),
            PairType::DiffNpNp => table.diff_npnp.contains(s.min, tol) && table.diff_npnp.contains(s.max, tol),
        };
        if !ok {
            problems.push(format!("{} in [{}, {}]", t.name(), s.min, s.max));
        }
    }
    for (lo, hi) in [
        (PairType::DiffNpP, PairType::SameNpP),
        (PairType::DiffNpNp, PairType::SameNpNp),
    ] {
        if let (Some(l), Some(h)) = (get(lo), get(hi)) {
            if l.mean > h.mean + tol {
                problems.push(format!("mean {} = {} > mean {} = {}", lo.name(), l.mean, hi.name(), h.mean));
            }
        }
    }
    Ok((problems.is_empty(), problems.join("; ")))
}

fn check_lambda(cfg: &ValidationConfig, report: &mut ValidationReport) -> Result<()> {
    let mut rng = RngStream::new(cfg.seed, 0).derive_named("lambda").rng();
    let n = cfg.num_clients;
    let a0 = single_class_assignment(n, cfg.per_class.min(10))?;
    let mut failures = 0usize;
    let mut first = String::new();
    for _ in 0..cfg.placements {
        let d = rng.random_range(1..n.max(2));
        let c = [0.2, 0.5, 1.0][rng.random_range(0..3)];
        let p = cfg.p_grid[rng.random_range(0..cfg.p_grid.len())];
        let a = mark_non_private(a0.clone(), c, &mut rng)?;
        let a = share_randomized(a, &ShareConfig::new(c, d.min(n - 1)), &mut rng)?.assignment;
        let (ok, why) = lambda_conformance(&a, d.min(n - 1), p)?;
        if !ok {
            failures += 1;
            if first.is_empty() {
                first = format!("d={d} c={c} p={p}: {why}");
            }
        }
    }
    report.push(
        "lambda_table_conformance",
        failures as f64,
        0.0,
        0.0,
        failures == 0,
        if first.is_empty() {
            format!("{} placements", cfg.placements)
        } else {
            first
        },
    );
    Ok(())
}

fn check_bound(cfg: &ValidationConfig, report: &mut ValidationReport) -> Result<()> {
    let mut rng = RngStream::new(cfg.seed, 0).derive_named("bound").rng();
    let (mut held, mut violated, mut skipped) = (0usize, 0usize, 0usize);
    let mut worst_slack = f64::INFINITY;
    for k in 0..cfg.instances {
        let c = [0.2, 0.5][k % 2];
        let d = [2, 3, 5][k % 3].min(cfg.num_clients - 1);
        let p = [0.3, 0.5, 0.7][k % 3];
        let inst = softmax_shared_instance(cfg.num_clients, 10, &ShareConfig::new(c, d), cfg.num_clients, &mut rng)?;
        let sums = scalar_product_sums(&inst.after);
        if !sign_condition_holds(&sums) {
            skipped += 1;
            continue;
        }
        held += 1;
        let gap = variance_gap_exact(&inst.before, &inst.after, p)?;
        let bound = variance_reduction_bound(&sums, d, p, BoundVariant::Standard)?;
        let slack = gap - bound;
        worst_slack = worst_slack.min(slack);
        if slack < -1e-9 * gap.abs().max(1.0) {
            violated += 1;
        }
    }
    report.push(
        "variance_reduction_bound",
        violated as f64,
        0.0,
        0.0,
        violated == 0,
        format!("{held} instances satisfy the sign condition, {skipped} do not; min(gap − bound) = {worst_slack:.6e}"),
    );
    let s = scalar_product_sums(&random_gradient_set(3, 6, 2, 2, &mut rng)?);
    let b = variance_reduction_bound(&s, 1, 0.5, BoundVariant::Standard)?;
    report.push("bound_vanishes_for_d1", b, 0.0, 0.0, b == 0.0, "d = 1");
    Ok(())
}

fn check_gradients(cfg: &ValidationConfig, report: &mut ValidationReport) -> Result<()> {
    let mut rng = RngStream::new(cfg.seed, 0).derive_named("gradients").rng();
    let (worst, _) = finite_difference_error(20, 1e-5, &mut rng)?;
    report.push(
        "gradient_finite_difference",
        worst,
        0.0,
        1e-6,
        worst <= 1e-6,
        "20 random cases, max relative error",
    );
    Ok(())
}

/// Largest relative error between softmax-regression gradients and central
/// differences over `cases` random (model, example) pairs, and the number of
/// components compared.
pub fn finite_difference_error<R: Rng + ?Sized>(cases: usize, h: f64, rng: &mut R) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..cases {
        let l = rng.random_range(2..=5);
        let dim = rng.random_range(1..=6);
        let w: Vec<f64> = (0..l * (dim + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = SoftmaxRegression::new(l, dim, 0.1, 1.0)?.with_weights(w.clone())?;
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = rng.random_range(0..l);
        let g = model.example_gradient(&Example::new(0, x.clone(), label))?;
        for k in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let lp = model.clone().with_weights(wp)?.example_loss(&x, label)?;
            let lm = model.clone().with_weights(wm)?.example_loss(&x, label)?;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1e-3));
            compared += 1;
        }
    }
    Ok((worst, compared))
}

/// Runs every closed-form-versus-oracle comparison. Failures are report
/// entries, not errors.
pub fn validate_closed_forms(cfg: &ValidationConfig) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    check_heterogeneity(cfg, &mut report)?;
    check_unbiased(cfg, &mut report)?;
    check_second_moment(cfg, &mut report)?;
    check_lambda(cfg, &mut report)?;
    check_bound(cfg, &mut report)?;
    check_gradients(cfg, &mut report)?;
    Ok(report)
}
