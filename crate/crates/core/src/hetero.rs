//! Label-heterogeneous client partitions.
//!
//! Three partition kinds: an IID shuffle-and-deal, the single-class setting
//! (`X^ℓ = e^ℓ`, needs `N = L`) and per-class symmetric Dirichlet proportions.
//! Real-valued Dirichlet proportions are turned into integer counts by
//! largest-remainder apportionment.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, ClientSet, Example, ProportionVector, MAX_CLIENTS};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    Iid,
    SingleClass,
    Dirichlet { alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    #[serde(flatten)]
    pub kind: PartitionKind,
    pub num_clients: usize,
}

impl PartitionSpec {
    pub fn new(kind: PartitionKind, num_clients: usize) -> Self {
        Self { kind, num_clients }
    }
}

// ---------------------------------------------------------------------------
// Dirichlet sampling
// ---------------------------------------------------------------------------

/// Draws from the symmetric Dirichlet `Dir_n(alpha)`.
///
/// Normalized gamma variates. For `alpha < 1` the gamma draw uses the
/// `Gamma(alpha + 1) · U^{1/alpha}` boost and the normalization is done in log
/// space, so very small shapes never collapse to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<ProportionVector<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha", format!("must be positive and finite, got {alpha}")));
    }
    if n == 0 {
        return Err(invalid("n", "need at least one category"));
    }
    let log_draws: Vec<f64> = if alpha >= 1.0 {
        let gamma = Gamma::new(alpha, 1.0).map_err(|e| invalid("alpha", e.to_string()))?;
        (0..n).map(|_| gamma.sample(rng).ln()).collect()
    } else {
        let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| invalid("alpha", e.to_string()))?;
        (0..n)
            .map(|_| {
                let y: f64 = gamma.sample(rng);
                // U in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                y.ln() + u.ln() / alpha
            })
            .collect()
    };
    let max = log_draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_draws.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    ProportionVector::new(weights.into_iter().map(|w| w / total).collect())
}

// ---------------------------------------------------------------------------
// Apportionment
// ---------------------------------------------------------------------------

/// Largest-remainder (Hamilton) apportionment of `total` units according to
/// real quotas `weights · total / Σ weights`. Ties go to the lower index.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    apportion_quotas(&quotas, total)
}

/// Largest-remainder rounding of explicit quotas to integers summing to
/// `total`. Each entry ends up at `floor(q)` or `floor(q) + 1`.
pub fn apportion_quotas(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.max(0.0).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut remaining = total.saturating_sub(assigned);
    let mut k = 0;
    while remaining > 0 && !order.is_empty() {
        counts[order[k % order.len()]] += 1;
        remaining -= 1;
        k += 1;
    }
    if assigned > total {
        // Only reachable with quotas summing above `total`; trim from the end.
        let mut excess = assigned - total;
        for &i in order.iter().rev() {
            while excess > 0 && counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// Assigns every example of a balanced dataset to exactly one owner.
///
/// The class count is `M / K`; labels must lie in `0..L` with exactly `K`
/// examples each. The returned assignment has no non-private data and every
/// holder set equals `{owner}`.
pub fn partition<T, R>(
    dataset: Vec<Example<T>>,
    spec: &PartitionSpec,
    per_class: usize,
    rng: &mut R,
) -> Result<Assignment<T>>
where
    R: Rng + ?Sized,
{
    let n = spec.num_clients;
    if n == 0 || n > MAX_CLIENTS {
        return Err(invalid("num_clients", format!("{n} not in 1..={MAX_CLIENTS}")));
    }
    if per_class == 0 {
        return Err(invalid("per_class", "K must be positive"));
    }
    let m = dataset.len();
    if !m.is_multiple_of(per_class) {
        return Err(Error::Dataset(format!("M = {m} is not a multiple of K = {per_class}")));
    }
    let num_classes = m / per_class;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (j, e) in dataset.iter().enumerate() {
        if e.label >= num_classes {
            return Err(Error::Dataset(format!(
                "label {} out of range for L = {num_classes}",
                e.label
            )));
        }
        by_class[e.label].push(j);
    }
    if let Some(l) = by_class.iter().position(|v| v.len() != per_class) {
        return Err(Error::Dataset(format!(
            "K·L ≠ M: class {l} has {} examples, expected {per_class}",
            by_class[l].len()
        )));
    }

    let mut owner_of = vec![0usize; m];
    match spec.kind {
        PartitionKind::Iid => {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(rng);
            let base = m / n;
            let extra = m % n;
            let mut pos = 0;
            for client in 0..n {
                let take = base + usize::from(client < extra);
                for &j in &order[pos..pos + take] {
                    owner_of[j] = client;
                }
                pos += take;
            }
        }
        PartitionKind::SingleClass => {
            if n != num_classes {
                return Err(invalid(
                    "num_clients",
                    format!("single-class partition needs N = L, got N = {n}, L = {num_classes}"),
                ));
            }
            for (j, e) in dataset.iter().enumerate() {
                owner_of[j] = e.label;
            }
        }
        PartitionKind::Dirichlet { alpha } => {
            for members in by_class.iter_mut() {
                let props = sample_dirichlet(alpha, n, rng)?;
                let counts = apportion(props.values(), per_class);
                members.shuffle(rng);
                let mut pos = 0;
                for (client, &c) in counts.iter().enumerate() {
                    for &j in &members[pos..pos + c] {
                        owner_of[j] = client;
                    }
                    pos += c;
                }
            }
        }
    }

    let examples = dataset
        .into_iter()
        .zip(&owner_of)
        .map(|(mut e, &o)| {
            e.holders = ClientSet::singleton(o);
            e.non_private = false;
            e
        })
        .collect();
    let a = Assignment {
        examples,
        num_clients: n,
        num_classes,
        per_class,
        owner_of,
    };
    a.validate()?;
    Ok(a)
}

/// Proportions of class `label` across clients, counting every copy a client
/// holds. Before sharing the denominator is `K`; after sharing it is `K + B`.
pub fn class_proportions<T, F: Real>(a: &Assignment<T>, label: usize) -> Result<ProportionVector<F>> {
    if label >= a.num_classes {
        return Err(invalid("label", format!("{label} ≥ L = {}", a.num_classes)));
    }
    ProportionVector::from_counts(&a.held_counts(label))
}

/// Initial proportions `X^ℓ` from original ownership, ignoring shared copies.
pub fn owner_proportions<T, F: Real>(a: &Assignment<T>, label: usize) -> Result<ProportionVector<F>> {
    if label >= a.num_classes {
        return Err(invalid("label", format!("{label} ≥ L = {}", a.num_classes)));
    }
    ProportionVector::from_counts(&a.owned_counts(label))
}
