//! Non-private marking, randomized offline data sharing, and the closed forms
//! for the expected heterogeneity after sharing.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, ClientSet, ProportionVector};
use crate::error::{invalid, Error, Result};
use crate::hetero::{apportion_quotas, class_proportions};
use crate::linalg::squared_distance_to_uniform;
use crate::scalar::Scalar;

/// How recipients are chosen during sharing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareMode {
    /// Every non-private example independently picks a uniform `d`-subset of
    /// the clients other than its owner.
    #[default]
    PerExample,
    /// Every client picks one `d`-subset of recipients for all its non-private
    /// data. Kept for comparison only; the closed forms assume `PerExample`.
    PerClient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareConfig {
    /// Fraction of each client's data that is non-private.
    pub c: f64,
    /// Replication factor: extra clients receiving each non-private example.
    pub d: usize,
    #[serde(default)]
    pub mode: ShareMode,
}

impl Default for ShareConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl ShareConfig {
    pub fn new(c: f64, d: usize) -> Self {
        Self {
            c,
            d,
            mode: ShareMode::PerExample,
        }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0)
    }

    pub fn is_active(&self) -> bool {
        self.c > 0.0 && self.d > 0
    }

    pub fn validate(&self, num_clients: usize) -> Result<()> {
        check_c(self.c)?;
        if self.d >= num_clients.max(1) {
            return Err(invalid(
                "d",
                format!("replication factor {} must be < N = {num_clients}", self.d),
            ));
        }
        Ok(())
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(invalid("c", format!("{c} outside [0, 1]")));
    }
    Ok(())
}

/// Result of one sharing pass.
#[derive(Clone, Debug)]
pub struct ShareOutcome<T> {
    pub assignment: Assignment<T>,
    /// `S_i`: copies received by client `i`, all classes.
    pub received: Vec<usize>,
    /// `B = Σ S_i`.
    pub total_shared: usize,
    /// Offline traffic if every copy is relayed through the server.
    pub bytes_relayed: usize,
}

impl<T> ShareOutcome<T> {
    /// `S_i` restricted to class `label`.
    pub fn received_in_class(&self, label: usize) -> Vec<usize> {
        let a = &self.assignment;
        let mut s = vec![0; a.num_clients];
        for (e, &o) in a.examples.iter().zip(&a.owner_of) {
            if e.label == label {
                for i in e.holders.iter().filter(|&i| i != o) {
                    s[i] += 1;
                }
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Marking and sharing
// ---------------------------------------------------------------------------

/// Flags a `c` fraction of each client's data as non-private.
///
/// Per client the class quotas `c · n_iℓ` are rounded by largest remainder so
/// that they total `round(c · |D_i|)`; within a class the flagged examples are
/// a uniform random subset.
pub fn mark_non_private<T, R: Rng + ?Sized>(
    mut a: Assignment<T>,
    c: f64,
    rng: &mut R,
) -> Result<Assignment<T>> {
    check_c(c)?;
    if a.examples.iter().any(|e| e.holders.len() > 1) {
        return Err(invalid("assignment", "already shared; mark before sharing"));
    }
    for e in a.examples.iter_mut() {
        e.non_private = false;
    }
    for client in 0..a.num_clients {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); a.num_classes];
        for (j, e) in a.examples.iter().enumerate() {
            if a.owner_of[j] == client {
                members[e.label].push(j);
            }
        }
        let local: usize = members.iter().map(Vec::len).sum();
        let quotas: Vec<f64> = members.iter().map(|m| c * m.len() as f64).collect();
        let target = (c * local as f64).round() as usize;
        let counts = apportion_quotas(&quotas, target);
        for (m, &q) in members.iter().zip(&counts) {
            let q = q.min(m.len());
            for pick in index::sample(rng, m.len(), q).into_iter() {
                a.examples[m[pick]].non_private = true;
            }
        }
    }
    Ok(a)
}

/// Replicates non-private examples to `d` other clients.
pub fn share_randomized<T, R: Rng + ?Sized>(
    mut a: Assignment<T>,
    cfg: &ShareConfig,
    rng: &mut R,
) -> Result<ShareOutcome<T>> {
    let n = a.num_clients;
    cfg.validate(n)?;
    for (j, e) in a.examples.iter().enumerate() {
        if e.holders != ClientSet::singleton(a.owner_of[j]) {
            return Err(invalid("assignment", format!("example {j} already replicated")));
        }
    }
    let d = cfg.d;
    let mut received = vec![0usize; n];
    let mut bytes = 0usize;
    let elem = std::mem::size_of::<T>();

    // Maps a draw from 0..N−1 onto the clients other than `owner`.
    let skip_owner = |k: usize, owner: usize| if k >= owner { k + 1 } else { k };

    match cfg.mode {
        ShareMode::PerExample => {
            if d > 0 {
                for j in 0..a.examples.len() {
                    if !a.examples[j].non_private {
                        continue;
                    }
                    let owner = a.owner_of[j];
                    for k in index::sample(rng, n - 1, d).into_iter() {
                        let to = skip_owner(k, owner);
                        a.examples[j].holders.insert(to);
                        received[to] += 1;
                        bytes += a.examples[j].features.len() * elem;
                    }
                }
            }
        }
        ShareMode::PerClient => {
            if d > 0 {
                for owner in 0..n {
                    let recipients: Vec<usize> = index::sample(rng, n - 1, d)
                        .into_iter()
                        .map(|k| skip_owner(k, owner))
                        .collect();
                    for j in 0..a.examples.len() {
                        if a.owner_of[j] != owner || !a.examples[j].non_private {
                            continue;
                        }
                        for &to in &recipients {
                            a.examples[j].holders.insert(to);
                            received[to] += 1;
                            bytes += a.examples[j].features.len() * elem;
                        }
                    }
                }
            }
        }
    }
    let total_shared = received.iter().sum();
    Ok(ShareOutcome {
        assignment: a,
        received,
        total_shared,
        bytes_relayed: bytes,
    })
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

fn check_closed_form_args<T: Scalar>(n: usize, k: usize, c: T, d: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid("num_clients", "need N ≥ 2"));
    }
    if k == 0 {
        return Err(invalid("per_class", "need K ≥ 1"));
    }
    if c < T::zero() || c > T::one() {
        return Err(invalid("c", format!("{c:?} outside [0, 1]")));
    }
    if d >= n {
        return Err(invalid("d", format!("{d} must be < N = {n}")));
    }
    Ok(())
}

/// Coefficient `(N−1−dc)² / ((1+dc)²(N−1)²)` multiplying the initial distance.
pub fn distance_contraction<T: Scalar>(n: usize, c: T, d: usize) -> T {
    let dc = T::from_count(d) * c;
    let m = T::from_count(n - 1);
    let one_dc = T::one() + dc;
    let num = m - dc;
    (num * num) / (one_dc * one_dc * m * m)
}

/// Expected `‖Y − Θ*‖²` after randomized sharing, given `dist0 = ‖X − Θ*‖²`:
///
/// `dc(N−1−d) / ((1+dc)²(N−1)K) + (N−1−dc)² / ((1+dc)²(N−1)²) · dist0`.
pub fn expected_distance_after_sharing<T: Scalar>(
    dist0: T,
    n: usize,
    k: usize,
    c: T,
    d: usize,
) -> Result<T> {
    check_closed_form_args(n, k, c, d)?;
    let dc = T::from_count(d) * c;
    let m = T::from_count(n - 1);
    let one_dc = T::one() + dc;
    let offset = dc * T::from_count(n - 1 - d) / (one_dc * one_dc * m * T::from_count(k));
    Ok(offset + distance_contraction(n, c, d) * dist0)
}

/// Conditional first and second moments of a single coordinate `Y_i` given
/// `X_i`, with `S_i ~ Binomial(c(1−X_i)K, d/(N−1))` and `B = dcK`.
pub fn moment_identities<T: Scalar>(x_i: T, n: usize, k: usize, c: T, d: usize) -> Result<(T, T)> {
    check_closed_form_args(n, k, c, d)?;
    if x_i < T::zero() || x_i > T::one() {
        return Err(invalid("x_i", format!("{x_i:?} outside [0, 1]")));
    }
    let one = T::one();
    let two = T::from_count(2);
    let dc = T::from_count(d) * c;
    let m = T::from_count(n - 1);
    let kk = T::from_count(k);
    let q = T::from_count(d) / m;
    let rest = one - x_i;
    let one_dc = one + dc;

    let e1 = (x_i + dc * rest / m) / one_dc;
    let e2 = (x_i * x_i
        + two * dc / m * rest * x_i
        + dc / (m * kk) * (one - q) * rest
        + dc * dc / (m * m) * rest * rest)
        / (one_dc * one_dc);
    Ok((e1, e2))
}

/// The three bracketed coefficients `(T1, T2, T3)` from the expansion of
/// `E‖Y − Θ*‖²`, each evaluated from its own expression.
pub fn expansion_terms<T: Scalar>(n: usize, c: T, d: usize) -> [T; 3] {
    let one = T::one();
    let two = T::from_count(2);
    let dc = T::from_count(d) * c;
    let nn = T::from_count(n);
    let m = T::from_count(n - 1);
    let t1 = one - two * dc / m + dc * dc / (m * m);
    let t2 = one + dc + dc * dc * nn / (m * m) - dc * nn / m - dc * (one + dc) / m;
    let t3 = (one + dc) * (one + dc) - two * (one + dc) * dc * nn / m + dc * dc * nn * nn / (m * m);
    [t1, t2, t3]
}

/// Common value `(N−1−dc)² / (N−1)²` of the three expansion terms.
pub fn expansion_terms_closed<T: Scalar>(n: usize, c: T, d: usize) -> T {
    let dc = T::from_count(d) * c;
    let m = T::from_count(n - 1);
    (m - dc) * (m - dc) / (m * m)
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Running mean/variance (Welford). Equal inputs give that exact mean and a
/// zero variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            mean: self.mean(),
            stderr: self.stderr(),
            samples: self.count,
        }
    }
}

/// Monte-Carlo estimate of `E‖Y^ℓ − Θ*‖²` over independent sharing draws of
/// `a` (already marked).
pub fn mc_distance_after_sharing<T: Clone, R: Rng + ?Sized>(
    a: &Assignment<T>,
    cfg: &ShareConfig,
    label: usize,
    trials: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if trials < 2 {
        return Err(invalid("trials", "need at least 2"));
    }
    if label >= a.num_classes {
        return Err(Error::InvalidParameter {
            name: "label",
            reason: format!("{label} ≥ L = {}", a.num_classes),
        });
    }
    let mut stats = RunningStats::default();
    for _ in 0..trials {
        let out = share_randomized(a.clone(), cfg, rng)?;
        let y: ProportionVector<f64> = class_proportions(&out.assignment, label)?;
        stats.push(squared_distance_to_uniform(&y));
    }
    Ok(stats.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Example;
    use crate::hetero::{partition, PartitionKind, PartitionSpec};
    use crate::rng::RngStream;
    use num_rational::Ratio;
    use rand_distr::{Binomial, Distribution};

    type Q = Ratio<i128>;

    fn single_class(n: usize, k: usize, seed: u64) -> Assignment<f64> {
        let ds: Vec<Example<f64>> = (0..n * k).map(|j| Example::new(j, vec![0.0; 2], j % n)).collect();
        let spec = PartitionSpec::new(PartitionKind::SingleClass, n);
        partition(ds, &spec, k, &mut RngStream::new(seed, 0).rng()).unwrap()
    }

    fn q(num: i128, den: i128) -> Q {
        Q::new(num, den)
    }

    #[test]
    fn marking_counts() {
        let mut rng = RngStream::new(1, 0).rng();
        let a = single_class(10, 30, 1);
        let none = mark_non_private(a.clone(), 0.0, &mut rng).unwrap();
        assert_eq!(none.non_private_count(), 0);
        let all = mark_non_private(a.clone(), 1.0, &mut rng).unwrap();
        assert_eq!(all.non_private_count(), 300);
        let some = mark_non_private(a.clone(), 0.2, &mut rng).unwrap();
        for client in 0..10 {
            let flagged: Vec<_> = some
                .examples
                .iter()
                .zip(&some.owner_of)
                .filter(|(e, &o)| o == client && e.non_private)
                .collect();
            assert_eq!(flagged.len(), 6);
            assert!(flagged.iter().all(|(e, _)| e.label == client));
        }
        assert!(mark_non_private(a, 1.5, &mut rng).is_err());
    }

    #[test]
    fn marking_rounds_per_client_total() {
        // Dirichlet-style uneven holdings: totals must match round(c · |D_i|).
        let mut rng = RngStream::new(2, 0).rng();
        let ds: Vec<Example<f64>> = (0..60).map(|j| Example::new(j, vec![0.0], j % 3)).collect();
        let spec = PartitionSpec::new(PartitionKind::Dirichlet { alpha: 0.5 }, 4);
        let a = partition(ds, &spec, 20, &mut rng).unwrap();
        let marked = mark_non_private(a.clone(), 0.3, &mut rng).unwrap();
        for client in 0..4 {
            let local = a.owner_of.iter().filter(|&&o| o == client).count();
            let flagged = marked
                .examples
                .iter()
                .zip(&marked.owner_of)
                .filter(|(e, &o)| o == client && e.non_private)
                .count();
            assert_eq!(flagged, (0.3 * local as f64).round() as usize);
        }
    }

    #[test]
    fn sharing_edge_cases() {
        let mut rng = RngStream::new(3, 0).rng();
        let a = mark_non_private(single_class(10, 30, 3), 0.2, &mut rng).unwrap();

        let out = share_randomized(a.clone(), &ShareConfig::new(0.2, 0), &mut rng).unwrap();
        assert_eq!(out.total_shared, 0);
        assert!(out.received.iter().all(|&s| s == 0));
        assert!(out.assignment.examples.iter().all(|e| e.replication() == 1));

        let full = share_randomized(a.clone(), &ShareConfig::new(0.2, 9), &mut rng).unwrap();
        for e in &full.assignment.examples {
            assert_eq!(e.replication(), if e.non_private { 10 } else { 1 });
        }

        let out = share_randomized(a.clone(), &ShareConfig::new(0.2, 3), &mut rng).unwrap();
        assert_eq!(out.total_shared, 180);
        assert_eq!(out.bytes_relayed, 180 * 2 * 8);
        for e in &out.assignment.examples {
            assert_eq!(e.replication(), if e.non_private { 4 } else { 1 });
        }
        out.assignment.validate().unwrap();

        assert!(share_randomized(a.clone(), &ShareConfig::new(0.2, 10), &mut rng).is_err());
        // A second pass over an already shared assignment is refused.
        assert!(share_randomized(out.assignment, &ShareConfig::new(0.2, 1), &mut rng).is_err());
    }

    #[test]
    fn proportions_follow_sharing_rule() {
        // Y = (X·K + S) / (K + B), per class.
        let mut rng = RngStream::new(4, 0).rng();
        let ds: Vec<Example<f64>> = (0..200).map(|j| Example::new(j, vec![0.0], j % 5)).collect();
        let spec = PartitionSpec::new(PartitionKind::Dirichlet { alpha: 0.3 }, 6);
        let a = partition(ds, &spec, 40, &mut rng).unwrap();
        let a = mark_non_private(a, 0.4, &mut rng).unwrap();
        let out = share_randomized(a.clone(), &ShareConfig::new(0.4, 2), &mut rng).unwrap();
        for l in 0..5 {
            let y: ProportionVector<f64> = class_proportions(&out.assignment, l).unwrap();
            let x: ProportionVector<f64> = crate::hetero::owner_proportions(&a, l).unwrap();
            let s = out.received_in_class(l);
            let b: usize = s.iter().sum();
            for i in 0..6 {
                let expected = (x.values()[i] * 40.0 + s[i] as f64) / (40.0 + b as f64);
                assert!((y.values()[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_sharing_reaches_uniform() {
        let mut rng = RngStream::new(5, 0).rng();
        let a = mark_non_private(single_class(10, 30, 5), 1.0, &mut rng).unwrap();
        let out = share_randomized(a, &ShareConfig::new(1.0, 9), &mut rng).unwrap();
        for l in 0..10 {
            let y: ProportionVector<f64> = class_proportions(&out.assignment, l).unwrap();
            assert_eq!(y, ProportionVector::uniform(10));
        }
    }

    #[test]
    fn received_counts_have_binomial_mean() {
        // S_i ~ Binomial(c(1 − X_i)K·L', d/(N−1)) summed over the classes i
        // does not own: mean 0.2·30·9·(3/9) = 18.
        let mut rng = RngStream::new(6, 0).rng();
        let a = mark_non_private(single_class(10, 30, 6), 0.2, &mut rng).unwrap();
        let runs = 20_000;
        let mut stats = vec![RunningStats::default(); 10];
        for _ in 0..runs {
            let out = share_randomized(a.clone(), &ShareConfig::new(0.2, 3), &mut rng).unwrap();
            for (st, &s) in stats.iter_mut().zip(&out.received) {
                st.push(s as f64);
            }
        }
        for st in &stats {
            assert!((st.mean() - 18.0).abs() < 4.0 * st.stderr(), "{}", st.mean());
        }
    }

    #[test]
    fn closed_form_examples() {
        let d0 = expected_distance_after_sharing(0.9, 10, 30, 0.2, 0).unwrap();
        assert_eq!(d0, 0.9);
        let full = expected_distance_after_sharing(0.9, 10, 30, 1.0, 9).unwrap();
        assert_eq!(full, 0.0);
        let v: f64 = expected_distance_after_sharing(0.9, 10, 30, 0.2, 3).unwrap();
        let by_hand = 3.6 / 691.2 + 70.56 / 207.36 * 0.9;
        assert!((v - by_hand).abs() < 1e-12);
        assert!((v - 0.31146).abs() < 1e-5);
        assert!(expected_distance_after_sharing(0.9, 10, 30, 0.2, 10).is_err());
    }

    #[test]
    fn closed_form_exact_in_rationals() {
        let dist0 = q(9, 10);
        let v = expected_distance_after_sharing(dist0, 10, 30, q(1, 5), 3).unwrap();
        // 3.6/691.2 + (70.56/207.36)·0.9
        let expected = q(36, 6912) + q(7056, 20736) * dist0;
        assert_eq!(v, expected);
        assert_eq!(
            expected_distance_after_sharing(dist0, 10, 30, q(1, 1), 9).unwrap(),
            Q::from_integer(0)
        );
    }

    #[test]
    fn expansion_terms_agree() {
        for n in 2..=16usize {
            for d in 0..n {
                for (cn, cd) in [(0, 1), (1, 10), (1, 5), (1, 3), (1, 2), (7, 9), (1, 1)] {
                    let [t1, t2, t3] = expansion_terms(n, q(cn, cd), d);
                    let closed = expansion_terms_closed(n, q(cn, cd), d);
                    assert_eq!(t1, closed);
                    assert_eq!(t2, closed);
                    assert_eq!(t3, closed);

                    let c = cn as f64 / cd as f64;
                    let [f1, f2, f3] = expansion_terms(n, c, d);
                    assert!((f1 - f2).abs() < 1e-12 && (f2 - f3).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn contraction_at_least_one_plus_dc_squared() {
        for n in 2..=20usize {
            for d in 0..n {
                for step in 0..=20 {
                    let c = step as f64 / 20.0;
                    let dc = d as f64 * c;
                    let coef = distance_contraction(n, c, d);
                    assert!(coef <= 1.0 / (1.0 + dc).powi(2) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn closed_form_assembles_from_moments() {
        // Σ_i E[Y_i²] − (2/N)E[Y_i] + 1/N² must equal the closed form.
        let (n, k, c, d) = (7usize, 12usize, q(1, 3), 2usize);
        let x = [q(1, 2), q(1, 4), q(1, 6), q(1, 12), Q::from_integer(0), Q::from_integer(0), Q::from_integer(0)];
        let nn = Q::from_integer(n as i128);
        let mut total = Q::from_integer(0);
        let mut dist0 = Q::from_integer(0);
        for &xi in &x {
            let (e1, e2) = moment_identities(xi, n, k, c, d).unwrap();
            total += e2 - Q::from_integer(2) / nn * e1 + Q::from_integer(1) / (nn * nn);
            dist0 += (xi - Q::from_integer(1) / nn) * (xi - Q::from_integer(1) / nn);
        }
        assert_eq!(total, expected_distance_after_sharing(dist0, n, k, c, d).unwrap());
    }

    #[test]
    fn moment_identity_edges() {
        let (e1, e2): (f64, f64) = moment_identities(0.3, 10, 30, 0.5, 0).unwrap();
        assert!((e1 - 0.3).abs() < 1e-15 && (e2 - 0.09).abs() < 1e-15);
        let (e1, e2) = moment_identities(q(1, 1), 10, 30, q(1, 2), 2).unwrap();
        assert_eq!(e1, q(1, 2));
        assert_eq!(e2, e1 * e1);
    }

    #[test]
    fn moments_match_binomial_draws() {
        // X_i = 0: S_i ~ Binomial(cK, d/(N−1)), Y_i = S_i / (K(1 + dc)).
        let (n, k, c, d) = (10usize, 30usize, 0.5, 2usize);
        let (e1, e2) = moment_identities(0.0, n, k, c, d).unwrap();
        let trials = (c * k as f64) as u64;
        let binom = Binomial::new(trials, d as f64 / (n - 1) as f64).unwrap();
        let mut rng = RngStream::new(7, 0).rng();
        let mut first = RunningStats::default();
        let mut second = RunningStats::default();
        for _ in 0..50_000 {
            let s = binom.sample(&mut rng) as f64;
            let y = s / (k as f64 * (1.0 + d as f64 * c));
            first.push(y);
            second.push(y * y);
        }
        assert!((first.mean() - e1).abs() < 4.0 * first.stderr());
        assert!((second.mean() - e2).abs() < 4.0 * second.stderr());
    }

    #[test]
    fn moments_match_sharing_scheme() {
        // Client 0 holds no class-3 data before sharing: X_0 = 0 for ℓ = 3.
        let (n, k, c, d) = (10usize, 30usize, 0.5, 2usize);
        let mut rng = RngStream::new(8, 0).rng();
        let a = mark_non_private(single_class(n, k, 8), c, &mut rng).unwrap();
        let (e1, e2) = moment_identities(0.0, n, k, c, d).unwrap();
        let mut first = RunningStats::default();
        let mut second = RunningStats::default();
        for _ in 0..20_000 {
            let out = share_randomized(a.clone(), &ShareConfig::new(c, d), &mut rng).unwrap();
            let y: ProportionVector<f64> = class_proportions(&out.assignment, 3).unwrap();
            first.push(y.values()[0]);
            second.push(y.values()[0].powi(2));
        }
        assert!((first.mean() - e1).abs() < 4.0 * first.stderr());
        assert!((second.mean() - e2).abs() < 4.0 * second.stderr());
    }

    #[test]
    fn mc_distance_degenerate_cases() {
        let mut rng = RngStream::new(9, 0).rng();
        let a = mark_non_private(single_class(10, 30, 9), 0.2, &mut rng).unwrap();
        let est = mc_distance_after_sharing(&a, &ShareConfig::new(0.2, 0), 4, 50, &mut rng).unwrap();
        let x: ProportionVector<f64> = class_proportions(&a, 4).unwrap();
        assert_eq!(est.mean, squared_distance_to_uniform(&x));
        assert_eq!(est.stderr, 0.0);

        let all = mark_non_private(single_class(10, 30, 9), 1.0, &mut rng).unwrap();
        let est = mc_distance_after_sharing(&all, &ShareConfig::new(1.0, 9), 4, 50, &mut rng).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.stderr, 0.0);
        assert!(mc_distance_after_sharing(&a, &ShareConfig::new(0.2, 1), 4, 1, &mut rng).is_err());
    }

    #[test]
    fn mc_distance_matches_closed_form() {
        let mut rng = RngStream::new(10, 0).rng();
        let a = mark_non_private(single_class(10, 30, 10), 0.2, &mut rng).unwrap();
        let est = mc_distance_after_sharing(&a, &ShareConfig::new(0.2, 3), 0, 20_000, &mut rng).unwrap();
        let closed = expected_distance_after_sharing(0.9, 10, 30, 0.2, 3).unwrap();
        assert!((est.mean - closed).abs() < 4.0 * est.stderr, "{est:?} vs {closed}");
    }

    #[test]
    fn per_client_mode_shares_one_recipient_set() {
        let mut rng = RngStream::new(11, 0).rng();
        let a = mark_non_private(single_class(6, 10, 11), 0.5, &mut rng).unwrap();
        let cfg = ShareConfig {
            c: 0.5,
            d: 2,
            mode: ShareMode::PerClient,
        };
        let out = share_randomized(a, &cfg, &mut rng).unwrap();
        for owner in 0..6 {
            let sets: Vec<ClientSet> = out
                .assignment
                .examples
                .iter()
                .zip(&out.assignment.owner_of)
                .filter(|(e, &o)| o == owner && e.non_private)
                .map(|(e, _)| e.holders)
                .collect();
            assert!(sets.windows(2).all(|w| w[0] == w[1]));
            assert!(sets.iter().all(|s| s.len() == 3));
        }
    }
}
