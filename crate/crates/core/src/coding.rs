//! Approximate gradient coding over replicated data.
//!
//! Example `j` is held by `d_j` clients and weighted by `W_j = 1/((1−p)d_j)`.
//! Client `i` sends `f_i = Σ_{j held by i} W_j g_j`; the server sums what the
//! non-stragglers send. The sum is an unbiased estimate of `g = Σ_j g_j` and
//! its second moment is
//!
//! ```text
//! E‖ĝ‖² = Σ_{j1,j2} λ(j1,j2) ⟨g_j1, g_j2⟩,
//! λ(j1,j2) = E[Z_j1 Z_j2] / ((1−p)² d_j1 d_j2) = 1 + p·|H_j1 ∩ H_j2| / ((1−p) d_j1 d_j2)
//! ```
//!
//! where `Z_j` counts responding holders of `j` and `H_j` is its holder set.
//! Brute-force enumeration over all `2^N` straggler patterns is provided as an
//! independent check of both the mean and the second moment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, ClientSet, MAX_CLIENTS};
use crate::error::{invalid, Error, Result};
use crate::linalg::{add_assign, axpy, dot_unchecked, squared_norm, sum_vectors};
use crate::scalar::{Real, Scalar};

/// Enumeration limit for [`exact_mean_estimate`].
pub const MEAN_ENUMERATION_LIMIT: usize = 20;
/// Enumeration limit for [`second_moment_bruteforce`].
pub const MOMENT_ENUMERATION_LIMIT: usize = 16;

fn check_p<T: Scalar>(p: T) -> Result<()> {
    if p < T::zero() || p >= T::one() {
        return Err(invalid("p", format!("straggling probability {p:?} outside [0, 1)")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// GradientSet
// ---------------------------------------------------------------------------

/// Per-example gradients together with the placement that produced them.
#[derive(Clone, Debug)]
pub struct GradientSet<T> {
    pub grads: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    pub non_private: Vec<bool>,
    pub holders: Vec<ClientSet>,
    pub num_clients: usize,
    pub num_classes: usize,
}

impl<T: Real> GradientSet<T> {
    pub fn new(
        grads: Vec<Vec<T>>,
        labels: Vec<usize>,
        non_private: Vec<bool>,
        holders: Vec<ClientSet>,
        num_clients: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let m = grads.len();
        for len in [labels.len(), non_private.len(), holders.len()] {
            if len != m {
                return Err(Error::LengthMismatch { expected: m, actual: len });
            }
        }
        if num_clients == 0 || num_clients > MAX_CLIENTS {
            return Err(invalid("num_clients", format!("{num_clients} not in 1..={MAX_CLIENTS}")));
        }
        if let Some(first) = grads.first() {
            if let Some(bad) = grads.iter().find(|g| g.len() != first.len()) {
                return Err(Error::LengthMismatch {
                    expected: first.len(),
                    actual: bad.len(),
                });
            }
        }
        for (j, h) in holders.iter().enumerate() {
            if h.is_empty() || h.iter().any(|i| i >= num_clients) {
                return Err(invalid("holders", format!("example {j} has invalid holder set {h:?}")));
            }
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(invalid("labels", "label out of range"));
        }
        Ok(Self {
            grads,
            labels,
            non_private,
            holders,
            num_clients,
            num_classes,
        })
    }

    /// Pairs the gradients (in example order) with an assignment's placement.
    pub fn from_assignment<E>(a: &Assignment<E>, grads: Vec<Vec<T>>) -> Result<Self> {
        Self::new(
            grads,
            a.examples.iter().map(|e| e.label).collect(),
            a.examples.iter().map(|e| e.non_private).collect(),
            a.examples.iter().map(|e| e.holders).collect(),
            a.num_clients,
            a.num_classes,
        )
    }

    /// Same gradients placed on different holder sets.
    pub fn with_holders(&self, holders: Vec<ClientSet>) -> Result<Self> {
        Self::new(
            self.grads.clone(),
            self.labels.clone(),
            self.non_private.clone(),
            holders,
            self.num_clients,
            self.num_classes,
        )
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grads.first().map_or(0, Vec::len)
    }

    /// `g = Σ_j g_j`
    pub fn full_gradient(&self) -> Vec<T> {
        sum_vectors(self.dim(), self.grads.iter().map(Vec::as_slice))
    }
}

// ---------------------------------------------------------------------------
// Weights, participation, encoding, aggregation
// ---------------------------------------------------------------------------

/// `W_j = 1/((1−p) d_j)`.
pub fn weight<T: Scalar>(replication: usize, p: T) -> Result<T> {
    check_p(p)?;
    if replication == 0 {
        return Err(invalid("d_j", "an example must have at least one holder"));
    }
    Ok(T::one() / ((T::one() - p) * T::from_count(replication)))
}

/// Which clients responded in one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    pub flags: Vec<bool>,
    pub p: f64,
}

impl Participation {
    pub fn all(n: usize, p: f64) -> Self {
        Self { flags: vec![true; n], p }
    }

    pub fn from_mask(n: usize, mask: u64, p: f64) -> Self {
        Self {
            flags: (0..n).map(|i| mask & (1u64 << i) != 0).collect(),
            p,
        }
    }

    pub fn responders(&self) -> ClientSet {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Independent Bernoulli(1 − p) participation for `n` clients.
pub fn sample_participation<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Participation> {
    check_p(p)?;
    let flags = (0..n).map(|_| rng.random::<f64>() >= p).collect();
    Ok(Participation { flags, p })
}

/// `f_i = Σ_{j: i ∈ H_j} W_j g_j`
pub fn client_partial<T: Real>(client: usize, grads: &GradientSet<T>, p: T) -> Result<Vec<T>> {
    check_p(p)?;
    if client >= grads.num_clients {
        return Err(invalid("client", format!("{client} ≥ N = {}", grads.num_clients)));
    }
    let mut f = vec![T::zero(); grads.dim()];
    for (g, h) in grads.grads.iter().zip(&grads.holders) {
        if h.contains(client) {
            axpy(weight(h.len(), p)?, g, &mut f);
        }
    }
    Ok(f)
}

/// Partials of every client, in client order.
pub fn client_partials<T: Real>(grads: &GradientSet<T>, p: T) -> Result<Vec<Vec<T>>> {
    (0..grads.num_clients).map(|i| client_partial(i, grads, p)).collect()
}

/// Server-side estimate and the participation that produced it.
#[derive(Clone, Debug)]
pub struct GradientEstimate<T> {
    pub value: Vec<T>,
    pub participation: Participation,
}

/// `ĝ = Σ_i I_i f_i`. A round where nobody responds yields the zero vector.
pub fn aggregate_estimate<T: Real>(partials: &[Vec<T>], part: &Participation) -> Result<GradientEstimate<T>> {
    if partials.len() != part.flags.len() {
        return Err(Error::LengthMismatch {
            expected: part.flags.len(),
            actual: partials.len(),
        });
    }
    let dim = partials.first().map_or(0, Vec::len);
    let mut value = vec![T::zero(); dim];
    for (f, &on) in partials.iter().zip(&part.flags) {
        if f.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, actual: f.len() });
        }
        if on {
            add_assign(&mut value, f);
        }
    }
    Ok(GradientEstimate {
        value,
        participation: part.clone(),
    })
}

/// Same estimate written per example: `Σ_j Z_j/((1−p)d_j) g_j` with `Z_j` the
/// number of responding holders of `j`.
pub fn estimate_by_example<T: Real>(grads: &GradientSet<T>, p: T, responders: ClientSet) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); grads.dim()];
    for (g, h) in grads.grads.iter().zip(&grads.holders) {
        let z = h.overlap(responders);
        if z > 0 {
            axpy(T::from_count(z) * weight(h.len(), p)?, g, &mut out);
        }
    }
    Ok(out)
}

fn pattern_probability<T: Real>(n: usize, responders: usize, p: T) -> T {
    let q = T::one() - p;
    q.powi(responders as i32) * p.powi((n - responders) as i32)
}

/// `E[ĝ]` by summing over all `2^N` participation patterns.
pub fn exact_mean_estimate<T: Real>(grads: &GradientSet<T>, p: T) -> Result<Vec<T>> {
    let n = grads.num_clients;
    if n > MEAN_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            what: "exact_mean_estimate",
            n,
            limit: MEAN_ENUMERATION_LIMIT,
        });
    }
    let partials = client_partials(grads, p)?;
    let dim = grads.dim();
    let mut mean = vec![T::zero(); dim];
    for mask in 0..(1u64 << n) {
        let prob = pattern_probability(n, mask.count_ones() as usize, p);
        if prob == T::zero() {
            continue;
        }
        let part = Participation::from_mask(n, mask, p.to_f64().unwrap_or(0.0));
        let est = aggregate_estimate(&partials, &part)?;
        axpy(prob, &est.value, &mut mean);
    }
    Ok(mean)
}

// ---------------------------------------------------------------------------
// Second moment
// ---------------------------------------------------------------------------

/// `λ = 1 + p·|H1 ∩ H2| / ((1−p)·|H1|·|H2|)`.
pub fn overlap_lambda<T: Scalar>(h1: ClientSet, h2: ClientSet, p: T) -> T {
    let d1 = T::from_count(h1.len());
    let d2 = T::from_count(h2.len());
    T::one() + p * T::from_count(h1.overlap(h2)) / ((T::one() - p) * d1 * d2)
}

/// `Σ_{j1,j2} coef(H_j1, H_j2) ⟨g_j1, g_j2⟩` over all ordered pairs.
pub fn second_moment_with<T, F>(grads: &GradientSet<T>, coef: F) -> T
where
    T: Real,
    F: Fn(ClientSet, ClientSet) -> T,
{
    let m = grads.len();
    let two = T::from_count(2);
    let mut total = T::zero();
    for j1 in 0..m {
        let g1 = &grads.grads[j1];
        let h1 = grads.holders[j1];
        total = total + coef(h1, h1) * squared_norm(g1);
        for j2 in (j1 + 1)..m {
            let h2 = grads.holders[j2];
            // (j1, j2) and (j2, j1) share the product; the coefficient is
            // evaluated for each order.
            let ip = dot_unchecked(g1, &grads.grads[j2]);
            let c12 = coef(h1, h2);
            let c21 = coef(h2, h1);
            total = total + if c12 == c21 { two * c12 * ip } else { (c12 + c21) * ip };
        }
    }
    total
}

/// Exact `E‖ĝ‖²` from the overlap coefficients.
pub fn second_moment_closed_form<T: Real>(grads: &GradientSet<T>, p: T) -> Result<T> {
    check_p(p)?;
    Ok(second_moment_with(grads, |h1, h2| overlap_lambda(h1, h2, p)))
}

/// Exact `E‖ĝ‖²` through the per-client decomposition
/// `‖g‖² + p(1−p) Σ_i ‖f_i‖²`; `O(N·M·D)` instead of `O(M²·D)`.
pub fn second_moment_by_client<T: Real>(grads: &GradientSet<T>, p: T) -> Result<T> {
    check_p(p)?;
    let partials = client_partials(grads, p)?;
    Ok(second_moment_from_partials(&grads.full_gradient(), &partials, p))
}

pub(crate) fn second_moment_from_partials<T: Real>(full: &[T], partials: &[Vec<T>], p: T) -> T {
    let spread: T = partials.iter().map(|f| squared_norm(f)).sum();
    squared_norm(full) + p * (T::one() - p) * spread
}

/// `E‖ĝ‖²` by enumerating every participation pattern.
pub fn second_moment_bruteforce<T: Real>(grads: &GradientSet<T>, p: T) -> Result<T> {
    let n = grads.num_clients;
    if n > MOMENT_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            what: "second_moment_bruteforce",
            n,
            limit: MOMENT_ENUMERATION_LIMIT,
        });
    }
    let partials = client_partials(grads, p)?;
    let mut total = T::zero();
    for mask in 0..(1u64 << n) {
        let prob = pattern_probability(n, mask.count_ones() as usize, p);
        if prob == T::zero() {
            continue;
        }
        let part = Participation::from_mask(n, mask, p.to_f64().unwrap_or(0.0));
        let est = aggregate_estimate(&partials, &part)?;
        total = total + prob * squared_norm(&est.value);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Coefficient table
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, x: T, tol: T) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }
}

/// Coefficients for the six pair classes in the single-class setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaTable<T> {
    pub same_pp: T,
    pub diff_pp: T,
    pub same_npp: T,
    pub diff_npp: Interval<T>,
    pub same_npnp: Interval<T>,
    pub diff_npnp: Interval<T>,
}

/// Exact entries and interval bounds for replication `d` and straggling `p`.
/// Where an interval's upper end is another (bounded) coefficient, its own
/// upper bound is used.
pub fn lambda_table<T: Scalar>(d: usize, p: T) -> Result<LambdaTable<T>> {
    check_p(p)?;
    let one = T::one();
    let q = one - p;
    let dd = T::from_count(d);
    let same_pp = one / q;
    let same_npp = (one + dd * q) / (q * (dd + one));
    let same_npnp = Interval { lower: one, upper: same_npp };
    Ok(LambdaTable {
        same_pp,
        diff_pp: one,
        same_npp,
        diff_npp: Interval { lower: one, upper: same_npp },
        same_npnp,
        diff_npnp: Interval { lower: one, upper: same_npnp.upper },
    })
}

/// The six pair classes, by class agreement and privacy of the two examples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    SamePp,
    DiffPp,
    SameNpP,
    DiffNpP,
    SameNpNp,
    DiffNpNp,
}

impl PairType {
    pub const ALL: [PairType; 6] = [
        PairType::SamePp,
        PairType::DiffPp,
        PairType::SameNpP,
        PairType::DiffNpP,
        PairType::SameNpNp,
        PairType::DiffNpNp,
    ];

    pub fn classify(label1: usize, np1: bool, label2: usize, np2: bool) -> Self {
        let same = label1 == label2;
        match (np1 as u8 + np2 as u8, same) {
            (0, true) => PairType::SamePp,
            (0, false) => PairType::DiffPp,
            (1, true) => PairType::SameNpP,
            (1, false) => PairType::DiffNpP,
            (_, true) => PairType::SameNpNp,
            (_, false) => PairType::DiffNpNp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairType::SamePp => "same_pp",
            PairType::DiffPp => "diff_pp",
            PairType::SameNpP => "same_npp",
            PairType::DiffNpP => "diff_npp",
            PairType::SameNpNp => "same_npnp",
            PairType::DiffNpNp => "diff_npnp",
        }
    }
}

/// Range and mean of the overlap coefficient over one pair class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Overlap coefficients realized by an assignment's placement, per pair class
/// (ordered pairs, diagonal included).
pub fn realized_lambdas<E>(a: &Assignment<E>, p: f64) -> Result<Vec<(PairType, LambdaStats)>> {
    check_p(p)?;
    let mut acc: Vec<(usize, f64, f64, f64)> = vec![(0, f64::INFINITY, f64::NEG_INFINITY, 0.0); 6];
    let ex = &a.examples;
    for e1 in ex {
        for e2 in ex {
            let t = PairType::classify(e1.label, e1.non_private, e2.label, e2.non_private);
            let lam: f64 = overlap_lambda(e1.holders, e2.holders, p);
            let slot = &mut acc[t as usize];
            slot.0 += 1;
            slot.1 = slot.1.min(lam);
            slot.2 = slot.2.max(lam);
            slot.3 += lam;
        }
    }
    Ok(PairType::ALL
        .iter()
        .zip(acc)
        .filter(|(_, a)| a.0 > 0)
        .map(|(&t, (count, min, max, sum))| {
            (
                t,
                LambdaStats {
                    count,
                    min,
                    max,
                    mean: sum / count as f64,
                },
            )
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Scalar-product sums
// ---------------------------------------------------------------------------

/// Sums of `⟨g_j1, g_j2⟩` over ordered pairs, split by class and privacy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumsReport<T> {
    /// Same-class pairs.
    pub type_one: T,
    /// Different-class pairs.
    pub type_two: T,
    /// `‖g‖²`, computed from the summed gradient.
    pub full_norm_sq: T,
    pub same_pp: T,
    pub diff_pp: T,
    pub same_npp: T,
    pub diff_npp: T,
    pub same_npnp: T,
    pub diff_npnp: T,
}

impl<T: Scalar> SumsReport<T> {
    pub fn get(&self, t: PairType) -> T {
        match t {
            PairType::SamePp => self.same_pp,
            PairType::DiffPp => self.diff_pp,
            PairType::SameNpP => self.same_npp,
            PairType::DiffNpP => self.diff_npp,
            PairType::SameNpNp => self.same_npnp,
            PairType::DiffNpNp => self.diff_npnp,
        }
    }

    /// Σ over same-class pairs with at least one non-private member.
    pub fn same_non_private(&self) -> T {
        self.same_npp + self.same_npnp
    }
}

/// Computes every pair sum from per-class block sums of private (`P_ℓ`) and
/// non-private (`Q_ℓ`) gradients in `O(M·D + L·D)`.
pub fn scalar_product_sums<T: Real>(grads: &GradientSet<T>) -> SumsReport<T> {
    let dim = grads.dim();
    let l = grads.num_classes;
    let mut private = vec![vec![T::zero(); dim]; l];
    let mut public = vec![vec![T::zero(); dim]; l];
    for ((g, &label), &np) in grads.grads.iter().zip(&grads.labels).zip(&grads.non_private) {
        let block = if np { &mut public[label] } else { &mut private[label] };
        add_assign(block, g);
    }
    let p_all = sum_vectors(dim, private.iter().map(Vec::as_slice));
    let q_all = sum_vectors(dim, public.iter().map(Vec::as_slice));
    let class_sums: Vec<Vec<T>> = private
        .iter()
        .zip(&public)
        .map(|(p, q)| p.iter().zip(q).map(|(&a, &b)| a + b).collect())
        .collect();
    let g = sum_vectors(dim, class_sums.iter().map(Vec::as_slice));

    let two = T::from_count(2);
    let mut r = SumsReport {
        type_one: T::zero(),
        type_two: T::zero(),
        full_norm_sq: squared_norm(&g),
        same_pp: T::zero(),
        diff_pp: T::zero(),
        same_npp: T::zero(),
        diff_npp: T::zero(),
        same_npnp: T::zero(),
        diff_npnp: T::zero(),
    };
    for c in 0..l {
        let (pc, qc, gc) = (&private[c], &public[c], &class_sums[c]);
        r.type_one = r.type_one + squared_norm(gc);
        // ⟨G_ℓ, Σ_{ℓ'≠ℓ} G_ℓ'⟩
        let others: Vec<T> = g.iter().zip(gc).map(|(&a, &b)| a - b).collect();
        r.type_two = r.type_two + dot_unchecked(gc, &others);

        r.same_pp = r.same_pp + squared_norm(pc);
        r.same_npnp = r.same_npnp + squared_norm(qc);
        r.same_npp = r.same_npp + two * dot_unchecked(pc, qc);

        let p_other: Vec<T> = p_all.iter().zip(pc).map(|(&a, &b)| a - b).collect();
        let q_other: Vec<T> = q_all.iter().zip(qc).map(|(&a, &b)| a - b).collect();
        r.diff_pp = r.diff_pp + dot_unchecked(pc, &p_other);
        r.diff_npnp = r.diff_npnp + dot_unchecked(qc, &q_other);
        r.diff_npp = r.diff_npp + dot_unchecked(qc, &p_other) + dot_unchecked(pc, &q_other);
    }
    r
}

/// Number of ordered pairs in each class, from class/privacy counts.
pub fn pair_counts(labels: &[usize], non_private: &[bool], num_classes: usize) -> Vec<(PairType, usize)> {
    let mut np = vec![0usize; num_classes];
    let mut pr = vec![0usize; num_classes];
    for (&l, &f) in labels.iter().zip(non_private) {
        if f {
            np[l] += 1;
        } else {
            pr[l] += 1;
        }
    }
    let np_all: usize = np.iter().sum();
    let pr_all: usize = pr.iter().sum();
    let mut counts = [0usize; 6];
    for c in 0..num_classes {
        counts[PairType::SamePp as usize] += pr[c] * pr[c];
        counts[PairType::DiffPp as usize] += pr[c] * (pr_all - pr[c]);
        counts[PairType::SameNpP as usize] += 2 * np[c] * pr[c];
        counts[PairType::DiffNpP as usize] += np[c] * (pr_all - pr[c]) + pr[c] * (np_all - np[c]);
        counts[PairType::SameNpNp as usize] += np[c] * np[c];
        counts[PairType::DiffNpNp as usize] += np[c] * (np_all - np[c]);
    }
    PairType::ALL.iter().map(|&t| (t, counts[t as usize])).collect()
}

/// Same-class pair sums involving non-private data dominate zero and their
/// different-class counterparts.
pub fn sign_condition_holds<T: Scalar>(s: &SumsReport<T>) -> bool {
    s.same_npp >= T::zero().max_of(s.diff_npp) && s.same_npnp >= T::zero().max_of(s.diff_npnp)
}

/// Which lower bound on the variance reduction to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// Factor `(d−1)/(d+1)`; holds under the dominance assumption.
    #[default]
    Standard,
    /// Factor `d/(d+1)`; additionally needs the different-class sums to be
    /// non-positive.
    NegativeCrossClass,
}

/// `(p/(1−p)) · factor(d) · Σ_{same-class pairs with non-private data} ⟨g_j1, g_j2⟩`.
pub fn variance_reduction_bound<T: Scalar>(s: &SumsReport<T>, d: usize, p: T, variant: BoundVariant) -> Result<T> {
    check_p(p)?;
    let dd = T::from_count(d);
    let factor = match variant {
        BoundVariant::Standard => (dd - T::one()) / (dd + T::one()),
        BoundVariant::NegativeCrossClass => dd / (dd + T::one()),
    };
    Ok(p / (T::one() - p) * factor * s.same_non_private())
}

/// `E‖ĝ_before‖² − E‖ĝ_after‖²` for identical gradients on two placements.
pub fn variance_gap_exact<T: Real>(before: &GradientSet<T>, after: &GradientSet<T>, p: T) -> Result<T> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            expected: before.len(),
            actual: after.len(),
        });
    }
    if before.dim() != after.dim() {
        return Err(Error::LengthMismatch {
            expected: before.dim(),
            actual: after.dim(),
        });
    }
    Ok(second_moment_closed_form(before, p)? - second_moment_closed_form(after, p)?)
}

// ---------------------------------------------------------------------------
// Gram-matrix forms
// ---------------------------------------------------------------------------

/// Gradients known only through their inner products, `gram[j1 * M + j2] =
/// ⟨g_j1, g_j2⟩`. Used when the per-example gradients are rank-one and the
/// Gram matrix is much cheaper than the vectors.
#[derive(Clone, Debug)]
pub struct GramView<'a, T> {
    pub gram: &'a [T],
    pub labels: &'a [usize],
    pub non_private: &'a [bool],
    pub num_classes: usize,
}

impl<'a, T: Scalar> GramView<'a, T> {
    pub fn new(gram: &'a [T], labels: &'a [usize], non_private: &'a [bool], num_classes: usize) -> Result<Self> {
        let m = labels.len();
        if non_private.len() != m {
            return Err(Error::LengthMismatch { expected: m, actual: non_private.len() });
        }
        if gram.len() != m * m {
            return Err(Error::LengthMismatch { expected: m * m, actual: gram.len() });
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(invalid("labels", "label out of range"));
        }
        Ok(Self { gram, labels, non_private, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pair sums by direct pair classification. `full_norm_sq` is the sum of
    /// every entry.
    pub fn sums(&self) -> SumsReport<T> {
        let m = self.len();
        let mut by_type = [T::zero(); 6];
        let mut total = T::zero();
        for j1 in 0..m {
            let row = &self.gram[j1 * m..(j1 + 1) * m];
            for (j2, &ip) in row.iter().enumerate() {
                let t = PairType::classify(self.labels[j1], self.non_private[j1], self.labels[j2], self.non_private[j2]);
                by_type[t as usize] = by_type[t as usize] + ip;
                total = total + ip;
            }
        }
        let get = |t: PairType| by_type[t as usize];
        SumsReport {
            type_one: get(PairType::SamePp) + get(PairType::SameNpP) + get(PairType::SameNpNp),
            type_two: get(PairType::DiffPp) + get(PairType::DiffNpP) + get(PairType::DiffNpNp),
            full_norm_sq: total,
            same_pp: get(PairType::SamePp),
            diff_pp: get(PairType::DiffPp),
            same_npp: get(PairType::SameNpP),
            diff_npp: get(PairType::DiffNpP),
            same_npnp: get(PairType::SameNpNp),
            diff_npnp: get(PairType::DiffNpNp),
        }
    }

    /// `Σ λ(H_j1, H_j2) gram[j1, j2]`.
    pub fn second_moment(&self, holders: &[ClientSet], p: T) -> Result<T> {
        check_p(p)?;
        let m = self.len();
        if holders.len() != m {
            return Err(Error::LengthMismatch { expected: m, actual: holders.len() });
        }
        let mut total = T::zero();
        for j1 in 0..m {
            let row = &self.gram[j1 * m..(j1 + 1) * m];
            for (j2, &ip) in row.iter().enumerate() {
                total = total + overlap_lambda(holders[j1], holders[j2], p) * ip;
            }
        }
        Ok(total)
    }
}
