//! Shared domain types: examples, client sets, assignments and simplex points.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{Real, Scalar};

/// Largest supported client count; [`ClientSet`] is a 64-bit mask.
pub const MAX_CLIENTS: usize = 64;

// ---------------------------------------------------------------------------
// ClientSet
// ---------------------------------------------------------------------------

/// Set of client indices in `0..MAX_CLIENTS`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClientSet(u64);

impl ClientSet {
    pub const EMPTY: ClientSet = ClientSet(0);

    pub fn singleton(client: usize) -> Self {
        let mut s = Self::EMPTY;
        s.insert(client);
        s
    }

    /// All clients `0..n`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_CLIENTS);
        if n == MAX_CLIENTS {
            ClientSet(u64::MAX)
        } else {
            ClientSet((1u64 << n) - 1)
        }
    }

    pub fn from_mask(mask: u64) -> Self {
        ClientSet(mask)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, client: usize) {
        assert!(client < MAX_CLIENTS, "client index {client} out of range");
        self.0 |= 1u64 << client;
    }

    pub fn contains(self, client: usize) -> bool {
        client < MAX_CLIENTS && self.0 & (1u64 << client) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// `|self ∩ other|`
    pub fn overlap(self, other: ClientSet) -> usize {
        (self.0 & other.0).count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Debug for ClientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for ClientSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = ClientSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Example / Assignment
// ---------------------------------------------------------------------------

/// One training point together with its privacy flag and replication.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub id: usize,
    pub features: Arc<[T]>,
    pub label: usize,
    pub non_private: bool,
    pub holders: ClientSet,
}

impl<T> Example<T> {
    pub fn new(id: usize, features: impl Into<Arc<[T]>>, label: usize) -> Self {
        Self {
            id,
            features: features.into(),
            label,
            non_private: false,
            holders: ClientSet::EMPTY,
        }
    }

    /// Number of clients holding a copy (`d_j`).
    pub fn replication(&self) -> usize {
        self.holders.len()
    }
}

/// Global dataset plus per-client holdings.
#[derive(Clone, Debug)]
pub struct Assignment<T> {
    pub examples: Vec<Example<T>>,
    pub num_clients: usize,
    pub num_classes: usize,
    pub per_class: usize,
    pub owner_of: Vec<usize>,
}

impl<T> Assignment<T> {
    /// Checks the structural invariants: `K` examples per class, nonempty
    /// holder sets, and owners among the holders.
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 || self.num_clients > MAX_CLIENTS {
            return Err(invalid("num_clients", format!("{} not in 1..={MAX_CLIENTS}", self.num_clients)));
        }
        if self.examples.len() != self.per_class * self.num_classes {
            return Err(Error::Dataset(format!(
                "M = {} but K·L = {}",
                self.examples.len(),
                self.per_class * self.num_classes
            )));
        }
        if self.owner_of.len() != self.examples.len() {
            return Err(Error::LengthMismatch {
                expected: self.examples.len(),
                actual: self.owner_of.len(),
            });
        }
        let mut counts = vec![0usize; self.num_classes];
        for (j, e) in self.examples.iter().enumerate() {
            if e.label >= self.num_classes {
                return Err(Error::Dataset(format!("label {} out of range", e.label)));
            }
            counts[e.label] += 1;
            if e.holders.is_empty() {
                return Err(Error::Dataset(format!("example {j} has no holder")));
            }
            if !e.holders.contains(self.owner_of[j]) {
                return Err(Error::Dataset(format!("owner of example {j} does not hold it")));
            }
            if e.holders.iter().any(|i| i >= self.num_clients) {
                return Err(Error::Dataset(format!("example {j} held by unknown client")));
            }
        }
        if let Some(l) = counts.iter().position(|&c| c != self.per_class) {
            return Err(Error::Dataset(format!(
                "class {l} has {} examples, expected {}",
                counts[l], self.per_class
            )));
        }
        Ok(())
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }

    /// `counts[i]` = class-`label` examples originally owned by client `i`.
    pub fn owned_counts(&self, label: usize) -> Vec<usize> {
        let mut counts = vec![0; self.num_clients];
        for (e, &o) in self.examples.iter().zip(&self.owner_of) {
            if e.label == label {
                counts[o] += 1;
            }
        }
        counts
    }

    /// `counts[i]` = class-`label` examples currently held by client `i`.
    pub fn held_counts(&self, label: usize) -> Vec<usize> {
        let mut counts = vec![0; self.num_clients];
        for e in self.examples.iter().filter(|e| e.label == label) {
            for i in e.holders.iter() {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Indices of the examples held by `client`.
    pub fn held_by(&self, client: usize) -> impl Iterator<Item = usize> + '_ {
        self.examples
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.holders.contains(client))
            .map(|(j, _)| j)
    }

    pub fn non_private_count(&self) -> usize {
        self.examples.iter().filter(|e| e.non_private).count()
    }
}

// ---------------------------------------------------------------------------
// ProportionVector
// ---------------------------------------------------------------------------

/// Point on the standard simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ProportionVector<T>(Vec<T>);

impl<T: Scalar> ProportionVector<T> {
    /// Validates non-negativity and unit sum within `tol`.
    pub fn with_tolerance(values: Vec<T>, tol: T) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NotOnSimplex("empty vector".into()));
        }
        if values.iter().any(|&v| v < T::zero()) {
            return Err(Error::NotOnSimplex("negative entry".into()));
        }
        let sum = values.iter().fold(T::zero(), |acc, &v| acc + v);
        if (sum - T::one()).abs() > tol {
            return Err(Error::NotOnSimplex(format!("entries sum to {sum:?}")));
        }
        Ok(Self(values))
    }

    /// `n`-vector with every entry `1/n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Self(vec![T::one() / T::from_count(n); n])
    }

    /// Standard basis vector `e^index` of length `n`.
    pub fn basis(n: usize, index: usize) -> Self {
        assert!(index < n);
        let mut v = vec![T::zero(); n];
        v[index] = T::one();
        Self(v)
    }

    /// Normalizes nonnegative integer counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::NotOnSimplex("all counts are zero".into()));
        }
        let t = T::from_count(total);
        Ok(Self(counts.iter().map(|&c| T::from_count(c) / t).collect()))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T: Real> ProportionVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        let tol = T::simplex_tolerance(values.len());
        Self::with_tolerance(values, tol)
    }
}
