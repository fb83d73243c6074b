//! Dense vector helpers and the heterogeneity metric.

use crate::domain::ProportionVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Euclidean inner product.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot_unchecked(a, b))
}

/// Eight interleaved partial sums, combined pairwise; lets the compiler keep
/// several lanes in flight. The summation order is fixed, so results are
/// reproducible.
#[inline]
pub(crate) fn dot_unchecked<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    let s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

pub fn squared_norm<T: Scalar>(a: &[T]) -> T {
    dot_unchecked(a, a)
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `a += b`
#[inline]
pub fn add_assign<T: Scalar>(a: &mut [T], b: &[T]) {
    debug_assert_eq!(a.len(), b.len());
    for (ai, &bi) in a.iter_mut().zip(b) {
        *ai = *ai + bi;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Sum of a sequence of equal-length vectors, accumulated in iteration order.
pub fn sum_vectors<'a, T: Scalar, I>(dim: usize, vectors: I) -> Vec<T>
where
    I: IntoIterator<Item = &'a [T]>,
{
    let mut acc = vec![T::zero(); dim];
    for v in vectors {
        add_assign(&mut acc, v);
    }
    acc
}

/// `‖x − Θ*‖²` where `Θ* = (1/N, …, 1/N)`.
pub fn squared_distance_to_uniform<T: Scalar>(x: &ProportionVector<T>) -> T {
    let u = T::one() / T::from_count(x.len());
    x.values().iter().fold(T::zero(), |acc, &v| {
        let diff = v - u;
        acc + diff * diff
    })
}
