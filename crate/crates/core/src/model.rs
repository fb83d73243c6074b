//! Multinomial logistic regression trained by (coded) gradient descent.
//!
//! Weights are an `L × (D+1)` row-major matrix whose last column is the bias.
//! The per-example loss is cross-entropy; the training loss is the sum over
//! examples and the `1/M` factor lives in the update rule.

use serde::{Deserialize, Serialize};

use crate::domain::{Example, ProportionVector};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot_unchecked, sum_vectors};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxRegression<T> {
    weights: Vec<T>,
    num_classes: usize,
    dim: usize,
    round: usize,
    eta0: T,
    gamma: T,
}

/// Test accuracy and mean cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

impl<T: Real> SoftmaxRegression<T> {
    /// Zero-initialized model.
    pub fn new(num_classes: usize, dim: usize, eta0: T, gamma: T) -> Result<Self> {
        if num_classes < 2 {
            return Err(invalid("num_classes", "need at least two classes"));
        }
        if !(eta0 > T::zero()) || !(gamma > T::zero()) {
            return Err(invalid("learning rate", "η and γ must be positive"));
        }
        Ok(Self {
            weights: vec![T::zero(); num_classes * (dim + 1)],
            num_classes,
            dim,
            round: 0,
            eta0,
            gamma,
        })
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// `η · γ^t`
    pub fn learning_rate(&self) -> T {
        self.eta0 * self.gamma.powi(self.round as i32)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(())
    }

    pub(crate) fn logits_into(&self, x: &[T], out: &mut [T]) {
        let stride = self.dim + 1;
        for (l, z) in out.iter_mut().enumerate() {
            let row = &self.weights[l * stride..(l + 1) * stride];
            *z = dot_unchecked(&row[..self.dim], x) + row[self.dim];
        }
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut z = vec![T::zero(); self.num_classes];
        self.logits_into(x, &mut z);
        Ok(z)
    }

    /// Max-shifted softmax in place; returns `log Σ exp(z)`.
    fn softmax_in_place(z: &mut [T]) -> T {
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in z.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in z.iter_mut() {
            *v = *v / total;
        }
        max + total.ln()
    }

    pub fn softmax_probs(&self, x: &[T]) -> Result<ProportionVector<T>> {
        let mut z = self.logits(x)?;
        Self::softmax_in_place(&mut z);
        ProportionVector::new(z)
    }

    /// `probs − onehot(label)`, the factor the gradient is built from.
    pub fn residual(&self, x: &[T], label: usize) -> Result<Vec<T>> {
        self.check_input(x)?;
        self.check_label(label)?;
        let mut r = vec![T::zero(); self.num_classes];
        self.residual_into(x, label, &mut r);
        Ok(r)
    }

    /// Residual into `out`; returns the example's cross-entropy.
    pub(crate) fn residual_into(&self, x: &[T], label: usize, out: &mut [T]) -> T {
        self.logits_into(x, out);
        let label_logit = out[label];
        let lse = Self::softmax_in_place(out);
        out[label] = out[label] - T::one();
        lse - label_logit
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(invalid("label", format!("{label} ≥ L = {}", self.num_classes)));
        }
        Ok(())
    }

    /// `out += scale · residual ⊗ [x; 1]`
    pub fn accumulate_outer(&self, residual: &[T], x: &[T], scale: T, out: &mut [T]) {
        let stride = self.dim + 1;
        for (l, &r) in residual.iter().enumerate() {
            let s = scale * r;
            if s == T::zero() {
                continue;
            }
            let row = &mut out[l * stride..(l + 1) * stride];
            for (o, v) in row[..self.dim].iter_mut().zip(x) {
                *o = *o + s * *v;
            }
            row[self.dim] = row[self.dim] + s;
        }
    }

    /// Gradient of one example's cross-entropy, flattened like the weights.
    pub fn example_gradient(&self, e: &Example<T>) -> Result<Vec<T>> {
        let r = self.residual(&e.features, e.label)?;
        let mut g = vec![T::zero(); self.weights.len()];
        self.accumulate_outer(&r, &e.features, T::one(), &mut g);
        Ok(g)
    }

    pub fn example_loss(&self, x: &[T], label: usize) -> Result<T> {
        self.check_input(x)?;
        self.check_label(label)?;
        let mut z = vec![T::zero(); self.num_classes];
        Ok(self.residual_into(x, label, &mut z))
    }

    /// Summed cross-entropy.
    pub fn loss(&self, examples: &[Example<T>]) -> Result<T> {
        examples.iter().map(|e| self.example_loss(&e.features, e.label)).sum()
    }

    /// `g = Σ_j g_j`
    pub fn full_gradient(&self, examples: &[Example<T>]) -> Result<Vec<T>> {
        let grads = examples
            .iter()
            .map(|e| self.example_gradient(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(sum_vectors(self.weights.len(), grads.iter().map(Vec::as_slice)))
    }

    /// `β ← β − (η γ^t / M) · ĝ`, then `t ← t + 1`.
    pub fn apply_update(&mut self, estimate: &[T], num_examples: usize) -> Result<()> {
        if estimate.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                actual: estimate.len(),
            });
        }
        if num_examples == 0 {
            return Err(invalid("M", "must be positive"));
        }
        let step = self.learning_rate() / T::from_count(num_examples);
        for (w, g) in self.weights.iter_mut().zip(estimate) {
            *w = *w - step * *g;
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights after update"));
        }
        self.round += 1;
        Ok(())
    }

    /// Predicted class; ties go to the lowest index.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        let z = self.logits(x)?;
        Ok(argmax(&z))
    }

    /// Accuracy and mean cross-entropy over `test`.
    pub fn evaluate(&self, test: &[Example<T>]) -> Result<Evaluation> {
        if test.is_empty() {
            return Err(Error::Dataset("empty test set".into()));
        }
        let mut z = vec![T::zero(); self.num_classes];
        let mut correct = 0usize;
        let mut loss = 0.0;
        for e in test {
            self.check_input(&e.features)?;
            self.check_label(e.label)?;
            self.logits_into(&e.features, &mut z);
            if argmax(&z) == e.label {
                correct += 1;
            }
            let label_logit = z[e.label];
            let lse = Self::softmax_in_place(&mut z);
            loss += (lse - label_logit).to_f64().unwrap_or(f64::NAN);
        }
        let n = test.len() as f64;
        Ok(Evaluation {
            accuracy: correct as f64 / n,
            loss: loss / n,
        })
    }

    /// Header `(L, D)` as little-endian `u32`s followed by the weights as
    /// little-endian `f64`s.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.weights.len());
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_f64().unwrap_or(f64::NAN).to_le_bytes());
        }
        out
    }

    /// Restores weights from [`checkpoint_bytes`](Self::checkpoint_bytes).
    pub fn from_checkpoint(bytes: &[u8], eta0: T, gamma: T, round: usize) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Dataset("checkpoint shorter than its header".into()));
        }
        let l = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != 8 * l * (d + 1) {
            return Err(Error::LengthMismatch {
                expected: 8 * l * (d + 1),
                actual: body.len(),
            });
        }
        let weights = body
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        let mut m = Self::new(l, d, eta0, gamma)?.with_weights(weights)?;
        m.round = round;
        Ok(m)
    }
}

fn argmax<T: Real>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}
