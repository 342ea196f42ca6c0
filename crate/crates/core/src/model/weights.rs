use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::scalar::Scalar;

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> ParamTensor<S> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        ParamTensor { name: name.into(), shape, data: vec![S::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered named parameters of one model at one round; the unit exchanged
/// between clients and server.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<S> {
    pub model_tag: String,
    pub version: u64,
    pub entries: Vec<ParamTensor<S>>,
}

fn check_aligned<A, B>(a: &[ParamTensor<A>], b: &[ParamTensor<B>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape(format!("{} vs {} parameter tensors", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if x.name != y.name || x.shape != y.shape {
            return Err(shape(format!("`{}` {:?} vs `{}` {:?}", x.name, x.shape, y.name, y.shape)));
        }
    }
    Ok(())
}

impl<S: Scalar> ModelWeights<S> {
    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|e| e.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<S>> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Same tag and tensor layout as `other`.
    pub fn ensure_compatible<T>(&self, other: &ModelWeights<T>) -> Result<()> {
        if self.model_tag != other.model_tag {
            return Err(shape(format!("model tag `{}` vs `{}`", self.model_tag, other.model_tag)));
        }
        check_aligned(&self.entries, &other.entries)
    }

    pub fn ensure_aligned<T>(&self, entries: &[ParamTensor<T>]) -> Result<()> {
        check_aligned(&self.entries, entries)
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| S::zero())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        ModelWeights {
            model_tag: self.model_tag.clone(),
            version: self.version,
            entries: self
                .entries
                .iter()
                .map(|e| ParamTensor { name: e.name.clone(), shape: e.shape.clone(), data: e.data.iter().map(|&v| f(v)).collect() })
                .collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.ensure_compatible(other)?;
        let mut out = self.clone();
        for (o, e) in out.entries.iter_mut().zip(&other.entries) {
            for (a, &b) in o.data.iter_mut().zip(&e.data) {
                *a = f(*a, b);
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    /// `self += k · entries`, for aligned entries.
    pub fn axpy(&mut self, k: S, entries: &[ParamTensor<S>]) -> Result<()> {
        check_aligned(&self.entries, entries)?;
        for (o, e) in self.entries.iter_mut().zip(entries) {
            for (a, &b) in o.data.iter_mut().zip(&e.data) {
                *a += k * b;
            }
        }
        Ok(())
    }

    pub fn flat(&self) -> impl Iterator<Item = S> + '_ {
        self.entries.iter().flat_map(|e| e.data.iter().copied())
    }

    pub fn cast<T: Scalar>(&self) -> ModelWeights<T> {
        ModelWeights {
            model_tag: self.model_tag.clone(),
            version: self.version,
            entries: self
                .entries
                .iter()
                .map(|e| ParamTensor { name: e.name.clone(), shape: e.shape.clone(), data: e.data.iter().map(|v| T::lit(v.re())).collect() })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|v| v.is_finite())
    }
}

/// Where a gradient came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Computed directly by backpropagation.
    Captured,
    /// `(old − new)/η` from a single plain-SGD step; exact.
    Recovered,
    /// `(old − new)/η` from an update that was not a single plain-SGD step.
    Approximate,
}

/// Per-parameter gradient tensors aligned with a [`ModelWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<S> {
    pub entries: Vec<ParamTensor<S>>,
    pub provenance: Provenance,
    pub learning_rate_used: Option<f64>,
}

impl<S: Scalar> GradientEstimate<S> {
    pub fn captured(entries: Vec<ParamTensor<S>>) -> Self {
        GradientEstimate { entries, provenance: Provenance::Captured, learning_rate_used: None }
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> impl Iterator<Item = S> + '_ {
        self.entries.iter().flat_map(|e| e.data.iter().copied())
    }

    pub fn flatten(&self) -> Vec<S> {
        self.flat().collect()
    }

    pub fn ensure_aligned<T>(&self, other: &GradientEstimate<T>) -> Result<()> {
        check_aligned(&self.entries, &other.entries)
    }

    /// Relative error `‖self − other‖ / ‖other‖` of each tensor.
    pub fn relative_errors(&self, other: &Self) -> Result<Vec<(String, f64)>> {
        self.ensure_aligned(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                let diff: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x.re() - y.re()).powi(2)).sum();
                let norm: f64 = b.data.iter().map(|y| y.re().powi(2)).sum();
                let rel = if norm == 0.0 { diff.sqrt() } else { (diff / norm).sqrt() };
                (a.name.clone(), rel)
            })
            .collect())
    }
}

pub(crate) fn validate_lr(lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(invalid(format!("learning rate must be positive and finite, got {lr}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weights(a: Vec<f64>, b: Vec<f64>) -> ModelWeights<f64> {
        ModelWeights {
            model_tag: "t".into(),
            version: 0,
            entries: vec![
                ParamTensor { name: "w".into(), shape: vec![a.len()], data: a },
                ParamTensor { name: "b".into(), shape: vec![b.len()], data: b },
            ],
        }
    }

    proptest! {
        #[test]
        fn sub_then_add_restores(a in prop::collection::vec(-1e3..1e3f64, 6), b in prop::collection::vec(-1e3..1e3f64, 6)) {
            let x = weights(a[..4].to_vec(), a[4..].to_vec());
            let y = weights(b[..4].to_vec(), b[4..].to_vec());
            let back = x.sub(&y).unwrap().add(&y).unwrap();
            for (p, q) in back.flat().zip(x.flat()) {
                prop_assert!((p - q).abs() <= 1e-9 * q.abs().max(1.0));
            }
        }
    }

    #[test]
    fn misaligned_weights_are_rejected() {
        let x = weights(vec![1.0, 2.0], vec![0.0]);
        let y = weights(vec![1.0], vec![0.0]);
        assert!(x.add(&y).is_err());
        let mut z = x.clone();
        z.model_tag = "other".into();
        assert!(x.sub(&z).is_err());
    }

    #[test]
    fn scale_and_axpy() {
        let mut x = weights(vec![1.0, 2.0], vec![3.0]);
        assert_eq!(x.scale(2.0).flat().collect::<Vec<_>>(), vec![2.0, 4.0, 6.0]);
        let g = x.entries.clone();
        x.axpy(-1.0, &g).unwrap();
        assert!(x.flat().all(|v| v == 0.0));
    }
}
