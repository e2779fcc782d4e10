//! Flat model parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flat real-valued model parameter of fixed dimension. All arithmetic
/// partners must share the dimension; elements stay finite after every
/// operation (enforced by the training loop's divergence checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, expected: usize, context: &'static str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::Dimension {
                expected,
                got: self.dim(),
                context,
            });
        }
        Ok(())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            *a *= s;
        }
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), other.dim());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Mean of a nonempty set of equal-dimension vectors, accumulated in
    /// input order so the result is independent of scheduling.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a ParamVector>) -> Result<ParamVector> {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::config("mean over empty set of parameter vectors"))?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for v in iter {
            v.check_dim(acc.dim(), "ParamVector::mean")?;
            acc.add_scaled(v, 1.0);
            count += 1;
        }
        acc.scale(1.0 / count as f64);
        Ok(acc)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_two() {
        let a = ParamVector::from_vec(vec![0.0, 2.0]);
        let b = ParamVector::from_vec(vec![2.0, 0.0]);
        let m = ParamVector::mean([&a, &b]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn mean_of_empty_errors() {
        assert!(ParamVector::mean(std::iter::empty()).is_err());
    }

    #[test]
    fn finiteness() {
        assert!(ParamVector::from_vec(vec![1.0, -2.0]).is_finite());
        assert!(!ParamVector::from_vec(vec![1.0, f64::NAN]).is_finite());
        assert!(!ParamVector::from_vec(vec![f64::INFINITY]).is_finite());
    }
}
