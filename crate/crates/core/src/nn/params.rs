//! Flat parameter vectors and the algebra used throughout the pipeline.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Flat real vector of all model parameters; also the representation of
/// local updates, representative updates and aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_len(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_len(other, "vector add")?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other, "vector sub")?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Self {
        ParamVector(self.0.iter().map(|a| a * factor).collect())
    }

    pub fn add_scaled_in_place(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other, "dot product")?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Cosine similarity in [-1, 1]. A zero vector carries no directional
    /// information, so any pairing with one yields 0.
    pub fn cosine_similarity(&self, other: &Self) -> Result<f64> {
        let dot = self.dot(other)?;
        let na = self.l2_norm();
        let nb = other.l2_norm();
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}

/// Mean of a non-empty set of equal-length vectors.
pub(crate) fn mean_of(vectors: &[&ParamVector]) -> Result<ParamVector> {
    let first = vectors
        .first()
        .ok_or(Error::EmptyDataset("mean of zero vectors"))?;
    let mut acc = ParamVector::zeros(first.len());
    for v in vectors {
        acc.check_len(v, "vector mean")?;
        acc.add_scaled_in_place(v, 1.0);
    }
    Ok(acc.scale(1.0 / vectors.len() as f64))
}
