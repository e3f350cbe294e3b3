//! Dense real vectors in the feature space.

use crate::error::{Error, Result};

/// A dense vector in `R^d`, `d >= 2`. Immutable after construction; all
/// operations return fresh vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorD {
    components: Vec<f64>,
}

impl VectorD {
    /// Builds a vector, rejecting non-finite components and `d < 2`.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "vector dimension {} < 2",
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "vector has non-finite components".into(),
            ));
        }
        Ok(Self { components })
    }

    /// Construction for values already known to be finite (internal math).
    pub(crate) fn from_trusted(components: Vec<f64>) -> Self {
        debug_assert!(components.len() >= 2);
        Self { components }
    }

    /// The `i`-th standard basis vector of `R^d`.
    pub fn unit(d: usize, i: usize) -> Self {
        assert!(d >= 2 && i < d, "unit({d}, {i}) out of range");
        let mut c = vec![0.0; d];
        c[i] = 1.0;
        Self { components: c }
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 2);
        Self {
            components: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        dot(&self.components, &other.components)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_trusted(self.components.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "add: dimension mismatch");
        Self::from_trusted(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "sub: dimension mismatch");
        Self::from_trusted(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// `self / ||self||`, or `DegenerateInput` when the norm is at or below
    /// `eps`.
    pub fn try_normalized(&self, eps: f64) -> Result<Self> {
        let n = self.norm();
        if n <= eps {
            return Err(Error::DegenerateInput(format!(
                "cannot normalize vector with norm {n:.3e}"
            )));
        }
        Ok(self.scale(1.0 / n))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Angle between two vectors via clamped arccos; clamping keeps roundoff at
/// the parallel/antiparallel boundaries from producing NaN.
pub fn angle_between(a: &VectorD, b: &VectorD) -> f64 {
    let denom = a.norm() * b.norm();
    assert!(denom > 0.0, "angle_between: zero-norm operand");
    (a.dot(b) / denom).clamp(-1.0, 1.0).acos()
}
