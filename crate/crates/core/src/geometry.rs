//! Axis-aligned boxes used for state and input sets.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct BoxSet<T: Scalar> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> BoxSet<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[-r, r]` in every one of `dim` coordinates.
    pub fn symmetric(radii: &[T]) -> Result<Self> {
        Self::new(radii.iter().map(|&r| -r).collect(), radii.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.lower.len(), self.upper.len())?;
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidParameter(format!(
                    "box bounds must be finite with lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Component-wise projection onto the box.
    pub fn clip(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| v.max(l).min(u))
            .collect()
    }

    pub fn center(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| half * (l + u))
            .collect()
    }

    /// Box with every half-width scaled by `1 + fraction` about the center.
    pub fn inflate(&self, fraction: T) -> Self {
        let half = T::lit(0.5);
        let scale = T::one() + fraction;
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                let c = half * (l + u);
                let r = half * (u - l) * scale;
                (c - r, c + r)
            })
            .unzip();
        Self { lower, upper }
    }
}
