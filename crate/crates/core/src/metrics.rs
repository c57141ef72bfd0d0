//! Objective-space primitives: metric vectors, compliance scoring and Pareto
//! dominance.
//!
//! Every objective is normalized to `[0, 1]` with higher meaning better.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of objectives: correctness, description compliance, body
/// compliance.
pub const DEFAULT_OBJECTIVES: usize = 3;

/// A point in `[0, 1]^M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricVector(Vec<f64>);

impl MetricVector {
    /// Builds a vector, clamping every component into `[0, 1]`.
    ///
    /// Out-of-range values are clamped with a warning and NaN becomes 0, so
    /// noisy evaluators never abort a run.
    pub fn new(values: impl Into<Vec<f64>>) -> Self {
        let mut values = values.into();
        for v in values.iter_mut() {
            if v.is_nan() {
                log::warn!("metric component is NaN, clamping to 0");
                *v = 0.0;
            } else if !(0.0..=1.0).contains(v) {
                log::warn!("metric component {v} outside [0, 1], clamping");
                *v = v.clamp(0.0, 1.0);
            }
        }
        MetricVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Unweighted mean of the components, the composite score used by
    /// single-objective selectors.
    pub fn composite(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for MetricVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.4}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<f64>> for MetricVector {
    fn from(v: Vec<f64>) -> Self {
        MetricVector::new(v)
    }
}

impl<const N: usize> From<[f64; N]> for MetricVector {
    fn from(v: [f64; N]) -> Self {
        MetricVector::new(v.to_vec())
    }
}

/// Character limits for the two constrained SKILL.md fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceLimits {
    pub description: usize,
    pub body: usize,
}

impl ComplianceLimits {
    pub fn new(description: usize, body: usize) -> Result<Self> {
        if description == 0 {
            return Err(Error::invalid("limits.description", "must be positive"));
        }
        if body == 0 {
            return Err(Error::invalid("limits.body", "must be positive"));
        }
        Ok(ComplianceLimits { description, body })
    }
}

impl Default for ComplianceLimits {
    fn default() -> Self {
        ComplianceLimits {
            description: 1024,
            body: 5000,
        }
    }
}

/// Linear compliance: `max(0, 1 - length / limit)`.
///
/// # Panics
///
/// Panics if `limit` is zero.
pub fn compliance_score(length: usize, limit: usize) -> f64 {
    assert!(limit > 0, "compliance limit must be positive");
    (1.0 - length as f64 / limit as f64).max(0.0)
}

/// `true` iff `a` is no worse than `b` everywhere and strictly better
/// somewhere.
pub fn dominates(a: &MetricVector, b: &MetricVector) -> Result<bool> {
    b.check_dim(a.dim())?;
    let mut strictly_better = false;
    for (x, y) in a.0.iter().zip(&b.0) {
        if x < y {
            return Ok(false);
        }
        if x > y {
            strictly_better = true;
        }
    }
    Ok(strictly_better)
}

/// `a` dominates or equals `b`.
pub fn weakly_dominates(a: &MetricVector, b: &MetricVector) -> Result<bool> {
    b.check_dim(a.dim())?;
    Ok(a.0.iter().zip(&b.0).all(|(x, y)| x >= y))
}

/// Indices of the non-dominated members of `points`, in input order. Ties
/// (identical vectors) are all kept.
pub fn pareto_indices(points: &[MetricVector]) -> Result<Vec<usize>> {
    let mut front = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i != j && dominates(q, p)? {
                continue 'outer;
            }
        }
        front.push(i);
    }
    Ok(front)
}

/// The non-dominated subset of `points`.
pub fn pareto_front(points: &[MetricVector]) -> Result<Vec<MetricVector>> {
    Ok(pareto_indices(points)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}
