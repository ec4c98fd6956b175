//! Synthetic testbed with an analytically known return.
//!
//! One step per episode: `s' = s + phi (+ noise)`, reward
//! `J(phi) = c - 1/2 (phi - phi*)' A (phi - phi*)`. The action is ignored.

use serde::{Deserialize, Serialize};

use crate::defaults::quad as d;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    /// Symmetric curvature matrix `A`, row-major.
    pub curvature: Vec<Vec<f64>>,
    /// Maximizer `phi*` of the return when `A` is positive definite.
    pub target: Vec<f64>,
    /// Constant `c`.
    pub offset: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self::isotropic(d::DIM, 1.0, vec![d::TARGET; d::DIM], d::OFFSET)
    }
}

impl QuadSpec {
    pub fn isotropic(dim: usize, scale: f64, target: Vec<f64>, offset: f64) -> Self {
        let curvature = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { scale } else { 0.0 }).collect())
            .collect();
        Self {
            curvature,
            target,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "quad testbed needs dimension >= 1".into(),
            ));
        }
        if self.curvature.len() != n || self.curvature.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "quad testbed curvature must be {n}x{n}"
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if !self.curvature[i][j].is_finite()
                    || (self.curvature[i][j] - self.curvature[j][i]).abs() > 1e-12
                {
                    return Err(Error::InvalidArgument(
                        "quad testbed curvature must be finite and symmetric".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The analytic return `J(phi)`.
    pub fn value(&self, phi: &[f64]) -> f64 {
        let delta: Vec<f64> = phi.iter().zip(&self.target).map(|(p, t)| p - t).collect();
        let mut quad = 0.0;
        for (i, row) in self.curvature.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                quad += delta[i] * a * delta[j];
            }
        }
        self.offset - 0.5 * quad
    }

    /// The analytic gradient `-A (phi - phi*)`.
    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let delta: Vec<f64> = phi.iter().zip(&self.target).map(|(p, t)| p - t).collect();
        self.curvature
            .iter()
            .map(|row| -row.iter().zip(&delta).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

pub fn step(params: &[f64], state: &[f64]) -> Vec<f64> {
    state.iter().zip(params).map(|(s, p)| s + p).collect()
}
