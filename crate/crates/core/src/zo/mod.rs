//! Zero-order Monte-Carlo estimators over Gaussian perturbations
//! `xi ~ N(0, sigma^2 I)` of the dynamics parameters.
//!
//! * [`zo_gradient`]: `grad J(phi) ~ (1/(sigma^2 N)) sum_i xi_i J(phi + xi_i)`,
//!   or the antithetic form `(1/(2 sigma^2 N)) sum_i xi_i (J(phi+xi_i) - J(phi-xi_i))`.
//! * [`zo_hessian_raw`]: `H ~ (1/(sigma^2 N)) sum_i [xi_i W(phi0+xi_i) xi_i' / sigma^2 - W(phi0+xi_i) I]`.
//!
//! Perturbation `i` always comes from stream `i` of the configured seed and
//! evaluations are reduced in index order, so estimates are bitwise
//! reproducible for any worker count.

mod cache;
mod finite_diff;
mod gradient;
mod hessian;

use serde::{Deserialize, Serialize};

pub use finite_diff::finite_diff_oracle;
pub use gradient::{estimate_return_gradient, zo_gradient, GradEstimate};
pub use hessian::{
    estimate_w2_hessian, estimate_w2_hessian_with_floor, regularize, zo_hessian_raw,
    HessianEstimate,
};

use crate::defaults::zo as d;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoConfig {
    /// Perturbation scale.
    pub sigma: f64,
    /// Function evaluations; antithetic mode uses `n_samples / 2` pairs.
    pub n_samples: usize,
    #[serde(default = "default_antithetic")]
    pub antithetic: bool,
    /// Stream seed. Normally filled in from the run seed.
    #[serde(default)]
    pub seed: u64,
    /// Redraws allowed for a perturbation that leaves the parameter bounds.
    #[serde(default = "default_max_resample")]
    pub max_resample: usize,
}

fn default_antithetic() -> bool {
    d::ANTITHETIC
}

fn default_max_resample() -> usize {
    d::MAX_RESAMPLE
}

impl ZoConfig {
    pub fn new(sigma: f64, n_samples: usize, antithetic: bool, seed: u64) -> Self {
        Self {
            sigma,
            n_samples,
            antithetic,
            seed,
            max_resample: d::MAX_RESAMPLE,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and positive, got {}",
                self.sigma
            )));
        }
        let min = if self.antithetic { 2 } else { 1 };
        if self.n_samples < min {
            return Err(Error::InvalidArgument(format!(
                "n_samples must be >= {min}, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    /// Number of independent perturbation draws.
    pub(crate) fn draws(&self) -> usize {
        if self.antithetic {
            self.n_samples / 2
        } else {
            self.n_samples
        }
    }
}

/// A drawn perturbation and the parameter points it is evaluated at.
pub(crate) struct Perturbation {
    pub xi: Vec<f64>,
    pub points: Vec<crate::envs::ParamVector>,
}

/// Draws perturbation `index`, redrawing while any evaluation point falls
/// outside the parameter bounds.
pub(crate) fn draw_perturbation(
    center: &crate::envs::ParamVector,
    cfg: &ZoConfig,
    purpose: crate::rng::Purpose,
    index: u64,
) -> Result<Perturbation> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = crate::rng::stream(cfg.seed, purpose, index);
    let c = center.values();
    for _ in 0..=cfg.max_resample {
        let xi: Vec<f64> = (0..c.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.sigma * z
            })
            .collect();
        let plus: Vec<f64> = c.iter().zip(&xi).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = c.iter().zip(&xi).map(|(a, b)| a - b).collect();
        let ok = center.admits(&plus) && (!cfg.antithetic || center.admits(&minus));
        if ok {
            let mut points = vec![center.with_values(plus)?];
            if cfg.antithetic {
                points.push(center.with_values(minus)?);
            }
            return Ok(Perturbation { xi, points });
        }
    }
    Err(Error::Estimator(format!(
        "perturbation {index} left the parameter bounds {} times in a row",
        cfg.max_resample + 1
    )))
}
