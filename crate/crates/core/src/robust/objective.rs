//! Return of the current policy as a function of the dynamics parameters.

use crate::envs::{EnvSettings, ParamVector, QuadSpec};
use crate::error::Result;
use crate::policy::{mean_return, PolicyParams};
use crate::zo::{estimate_return_gradient, GradEstimate, ZoConfig};

/// Phase I minimizes this over the Wasserstein ellipsoid.
pub trait DynamicsObjective: Sync {
    /// Expected return at `phi`; `seed` selects the rollout streams.
    fn value(&self, phi: &ParamVector, seed: u64) -> Result<f64>;
    fn gradient(&self, phi: &ParamVector, seed: u64) -> Result<GradEstimate>;

    /// Distance iterates keep from the parameter bounds so that estimates at
    /// the iterate stay well defined.
    fn bound_margin(&self) -> f64 {
        0.0
    }
}

/// Exact return and gradient of the quadratic testbed.
#[derive(Debug, Clone)]
pub struct AnalyticObjective {
    pub spec: QuadSpec,
}

impl DynamicsObjective for AnalyticObjective {
    fn value(&self, phi: &ParamVector, _seed: u64) -> Result<f64> {
        Ok(self.spec.value(phi.values()))
    }

    fn gradient(&self, phi: &ParamVector, _seed: u64) -> Result<GradEstimate> {
        Ok(GradEstimate::exact(self.spec.gradient(phi.values())))
    }
}

/// Monte-Carlo return of a fixed policy, with a zero-order gradient.
#[derive(Debug, Clone)]
pub struct ZoReturnObjective<'a> {
    pub policy: &'a PolicyParams,
    pub settings: &'a EnvSettings,
    /// Gradient estimator settings; its seed is replaced per call.
    pub zo: ZoConfig,
    /// Episodes per perturbed evaluation in the gradient.
    pub episodes_per_eval: usize,
    /// Episodes per line-search value.
    pub value_episodes: usize,
}

impl DynamicsObjective for ZoReturnObjective<'_> {
    fn value(&self, phi: &ParamVector, seed: u64) -> Result<f64> {
        mean_return(self.policy, self.settings, phi, self.value_episodes, seed)
    }

    fn gradient(&self, phi: &ParamVector, seed: u64) -> Result<GradEstimate> {
        let cfg = self.zo.clone().with_seed(seed);
        estimate_return_gradient(
            self.policy,
            self.settings,
            phi,
            &cfg,
            self.episodes_per_eval,
        )
    }

    /// Two perturbation scales, so antithetic draws rarely need resampling.
    fn bound_margin(&self) -> f64 {
        2.0 * self.zo.sigma
    }
}
