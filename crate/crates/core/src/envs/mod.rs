//! Parameterized episodic simulators.
//!
//! Each family exposes its dynamics as an explicit [`ParamVector`] that can be
//! swapped between steps. Handles are single-owner values with their own RNG;
//! there is no shared state between them.

pub mod cartpole;
pub mod params;
pub mod pendulum;
pub mod quad;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use params::ParamVector;
pub use quad::QuadSpec;

use crate::defaults;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvFamily {
    Cartpole,
    Pendulum,
    QuadTestbed,
}

impl EnvFamily {
    pub fn name(self) -> &'static str {
        match self {
            EnvFamily::Cartpole => "cartpole",
            EnvFamily::Pendulum => "pendulum",
            EnvFamily::QuadTestbed => "quad_testbed",
        }
    }
}

impl std::fmt::Display for EnvFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Output width of a policy head for this space.
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Box { low, .. } => low.len(),
        }
    }

    pub fn check(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) if a < n => Ok(()),
            (ActionSpace::Box { low, .. }, Action::Continuous(a))
                if a.len() == low.len() && a.iter().all(|v| v.is_finite()) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!(
                "action {action:?} does not belong to {self:?}"
            ))),
        }
    }

    /// Uniform draw from the space.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Action {
        match self {
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
            ActionSpace::Box { low, high } => Action::Continuous(
                low.iter()
                    .zip(high)
                    .map(|(l, h)| rng.random_range(*l..=*h))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub family: EnvFamily,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub max_steps: usize,
    /// Human-readable description of the initial-state distribution.
    pub init_dist: &'static str,
    pub reference_params: ParamVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Episode ended, either by failure or by the step cap.
    pub done: bool,
    /// Episode ended only because of the step cap.
    pub truncated: bool,
}

/// Everything needed to build simulators of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSettings {
    pub family: EnvFamily,
    /// Reference parameters; the family default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<Vec<f64>>,
    /// Per-dimension validity box overriding the family default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Standard deviation of additive Gaussian transition noise.
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Testbed definition; only read for `quad_testbed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<QuadSpec>,
}

fn default_noise() -> f64 {
    defaults::NOISE_STD
}

impl EnvSettings {
    pub fn new(family: EnvFamily) -> Self {
        Self {
            family,
            phi0: None,
            bounds: None,
            noise_std: defaults::NOISE_STD,
            max_steps: None,
            quad: None,
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_quad(mut self, quad: QuadSpec) -> Self {
        self.quad = Some(quad);
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn with_phi0(mut self, phi0: Vec<f64>) -> Self {
        self.phi0 = Some(phi0);
        self
    }

    pub fn quad_spec(&self) -> QuadSpec {
        self.quad.clone().unwrap_or_default()
    }

    pub fn param_dim(&self) -> usize {
        match self.family {
            EnvFamily::Cartpole => cartpole::PARAM_NAMES.len(),
            EnvFamily::Pendulum => pendulum::PARAM_NAMES.len(),
            EnvFamily::QuadTestbed => self.quad_spec().dim(),
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self.family {
            EnvFamily::Cartpole => cartpole::PARAM_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            EnvFamily::Pendulum => pendulum::PARAM_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            EnvFamily::QuadTestbed => (0..self.param_dim()).map(|i| format!("phi{i}")).collect(),
        }
    }

    fn default_bounds(&self) -> Option<Vec<(f64, f64)>> {
        match self.family {
            EnvFamily::Cartpole => Some(vec![defaults::cartpole::POLE_LENGTH_BOUNDS]),
            EnvFamily::Pendulum => Some(vec![
                defaults::pendulum::LENGTH_BOUNDS,
                defaults::pendulum::MASS_BOUNDS,
            ]),
            EnvFamily::QuadTestbed => None,
        }
    }

    fn default_phi0(&self) -> Vec<f64> {
        match self.family {
            EnvFamily::Cartpole => vec![defaults::cartpole::POLE_LENGTH],
            EnvFamily::Pendulum => vec![defaults::pendulum::LENGTH, defaults::pendulum::MASS],
            EnvFamily::QuadTestbed => vec![0.0; self.param_dim()],
        }
    }

    /// Builds a validated parameter vector for this family.
    pub fn params(&self, values: Vec<f64>) -> Result<ParamVector> {
        if values.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: values.len(),
            });
        }
        let p = ParamVector::new(values, self.param_names())?;
        match self.bounds.clone().or_else(|| self.default_bounds()) {
            Some(b) => p.with_bounds(b),
            None => Ok(p),
        }
    }

    pub fn reference_params(&self) -> Result<ParamVector> {
        self.params(self.phi0.clone().unwrap_or_else(|| self.default_phi0()))
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps.unwrap_or(match self.family {
            EnvFamily::Cartpole => defaults::cartpole::MAX_STEPS,
            EnvFamily::Pendulum => defaults::pendulum::MAX_STEPS,
            EnvFamily::QuadTestbed => defaults::quad::MAX_STEPS,
        })
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_std == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        if self.family == EnvFamily::QuadTestbed {
            self.quad_spec().validate()?;
        }
        self.reference_params()?;
        Ok(())
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        let (state_dim, action_space, init_dist) = match self.family {
            EnvFamily::Cartpole => (
                4,
                ActionSpace::Discrete(2),
                "uniform on [-0.05, 0.05]^4 over (x, x_dot, theta, theta_dot)",
            ),
            EnvFamily::Pendulum => (
                3,
                ActionSpace::Box {
                    low: vec![-defaults::pendulum::MAX_TORQUE],
                    high: vec![defaults::pendulum::MAX_TORQUE],
                },
                "theta uniform on [-pi, pi], theta_dot uniform on [-1, 1]",
            ),
            EnvFamily::QuadTestbed => (
                self.param_dim(),
                ActionSpace::Box {
                    low: vec![-1.0],
                    high: vec![1.0],
                },
                "standard normal",
            ),
        };
        Ok(EnvSpec {
            family: self.family,
            state_dim,
            action_space,
            max_steps: self.max_steps(),
            init_dist,
            reference_params: self.reference_params()?,
        })
    }

    /// Creates a simulator with the given dynamics, seeded deterministically.
    pub fn make(&self, params: &ParamVector, seed: u64) -> Result<EnvHandle> {
        self.validate()?;
        let spec = self.spec()?;
        let params = self.checked(params)?;
        let quad = (self.family == EnvFamily::QuadTestbed).then(|| self.quad_spec());
        let mut env = EnvHandle {
            spec,
            params,
            noise_std: self.noise_std,
            quad,
            rng: rng::stream(seed, Purpose::Environment, 0),
            state: Vec::new(),
            t: 0,
            done: false,
        };
        env.reset();
        Ok(env)
    }

    fn checked(&self, params: &ParamVector) -> Result<ParamVector> {
        if params.dim() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: params.dim(),
            });
        }
        // Re-applies this family's bounds even if the caller built the vector by hand.
        self.params(params.values().to_vec())
    }
}

/// Convenience constructor using family defaults for everything but `params`.
pub fn make_env(family: EnvFamily, params: &ParamVector, seed: u64) -> Result<EnvHandle> {
    EnvSettings::new(family).make(params, seed)
}

/// A running simulator instance.
#[derive(Debug, Clone)]
pub struct EnvHandle {
    spec: EnvSpec,
    params: ParamVector,
    noise_std: f64,
    quad: Option<QuadSpec>,
    rng: ChaCha8Rng,
    state: Vec<f64>,
    t: usize,
    done: bool,
}

impl EnvHandle {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Restarts the handle's random stream as if it had been built with `seed`.
    /// The current episode state is kept.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = rng::stream(seed, Purpose::Environment, 0);
    }

    /// Overrides the episode step cap.
    pub fn set_max_steps(&mut self, max_steps: usize) -> Result<()> {
        if max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        self.spec.max_steps = max_steps;
        Ok(())
    }

    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        if params.dim() != self.params.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim(),
                got: params.dim(),
            });
        }
        self.params = self.params.with_values(params.values().to_vec())?;
        Ok(())
    }

    /// Starts a new episode from a fresh initial-state draw.
    pub fn reset(&mut self) -> Vec<f64> {
        self.state = match self.spec.family {
            EnvFamily::Cartpole => cartpole::initial_state(&mut self.rng),
            EnvFamily::Pendulum => pendulum::initial_state(&mut self.rng),
            EnvFamily::QuadTestbed => (0..self.spec.state_dim)
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect(),
        };
        self.t = 0;
        self.done = false;
        self.state.clone()
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.spec.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.state_dim,
                got: state.len(),
            });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "state has non-finite entries".into(),
            ));
        }
        Ok(())
    }

    /// Noise-free successor and reward.
    fn mean_transition(&self, state: &[f64], action: &Action) -> Result<(Vec<f64>, f64)> {
        self.spec.action_space.check(action)?;
        let p = self.params.values();
        match self.spec.family {
            EnvFamily::Cartpole => Ok((cartpole::step(p, state, action)?, 1.0)),
            EnvFamily::Pendulum => pendulum::step(p, state, action),
            EnvFamily::QuadTestbed => {
                let q = self.quad.as_ref().expect("quad spec present for testbed");
                Ok((quad::step(p, state), q.value(p)))
            }
        }
    }

    fn add_noise(&mut self, mut next: Vec<f64>) -> Vec<f64> {
        if self.noise_std > 0.0 {
            for v in next.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *v += self.noise_std * z;
            }
        }
        next
    }

    pub fn step(&mut self, action: &Action) -> Result<Transition> {
        if self.done {
            return Err(Error::InvalidArgument(
                "episode has finished; call reset() first".into(),
            ));
        }
        let (mean, reward) = self.mean_transition(&self.state, action)?;
        let next = self.add_noise(mean);
        self.t += 1;
        let failed = match self.spec.family {
            EnvFamily::Cartpole => cartpole::failed(&next),
            _ => false,
        };
        let capped = self.t >= self.spec.max_steps;
        let transition = Transition {
            state: std::mem::replace(&mut self.state, next.clone()),
            action: action.clone(),
            next_state: next,
            reward,
            done: failed || capped,
            truncated: capped && !failed,
        };
        self.done = transition.done;
        Ok(transition)
    }

    /// `n` independent successor draws from `(state, action)` under the
    /// current parameters. The episode in progress is not affected.
    pub fn next_state_samples(
        &mut self,
        state: &[f64],
        action: &Action,
        n: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        self.check_state(state)?;
        let (mean, _) = self.mean_transition(state, action)?;
        Ok((0..n).map(|_| self.add_noise(mean.clone())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cartpole(l: f64) -> Result<ParamVector> {
        EnvSettings::new(EnvFamily::Cartpole).params(vec![l])
    }

    #[test]
    fn make_cartpole_and_degenerate_pole() {
        let env = make_env(EnvFamily::Cartpole, &cartpole(1.0).unwrap(), 7).unwrap();
        assert_eq!(env.spec().state_dim, 4);
        assert_eq!(env.spec().action_space, ActionSpace::Discrete(2));
        let bad = ParamVector::unnamed(vec![0.0]).unwrap();
        assert!(matches!(
            make_env(EnvFamily::Cartpole, &bad, 0),
            Err(Error::InvalidParameter { .. })
        ));
        let two = ParamVector::unnamed(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            make_env(EnvFamily::Cartpole, &two, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn set_params_accepts_grid_extremes_and_round_trips() {
        let mut env = make_env(EnvFamily::Cartpole, &cartpole(1.0).unwrap(), 0).unwrap();
        env.set_params(&cartpole(0.3).unwrap()).unwrap();
        env.set_params(&cartpole(3.0).unwrap()).unwrap();
        assert_eq!(env.params().values(), &[3.0]);
        let wrong = ParamVector::unnamed(vec![1.0, 2.0]).unwrap();
        assert!(env.set_params(&wrong).is_err());
        let neg = ParamVector::unnamed(vec![-1.0]).unwrap();
        assert!(env.set_params(&neg).is_err());
    }

    #[test]
    fn cartpole_reward_and_angle_termination() {
        let mut env = make_env(EnvFamily::Cartpole, &cartpole(1.0).unwrap(), 1).unwrap();
        let t = env.step(&Action::Discrete(1)).unwrap();
        assert_eq!(t.reward, 1.0);
        assert!(!t.done);

        env.state = vec![0.0, 0.0, 0.2, 2.0];
        let t = env.step(&Action::Discrete(1)).unwrap();
        assert!(t.done && !t.truncated);
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn step_cap_truncates() {
        let settings = EnvSettings::new(EnvFamily::Pendulum).with_max_steps(3);
        let mut env = settings
            .make(&settings.reference_params().unwrap(), 0)
            .unwrap();
        let a = Action::Continuous(vec![0.0]);
        assert!(!env.step(&a).unwrap().done);
        assert!(!env.step(&a).unwrap().done);
        let last = env.step(&a).unwrap();
        assert!(last.done && last.truncated);
    }

    #[test]
    fn bad_actions_are_rejected() {
        let mut env = make_env(EnvFamily::Cartpole, &cartpole(1.0).unwrap(), 1).unwrap();
        assert!(env.step(&Action::Discrete(2)).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }

    #[test]
    fn pendulum_is_deterministic_given_seed() {
        let s = EnvSettings::new(EnvFamily::Pendulum).with_noise(0.1);
        let p = s.reference_params().unwrap();
        let run = || {
            let mut env = s.make(&p, 42).unwrap();
            (0..20)
                .map(|i| {
                    env.step(&Action::Continuous(vec![(i as f64).sin()]))
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn restoring_params_restores_behaviour() {
        let s = EnvSettings::new(EnvFamily::Cartpole).with_noise(0.01);
        let p0 = s.reference_params().unwrap();
        let mut fresh = s.make(&p0, 9).unwrap();
        let mut touched = s.make(&p0, 9).unwrap();
        touched.set_params(&cartpole(2.0).unwrap()).unwrap();
        touched.set_params(&p0).unwrap();
        let mut i = 0;
        while !fresh.is_done() {
            let a = Action::Discrete(i % 2);
            assert_eq!(fresh.step(&a).unwrap(), touched.step(&a).unwrap());
            i += 1;
        }
        assert!(touched.is_done());
    }

    #[test]
    fn deterministic_successors_are_identical() {
        let mut env = make_env(EnvFamily::Cartpole, &cartpole(1.0).unwrap(), 3).unwrap();
        let s = env.state().to_vec();
        let xs = env.next_state_samples(&s, &Action::Discrete(0), 5).unwrap();
        assert_eq!(xs.len(), 5);
        assert!(xs.iter().all(|x| x == &xs[0]));
        assert!(env.next_state_samples(&s, &Action::Discrete(0), 0).is_err());
        assert!(env
            .next_state_samples(&[0.0; 3], &Action::Discrete(0), 1)
            .is_err());
    }

    #[test]
    fn noisy_testbed_successor_mean_matches_clt_bound() {
        let sigma = 0.3;
        let s = EnvSettings::new(EnvFamily::QuadTestbed).with_noise(sigma);
        let phi = s.params(vec![0.2, -0.4, 1.0]).unwrap();
        let mut env = s.make(&phi, 11).unwrap();
        let state = [1.0, 2.0, 3.0];
        let n = 10_000;
        let xs = env
            .next_state_samples(&state, &Action::Continuous(vec![0.0]), n)
            .unwrap();
        for d in 0..3 {
            let mean = xs.iter().map(|x| x[d]).sum::<f64>() / n as f64;
            let expected = state[d] + phi.values()[d];
            assert!((mean - expected).abs() < 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn testbed_return_is_the_analytic_quadratic() {
        let s = EnvSettings::new(EnvFamily::QuadTestbed);
        let phi = s.params(vec![0.0, 0.0, 0.0]).unwrap();
        let mut env = s.make(&phi, 1).unwrap();
        let t = env.step(&Action::Continuous(vec![0.0])).unwrap();
        assert!(t.done);
        // c - 1/2 * 3 * 0.5^2
        assert_eq!(t.reward, 10.0 - 0.375);
    }
}
