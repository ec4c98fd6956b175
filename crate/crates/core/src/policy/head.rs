//! Stochastic policy: MLP features mapped to a categorical (discrete actions)
//! or diagonal Gaussian (continuous actions) distribution.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::Mlp;
use crate::defaults::ppo as d;
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub enum HeadKind {
    Categorical { n: usize },
    Gaussian { low: Vec<f64>, high: Vec<f64> },
}

/// Policy parameters: the actor network and, for continuous actions, a free
/// per-dimension log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub kind: HeadKind,
}

/// Action distribution at one state.
#[derive(Debug, Clone)]
pub enum ActionDist {
    Categorical {
        log_probs: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        log_std: Vec<f64>,
        clamped: Vec<bool>,
    },
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ActionDist {
    pub fn log_prob(&self, action: &Action) -> f64 {
        match (self, action) {
            (ActionDist::Categorical { log_probs }, Action::Discrete(a)) => log_probs[*a],
            (ActionDist::Gaussian { mean, log_std, .. }, Action::Continuous(a)) => mean
                .iter()
                .zip(log_std)
                .zip(a)
                .map(|((m, s), x)| {
                    let z = (x - m) / s.exp();
                    -0.5 * z * z - s - HALF_LN_2PI
                })
                .sum(),
            _ => f64::NAN,
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { log_probs } => {
                -log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>()
            }
            ActionDist::Gaussian { log_std, .. } => {
                log_std.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum()
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Action {
        match self {
            ActionDist::Categorical { log_probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, lp) in log_probs.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        return Action::Discrete(k);
                    }
                }
                Action::Discrete(log_probs.len() - 1)
            }
            ActionDist::Gaussian { mean, log_std, .. } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + s.exp() * z
                    })
                    .collect(),
            ),
        }
    }

    /// Most likely action.
    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Categorical { log_probs } => {
                // First maximum on ties, like a conventional argmax.
                let mut best = 0;
                for (k, lp) in log_probs.iter().enumerate() {
                    if *lp > log_probs[best] {
                        best = k;
                    }
                }
                Action::Discrete(best)
            }
            ActionDist::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    /// Gradients of `w_lp * log_prob(action) + w_ent * entropy` with respect
    /// to the network output and to the raw log-std parameters.
    pub fn grads(&self, action: &Action, w_lp: f64, w_ent: f64) -> (Vec<f64>, Vec<f64>) {
        match (self, action) {
            (ActionDist::Categorical { log_probs }, Action::Discrete(a)) => {
                let h = self.entropy();
                let out = log_probs
                    .iter()
                    .enumerate()
                    .map(|(k, lp)| {
                        let p = lp.exp();
                        let onehot = if k == *a { 1.0 } else { 0.0 };
                        w_lp * (onehot - p) - w_ent * p * (lp + h)
                    })
                    .collect();
                (out, Vec::new())
            }
            (
                ActionDist::Gaussian {
                    mean,
                    log_std,
                    clamped,
                },
                Action::Continuous(x),
            ) => {
                let mut g_mean = Vec::with_capacity(mean.len());
                let mut g_std = Vec::with_capacity(mean.len());
                for k in 0..mean.len() {
                    let var = (2.0 * log_std[k]).exp();
                    let diff = x[k] - mean[k];
                    g_mean.push(w_lp * diff / var);
                    g_std.push(if clamped[k] {
                        0.0
                    } else {
                        w_lp * (diff * diff / var - 1.0) + w_ent
                    });
                }
                (g_mean, g_std)
            }
            _ => panic!("action does not match distribution"),
        }
    }
}

impl PolicyParams {
    pub fn new<R: Rng>(
        state_dim: usize,
        space: &ActionSpace,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(space.dim());
        let actor = Mlp::new(&sizes, 0.01, rng);
        let (kind, log_std) = match space {
            ActionSpace::Discrete(n) => (HeadKind::Categorical { n: *n }, Vec::new()),
            ActionSpace::Box { low, high } => (
                HeadKind::Gaussian {
                    low: low.clone(),
                    high: high.clone(),
                },
                vec![d::INIT_LOG_STD; low.len()],
            ),
        };
        Self {
            actor,
            log_std,
            kind,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.log_std.len()
    }

    /// Actor parameters followed by log-std.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.actor.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.actor.num_params();
        self.actor.params_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
    }

    pub(crate) fn dist_from_output(&self, out: Vec<f64>) -> ActionDist {
        match self.kind {
            HeadKind::Categorical { .. } => ActionDist::Categorical {
                log_probs: log_softmax(&out),
            },
            HeadKind::Gaussian { .. } => {
                let clamped = self
                    .log_std
                    .iter()
                    .map(|s| !(d::LOG_STD_MIN..=d::LOG_STD_MAX).contains(s))
                    .collect();
                ActionDist::Gaussian {
                    mean: out,
                    log_std: self
                        .log_std
                        .iter()
                        .map(|s| s.clamp(d::LOG_STD_MIN, d::LOG_STD_MAX))
                        .collect(),
                    clamped,
                }
            }
        }
    }

    pub fn distribution(&self, state: &[f64]) -> Result<ActionDist> {
        if state.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        let out = self.actor.forward(state);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Estimator(
                "policy network produced a non-finite output".into(),
            ));
        }
        Ok(self.dist_from_output(out))
    }

    /// Draws an action and returns it with its log-probability.
    pub fn sample_action<R: Rng>(&self, state: &[f64], rng: &mut R) -> Result<(Action, f64)> {
        let dist = self.distribution(state)?;
        let a = dist.sample(rng);
        let lp = dist.log_prob(&a);
        Ok((a, lp))
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Action> {
        Ok(self.distribution(state)?.mode())
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> Result<f64> {
        Ok(self.distribution(state)?.log_prob(action))
    }
}

/// Mean entropy of the policy over `states`.
pub fn policy_entropy(policy: &PolicyParams, states: &[Vec<f64>]) -> Result<f64> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in states {
        total += policy.distribution(s)?.entropy();
    }
    Ok(total / states.len() as f64)
}

/// State-value network with the same hidden structure as the actor.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    /// The output layer starts at zero, so initial values are exactly zero.
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            net: Mlp::new(&sizes, 0.0, rng),
        }
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.net.forward(state)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_policy(log_std: f64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = ActionSpace::Box {
            low: vec![-2.0],
            high: vec![2.0],
        };
        let mut p = PolicyParams::new(3, &space, &[8, 8], &mut rng);
        p.log_std = vec![log_std];
        p
    }

    #[test]
    fn gaussian_entropy_closed_form() {
        let p = gaussian_policy(0.0);
        let h = policy_entropy(&p, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert!((h - 1.418_938_533_204_672_7).abs() < 1e-12);
        let p2 = gaussian_policy(2f64.ln());
        let h2 = policy_entropy(&p2, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert!((h2 - h - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_categorical_entropy() {
        let d = ActionDist::Categorical {
            log_probs: vec![0.5f64.ln(); 2],
        };
        assert!((d.entropy() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn clamped_log_std_samples_the_mean() {
        let p = gaussian_policy(-1e6);
        let s = [0.4, -0.2, 0.9];
        let mean = p.actor.forward(&s)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let (a, _) = p.sample_action(&s, &mut rng).unwrap();
            match a {
                Action::Continuous(v) => assert!((v[0] - mean).abs() < 1e-7),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = gaussian_policy(0.0);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            (0..5)
                .map(|_| p.sample_action(&[0.0; 3], &mut rng).unwrap().1)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn log_prob_decreases_away_from_the_mean() {
        let p = gaussian_policy(-0.3);
        let s = [0.2, 0.1, -0.5];
        let mean = p.actor.forward(&s)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, lp) = p.sample_action(&s, &mut rng).unwrap();
            let Action::Continuous(v) = a else {
                unreachable!()
            };
            let dist = v[0] - mean;
            let farther = Action::Continuous(vec![mean - 1.5 * dist]);
            assert!(lp >= p.log_prob(&s, &farther).unwrap());
        }
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        let p = gaussian_policy(0.2);
        let s = [0.0; 3];
        // Monte-Carlo over a uniform proposal on [-10, 10].
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = rng.random_range(-10.0..10.0);
            acc += p.log_prob(&s, &Action::Continuous(vec![x])).unwrap().exp() * 20.0;
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn wrong_state_dimension_is_an_error() {
        let p = gaussian_policy(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(p.sample_action(&[0.0; 4], &mut rng).is_err());
    }
}
