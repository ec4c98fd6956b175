use rand::Rng;
use rayon::prelude::*;

use super::head::{Critic, PolicyParams};
use crate::defaults::ppo as d;
use crate::envs::{Action, EnvHandle, EnvSettings, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, Purpose};

/// How actions are chosen when running a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    /// Mean (continuous) or most likely (discrete) action.
    Deterministic,
}

/// One recorded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Ended by failure (not by the step cap).
    pub terminal: bool,
    /// State after the last step.
    pub final_state: Vec<f64>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn choose<R: Rng>(
    policy: &PolicyParams,
    state: &[f64],
    rng: &mut R,
    mode: ActionMode,
) -> Result<(Action, f64)> {
    let dist = policy.distribution(state)?;
    let a = match mode {
        ActionMode::Stochastic => dist.sample(rng),
        ActionMode::Deterministic => dist.mode(),
    };
    let lp = dist.log_prob(&a);
    Ok((a, lp))
}

/// Runs one episode from a fresh reset, recording every step.
pub fn run_episode<R: Rng>(
    policy: &PolicyParams,
    env: &mut EnvHandle,
    rng: &mut R,
    mode: ActionMode,
) -> Result<Episode> {
    let mut ep = Episode {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        log_probs: Vec::new(),
        terminal: false,
        final_state: Vec::new(),
    };
    let mut state = env.reset();
    loop {
        let (a, lp) = choose(policy, &state, rng, mode)?;
        let t = env.step(&a)?;
        ep.states.push(std::mem::take(&mut state));
        ep.actions.push(a);
        ep.rewards.push(t.reward);
        ep.log_probs.push(lp);
        state = t.next_state;
        if t.done {
            ep.terminal = !t.truncated;
            ep.final_state = state;
            return Ok(ep);
        }
    }
}

/// Undiscounted return of one episode, without recording it.
pub fn episode_return<R: Rng>(
    policy: &PolicyParams,
    env: &mut EnvHandle,
    rng: &mut R,
    mode: ActionMode,
) -> Result<f64> {
    let mut state = env.reset();
    let mut total = 0.0;
    loop {
        let (a, _) = choose(policy, &state, rng, mode)?;
        let t = env.step(&a)?;
        total += t.reward;
        if t.done {
            return Ok(total);
        }
        state = t.next_state;
    }
}

/// Builds the environment and action RNG for episode `index` under `seed`.
pub fn episode_setup(
    settings: &EnvSettings,
    phi: &ParamVector,
    seed: u64,
    index: u64,
) -> Result<(EnvHandle, rand_chacha::ChaCha8Rng)> {
    let env = settings.make(phi, derive_seed(seed, Purpose::Environment, index))?;
    Ok((env, rng::stream(seed, Purpose::Rollout, index)))
}

/// Mean undiscounted return of `episodes` stochastic-policy episodes under `phi`.
pub fn mean_return(
    policy: &PolicyParams,
    settings: &EnvSettings,
    phi: &ParamVector,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let returns = episode_returns(policy, settings, phi, episodes, seed, ActionMode::Stochastic)?;
    Ok(returns.iter().sum::<f64>() / episodes as f64)
}

/// Undiscounted returns of `episodes` independent episodes at `phi`.
/// Episode `e` uses stream `e` of `seed`.
pub fn episode_returns(
    policy: &PolicyParams,
    settings: &EnvSettings,
    phi: &ParamVector,
    episodes: usize,
    seed: u64,
    mode: ActionMode,
) -> Result<Vec<f64>> {
    (0..episodes as u64)
        .map(|e| {
            let (mut env, mut rng) = episode_setup(settings, phi, seed, e)?;
            episode_return(policy, &mut env, &mut rng, mode)
        })
        .collect()
}

/// Flat batch of transitions from complete episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// Log-probabilities under the collecting policy.
    pub log_probs: Vec<f64>,
    /// Critic predictions at `states`.
    pub values: Vec<f64>,
    /// Value of the successor state: the next stored value inside an episode,
    /// the critic at the final state after truncation, zero after failure.
    pub next_values: Vec<f64>,
    /// Last step of an episode.
    pub episode_end: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Undiscounted total reward per episode.
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Assembles a batch from recorded episodes, querying the critic for values.
    pub fn from_episodes(episodes: Vec<Episode>, critic: &Critic) -> Self {
        let total: usize = episodes.iter().map(Episode::len).sum();
        let mut b = RolloutBatch {
            states: Vec::with_capacity(total),
            actions: Vec::with_capacity(total),
            rewards: Vec::with_capacity(total),
            log_probs: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
            next_values: Vec::with_capacity(total),
            episode_end: Vec::with_capacity(total),
            advantages: Vec::new(),
            returns: Vec::new(),
            episode_returns: Vec::with_capacity(episodes.len()),
            episode_lengths: Vec::with_capacity(episodes.len()),
        };
        for ep in episodes {
            let n = ep.len();
            b.episode_returns.push(ep.total_reward());
            b.episode_lengths.push(n);
            let values: Vec<f64> = ep.states.iter().map(|s| critic.value(s)).collect();
            let last_next = if ep.terminal {
                0.0
            } else {
                critic.value(&ep.final_state)
            };
            for t in 0..n {
                b.next_values
                    .push(if t + 1 < n { values[t + 1] } else { last_next });
                b.episode_end.push(t + 1 == n);
            }
            b.values.extend(values);
            b.states.extend(ep.states);
            b.actions.extend(ep.actions);
            b.rewards.extend(ep.rewards);
            b.log_probs.extend(ep.log_probs);
        }
        b
    }

    /// Fills `advantages` and `returns` by generalized advantage estimation.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (adv, ret) = gae(
            &self.rewards,
            &self.values,
            &self.next_values,
            &self.episode_end,
            gamma,
            lambda,
        );
        self.advantages = adv;
        self.returns = ret;
    }

    pub fn mean_episode_return(&self) -> f64 {
        if self.episode_returns.is_empty() {
            return 0.0;
        }
        self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64
    }
}

/// Generalized advantage estimation.
///
/// `delta_t = r_t + gamma * next_values[t] - values[t]` and
/// `A_t = delta_t + gamma * lambda * A_{t+1}`, restarting at episode ends.
/// Returns `(advantages, advantages + values)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if episode_end[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Collects complete episodes under `phi` until at least `n_transitions`
/// steps are gathered.
///
/// Episode `e` always uses streams derived from `(seed, e)`. Episodes run in
/// fixed-size parallel waves and are appended in index order; surplus
/// episodes of the final wave are discarded, so the batch is independent of
/// the number of worker threads.
pub fn collect_rollouts(
    policy: &PolicyParams,
    critic: &Critic,
    settings: &EnvSettings,
    phi: &ParamVector,
    n_transitions: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    if n_transitions == 0 {
        return Err(Error::InvalidArgument("n_transitions must be >= 1".into()));
    }
    let mut episodes = Vec::new();
    let mut collected = 0;
    let mut next_index = 0u64;
    while collected < n_transitions {
        let wave: Vec<Result<Episode>> = (next_index..next_index + d::ROLLOUT_WAVE as u64)
            .into_par_iter()
            .map(|e| {
                let (mut env, mut rng) = episode_setup(settings, phi, seed, e)?;
                run_episode(policy, &mut env, &mut rng, ActionMode::Stochastic)
            })
            .collect();
        next_index += d::ROLLOUT_WAVE as u64;
        for ep in wave {
            if collected >= n_transitions {
                break;
            }
            let ep = ep?;
            collected += ep.len();
            episodes.push(ep);
        }
    }
    Ok(RolloutBatch::from_episodes(episodes, critic))
}
