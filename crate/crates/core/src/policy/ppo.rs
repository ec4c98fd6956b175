//! Clipped-surrogate policy optimization with a separate value network.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::head::{policy_entropy, Critic, PolicyParams};
use super::rollout::{collect_rollouts, RolloutBatch};
use crate::defaults::ppo as d;
use crate::envs::{EnvFamily, EnvSettings, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    /// Global gradient-norm clip; zero disables it.
    pub max_grad_norm: f64,
    /// Training stops once mean policy entropy drops below this (nats).
    /// Absent means the family default; use a very negative value to disable.
    pub entropy_stop_threshold: Option<f64>,
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    /// Transitions collected per policy update.
    pub n_transitions: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: d::CLIP_RATIO,
            policy_lr: d::POLICY_LR,
            critic_lr: d::CRITIC_LR,
            gae_lambda: d::GAE_LAMBDA,
            gamma: d::GAMMA,
            epochs: d::EPOCHS,
            minibatch_size: d::MINIBATCH,
            entropy_coef: d::ENTROPY_COEF,
            max_grad_norm: d::MAX_GRAD_NORM,
            entropy_stop_threshold: None,
            hidden: vec![d::HIDDEN, d::HIDDEN],
            n_transitions: d::N_TRANSITIONS,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        // Zero is allowed as the fully clipped limit.
        if !(0.0..1.0).contains(&self.clip_ratio) {
            return bad(format!(
                "clip_ratio must be in [0, 1), got {}",
                self.clip_ratio
            ));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!(
                "gae_lambda must be in [0, 1], got {}",
                self.gae_lambda
            ));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.n_transitions == 0 {
            return bad("epochs, minibatch_size and n_transitions must be >= 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths".into());
        }
        if !(self.policy_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }
}

/// Actor, critic and their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoLearner {
    pub policy: PolicyParams,
    pub critic: Critic,
    actor_opt: Adam,
    critic_opt: Adam,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateStats {
    /// Full-batch clipped surrogate before the first epoch and after each epoch.
    pub surrogate_by_epoch: Vec<f64>,
    pub value_loss: f64,
    /// Set when a non-finite loss aborted the update; parameters were restored.
    pub aborted: Option<String>,
}

impl PpoLearner {
    pub fn new(settings: &EnvSettings, cfg: &PpoConfig, seed: u64) -> Result<Self> {
        let spec = settings.spec()?;
        let mut rng = rng::stream(seed, Purpose::PolicyInit, 0);
        let policy = PolicyParams::new(spec.state_dim, &spec.action_space, &cfg.hidden, &mut rng);
        let critic = Critic::new(spec.state_dim, &cfg.hidden, &mut rng);
        Ok(Self::from_parts(policy, critic, cfg))
    }

    pub fn from_parts(policy: PolicyParams, critic: Critic, cfg: &PpoConfig) -> Self {
        let actor_opt = Adam::new(policy.num_params(), cfg.policy_lr);
        let critic_opt = Adam::new(critic.net.num_params(), cfg.critic_lr);
        Self {
            policy,
            critic,
            actor_opt,
            critic_opt,
        }
    }
}

/// Clipped surrogate `mean_t min(r_t A_t, clip(r_t, 1-c, 1+c) A_t)` plus
/// `entropy_coef * mean entropy` over `indices`, and its gradient with
/// respect to the policy's flat parameters.
///
/// The clipped branch contributes gradient only strictly inside the clip
/// interval, so a zero clip ratio yields a zero surrogate gradient.
pub fn surrogate_and_grad(
    policy: &PolicyParams,
    batch: &RolloutBatch,
    advantages: &[f64],
    indices: &[usize],
    clip_ratio: f64,
    entropy_coef: f64,
) -> (f64, Vec<f64>) {
    let n_actor = policy.actor.num_params();
    let mut grad = vec![0.0; policy.num_params()];
    let mut objective = 0.0;
    let scale = 1.0 / indices.len() as f64;
    for &t in indices {
        let trace = policy.actor.forward_trace(&batch.states[t]);
        let dist = policy.dist_from_output(trace.output().to_vec());
        let lp = dist.log_prob(&batch.actions[t]);
        let ratio = (lp - batch.log_probs[t]).exp();
        let adv = advantages[t];
        let clipped = ratio.clamp(1.0 - clip_ratio, 1.0 + clip_ratio);
        let unclipped_term = ratio * adv;
        let clipped_term = clipped * adv;
        objective += unclipped_term.min(clipped_term) * scale;
        let inside = ratio > 1.0 - clip_ratio && ratio < 1.0 + clip_ratio;
        let active = unclipped_term < clipped_term || inside;
        let w_lp = if active { ratio * adv * scale } else { 0.0 };
        let w_ent = entropy_coef * scale;
        if entropy_coef != 0.0 {
            objective += w_ent * dist.entropy();
        }
        if w_lp == 0.0 && w_ent == 0.0 {
            continue;
        }
        let (g_out, g_std) = dist.grads(&batch.actions[t], w_lp, w_ent);
        policy.actor.backward(&trace, &g_out, &mut grad[..n_actor]);
        for (g, s) in grad[n_actor..].iter_mut().zip(g_std) {
            *g += s;
        }
    }
    (objective, grad)
}

fn normalized(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// Runs `cfg.epochs` passes of minibatch clipped-surrogate ascent and
/// value regression on `batch`. Advantages are normalized per batch.
///
/// If any loss turns non-finite the learner is restored to its input state
/// and the returned stats carry the diagnostic.
pub fn ppo_update(
    learner: &mut PpoLearner,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<UpdateStats> {
    cfg.validate()?;
    if batch.is_empty() || batch.advantages.len() != batch.len() {
        return Err(Error::InvalidArgument(
            "batch must be non-empty with advantages computed".into(),
        ));
    }
    let snapshot = learner.clone();
    let adv = normalized(&batch.advantages);
    let all: Vec<usize> = (0..batch.len()).collect();
    let mut rng = rng::stream(seed, Purpose::PpoShuffle, 0);
    let mut stats = UpdateStats::default();

    let full_surrogate =
        |p: &PolicyParams| surrogate_and_grad(p, batch, &adv, &all, cfg.clip_ratio, 0.0).0;
    stats
        .surrogate_by_epoch
        .push(full_surrogate(&learner.policy));

    let mut order = all.clone();
    let mut value_loss = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        value_loss = 0.0;
        for mb in order.chunks(cfg.minibatch_size) {
            let (obj, mut grad) = surrogate_and_grad(
                &learner.policy,
                batch,
                &adv,
                mb,
                cfg.clip_ratio,
                cfg.entropy_coef,
            );
            // Ascent on the surrogate is descent on its negation.
            grad.iter_mut().for_each(|g| *g = -*g);
            clip_grad_norm(&mut grad, cfg.max_grad_norm);

            let mut vgrad = vec![0.0; learner.critic.net.num_params()];
            let mut vloss = 0.0;
            let scale = 1.0 / mb.len() as f64;
            for &t in mb {
                let trace = learner.critic.net.forward_trace(&batch.states[t]);
                let err = trace.output()[0] - batch.returns[t];
                vloss += 0.5 * err * err * scale;
                learner
                    .critic
                    .net
                    .backward(&trace, &[err * scale], &mut vgrad);
            }
            clip_grad_norm(&mut vgrad, cfg.max_grad_norm);

            if !obj.is_finite()
                || !vloss.is_finite()
                || grad.iter().chain(&vgrad).any(|g| !g.is_finite())
            {
                let msg =
                    format!("non-finite loss (surrogate {obj}, value {vloss}); update skipped");
                log::warn!("{msg}");
                *learner = snapshot;
                stats.aborted = Some(msg);
                return Ok(stats);
            }

            let mut flat = learner.policy.flat();
            learner.actor_opt.step(&mut flat, &grad);
            learner.policy.set_flat(&flat);
            learner
                .critic_opt
                .step(learner.critic.net.params_mut(), &vgrad);
            value_loss += vloss * mb.len() as f64 / batch.len() as f64;
        }
        stats
            .surrogate_by_epoch
            .push(full_surrogate(&learner.policy));
    }
    stats.value_loss = value_loss;
    Ok(stats)
}

/// Per-iteration record of a policy-optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoIteration {
    pub return_mean: f64,
    pub entropy: f64,
    pub transitions: usize,
}

/// Seeds used by outer iteration `k` of a training run.
pub(crate) fn iteration_seeds(seed: u64, k: usize) -> (u64, u64) {
    (
        derive_seed(seed, Purpose::Rollout, k as u64),
        derive_seed(seed, Purpose::PpoShuffle, k as u64),
    )
}

/// One collect-and-update step at dynamics `phi`; shared by plain and robust training.
pub(crate) fn policy_iteration(
    learner: &mut PpoLearner,
    settings: &EnvSettings,
    phi: &ParamVector,
    cfg: &PpoConfig,
    seed: u64,
    k: usize,
) -> Result<(PpoIteration, UpdateStats)> {
    let (rollout_seed, update_seed) = iteration_seeds(seed, k);
    let mut batch = collect_rollouts(
        &learner.policy,
        &learner.critic,
        settings,
        phi,
        cfg.n_transitions,
        rollout_seed,
    )?;
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
    let stats = ppo_update(learner, &batch, cfg, update_seed)?;
    let entropy = policy_entropy(&learner.policy, &batch.states)?;
    Ok((
        PpoIteration {
            return_mean: batch.mean_episode_return(),
            entropy,
            transitions: batch.len(),
        },
        stats,
    ))
}

/// Entropy stop threshold from `cfg`, or the family default.
pub fn entropy_stop_threshold(cfg: &PpoConfig, family: EnvFamily) -> f64 {
    cfg.entropy_stop_threshold.unwrap_or(match family {
        EnvFamily::Cartpole => crate::defaults::cartpole::ENTROPY_STOP,
        EnvFamily::Pendulum => crate::defaults::pendulum::ENTROPY_STOP,
        EnvFamily::QuadTestbed => crate::defaults::quad::ENTROPY_STOP,
    })
}

/// Plain policy optimization on fixed dynamics `phi`.
///
/// Stops after `iters` updates or once entropy drops below the configured
/// threshold.
pub fn train_ppo(
    settings: &EnvSettings,
    phi: &ParamVector,
    cfg: &PpoConfig,
    iters: usize,
    seed: u64,
) -> Result<(PpoLearner, Vec<PpoIteration>)> {
    cfg.validate()?;
    let mut learner = PpoLearner::new(settings, cfg, derive_seed(seed, Purpose::PolicyInit, 0))?;
    let threshold = entropy_stop_threshold(cfg, settings.family);
    let mut history = Vec::with_capacity(iters);
    for k in 0..iters {
        let (it, _) = policy_iteration(&mut learner, settings, phi, cfg, seed, k)?;
        let stop = it.entropy < threshold;
        history.push(it);
        if stop {
            break;
        }
    }
    Ok((learner, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(
        family: EnvFamily,
        hidden: usize,
        n: usize,
        seed: u64,
    ) -> (PpoLearner, RolloutBatch, PpoConfig) {
        let settings = EnvSettings::new(family);
        let cfg = PpoConfig {
            hidden: vec![hidden, hidden],
            n_transitions: n,
            ..PpoConfig::default()
        };
        let learner = PpoLearner::new(&settings, &cfg, seed).unwrap();
        let phi = settings.reference_params().unwrap();
        let mut batch =
            collect_rollouts(&learner.policy, &learner.critic, &settings, &phi, n, seed).unwrap();
        batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
        (learner, batch, cfg)
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let (mut learner, mut batch, cfg) = setup(EnvFamily::Pendulum, 8, 200, 1);
        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let before = learner.policy.clone();
        ppo_update(&mut learner, &batch, &cfg, 0).unwrap();
        assert_eq!(learner.policy, before);
    }

    #[test]
    fn zero_clip_ratio_has_zero_policy_gradient() {
        let (learner, batch, _) = setup(EnvFamily::Cartpole, 8, 100, 2);
        let adv = normalized(&batch.advantages);
        let idx: Vec<usize> = (0..batch.len()).collect();
        let (_, g) = surrogate_and_grad(&learner.policy, &batch, &adv, &idx, 0.0, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        let (_, g) = surrogate_and_grad(&learner.policy, &batch, &adv, &idx, 0.2, 0.0);
        assert!(g.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn surrogate_improves_over_epochs_in_most_trials() {
        let mut good = 0;
        for seed in 0..20 {
            let (mut learner, batch, cfg) = setup(EnvFamily::Pendulum, 16, 400, seed);
            let stats =
                ppo_update(&mut learner, &batch, &PpoConfig { epochs: 4, ..cfg }, seed).unwrap();
            if stats.surrogate_by_epoch.windows(2).all(|w| w[1] >= w[0]) {
                good += 1;
            }
        }
        assert!(good >= 16, "only {good}/20 monotone");
    }

    #[test]
    fn non_finite_batch_aborts_and_restores() {
        let (mut learner, mut batch, cfg) = setup(EnvFamily::Pendulum, 8, 200, 3);
        batch.returns[0] = f64::NAN;
        let before = learner.clone();
        let stats = ppo_update(&mut learner, &batch, &cfg, 0).unwrap();
        assert!(stats.aborted.is_some());
        assert_eq!(learner, before);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig {
            gamma: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PpoConfig {
            clip_ratio: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PpoConfig::default().validate().is_ok());
    }
}
