//! Neural policies, rollouts and clipped-surrogate policy optimization.

mod adam;
mod checkpoint;
mod head;
mod mlp;
mod ppo;
mod rollout;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::Checkpoint;
pub use head::{policy_entropy, ActionDist, Critic, HeadKind, PolicyParams};
pub use mlp::{Mlp, Trace};
pub(crate) use ppo::policy_iteration;
pub use ppo::{
    entropy_stop_threshold, ppo_update, surrogate_and_grad, train_ppo, PpoConfig, PpoIteration,
    PpoLearner, UpdateStats,
};
pub use rollout::{
    collect_rollouts, episode_return, episode_returns, episode_setup, gae, mean_return, run_episode, ActionMode, Episode,
    RolloutBatch,
};
