//! Every numeric default used by the crate, in one place.
//!
//! Config files override these; nothing else in the crate hard-codes a tuning
//! constant. Physical constants of the simulators live here too so that a
//! run's resolved configuration fully describes its dynamics.

/// Cart-pole (classic textbook ODE, explicit Euler).
pub mod cartpole {
    pub const GRAVITY: f64 = 9.8;
    pub const CART_MASS: f64 = 1.0;
    pub const POLE_MASS: f64 = 0.1;
    pub const FORCE_MAG: f64 = 10.0;
    pub const DT: f64 = 0.02;
    /// 12 degrees.
    pub const THETA_MAX: f64 = 12.0 * std::f64::consts::PI / 180.0;
    pub const X_MAX: f64 = 2.4;
    pub const MAX_STEPS: usize = 1000;
    /// Full pole length of the reference system.
    pub const POLE_LENGTH: f64 = 1.0;
    pub const POLE_LENGTH_BOUNDS: (f64, f64) = (0.05, 10.0);
    /// Initial state is uniform on `[-INIT_RANGE, INIT_RANGE]^4`.
    pub const INIT_RANGE: f64 = 0.05;
    /// Entropy (nats) below which training stops; categorical over two actions.
    pub const ENTROPY_STOP: f64 = 0.3;
}

/// Torque-controlled pendulum swing-up.
pub mod pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const DT: f64 = 0.05;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_STEPS: usize = 200;
    pub const LENGTH: f64 = 1.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH_BOUNDS: (f64, f64) = (0.05, 10.0);
    pub const MASS_BOUNDS: (f64, f64) = (0.05, 10.0);
    /// Continuous-action entropy stop threshold (nats).
    pub const ENTROPY_STOP: f64 = -0.5;
}

/// Synthetic quadratic testbed, `J(phi) = c - 1/2 (phi - phi*)' A (phi - phi*)`.
pub mod quad {
    pub const DIM: usize = 3;
    pub const OFFSET: f64 = 10.0;
    pub const TARGET: f64 = 0.5;
    pub const MAX_STEPS: usize = 1;
    pub const ENTROPY_STOP: f64 = -0.5;
}

/// Environment transition noise (standard deviation of additive Gaussian).
pub const NOISE_STD: f64 = 0.0;

/// Wasserstein evaluation.
pub mod wasserstein {
    /// Successor samples per (s, a) for noise-free (Dirac) dynamics.
    pub const N_NEXT_DETERMINISTIC: usize = 1;
    /// Successor samples per (s, a) for stochastic dynamics.
    pub const N_NEXT_STOCHASTIC: usize = 32;
    pub const BUCKET_PAIRS: usize = 1000;
}

/// Zero-order estimation.
pub mod zo {
    /// Perturbation scale relative to the parameter scale.
    pub const SIGMA_REL: f64 = 0.05;
    pub const GRAD_SAMPLES: usize = 16;
    pub const HESSIAN_SAMPLES: usize = 2000;
    pub const ANTITHETIC: bool = true;
    /// Episodes averaged per return evaluation.
    pub const EPISODES_PER_EVAL: usize = 2;
    /// Resampling attempts for a perturbation landing outside physical bounds.
    pub const MAX_RESAMPLE: usize = 100;
    /// Hessian eigenvalue floor is `MIN_EIG_REL * max(1, lambda_max)`.
    pub const MIN_EIG_REL: f64 = 1e-3;
}

/// Policy and PPO.
pub mod ppo {
    pub const HIDDEN: usize = 64;
    pub const CLIP_RATIO: f64 = 0.2;
    pub const POLICY_LR: f64 = 3e-4;
    pub const CRITIC_LR: f64 = 1e-3;
    pub const GAE_LAMBDA: f64 = 0.95;
    pub const GAMMA: f64 = 0.99;
    pub const EPOCHS: usize = 10;
    pub const MINIBATCH: usize = 64;
    pub const ENTROPY_COEF: f64 = 0.0;
    pub const MAX_GRAD_NORM: f64 = 0.5;
    pub const INIT_LOG_STD: f64 = 0.0;
    pub const LOG_STD_MIN: f64 = -20.0;
    pub const LOG_STD_MAX: f64 = 2.0;
    pub const N_TRANSITIONS: usize = 5000;
    /// Episodes collected per parallel wave during rollouts.
    pub const ROLLOUT_WAVE: usize = 8;
}

/// Outer/inner loop of the robust trainer.
pub mod wr2l {
    pub const OUTER_ITERS: usize = 50;
    pub const INNER_MAX_ITERS: usize = 30;
    pub const INNER_GRAD_TOL: f64 = 0.0;
    pub const INNER_GRAD_REL_TOL: f64 = 0.01;
    pub const WOLFE_C1: f64 = 1e-4;
    pub const WOLFE_C2: f64 = 0.9;
    pub const ALPHA_INIT: f64 = 1.0;
    pub const ALPHA_MIN: f64 = 1e-3;
    pub const MAX_LINE_SEARCH_EVALS: usize = 10;
    /// Episodes per return evaluation during the line search.
    pub const LINE_SEARCH_EPISODES: usize = 8;
    /// Restart each inner loop from the reference instead of the last worst case.
    pub const RESET_INNER: bool = false;
    /// Tolerance on the ellipsoid constraint for accepted iterates.
    pub const CONSTRAINT_TOL: f64 = 1e-6;
}

/// Robustness evaluation.
pub mod eval {
    pub const EPISODES_PER_POINT: usize = 20;
    pub const MAX_EPISODE_LEN: usize = 1000;
    pub const CARTPOLE_GRID: (f64, f64, usize) = (0.3, 3.0, 28);
}
