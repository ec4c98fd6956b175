//! The alternating robust training loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::closed_form::SolveMethod;
use super::inner::{inner_loop, sample_in_ellipsoid, InnerContext, InnerLimits};
use super::line_search::WolfeConfig;
use super::closed_form::constraint_value;
use super::objective::{DynamicsObjective, ZoReturnObjective};
use crate::defaults::{wasserstein as dw, wr2l as d, zo as dz};
use crate::envs::{EnvSettings, ParamVector};
use crate::error::{Error, Result};
use crate::policy::{entropy_stop_threshold, policy_iteration, PpoConfig, PpoLearner};
use crate::rng::{derive_seed, Purpose};
use crate::wasserstein::{build_bucket, default_n_next, StateActionBucket};
use crate::zo::{estimate_w2_hessian_with_floor, HessianEstimate, ZoConfig};

/// Zero-order return-gradient settings for Phase I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientConfig {
    /// Perturbation scale; defaults to a fraction of the reference scale.
    pub sigma: Option<f64>,
    pub n_samples: usize,
    pub antithetic: bool,
    pub episodes_per_eval: usize,
    pub line_search_episodes: usize,
    pub max_resample: usize,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            n_samples: dz::GRAD_SAMPLES,
            antithetic: dz::ANTITHETIC,
            episodes_per_eval: dz::EPISODES_PER_EVAL,
            line_search_episodes: d::LINE_SEARCH_EPISODES,
            max_resample: dz::MAX_RESAMPLE,
        }
    }
}

/// Settings for the one-off Hessian estimate at the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HessianConfig {
    pub sigma: Option<f64>,
    pub n_samples: usize,
    pub antithetic: bool,
    pub bucket_pairs: usize,
    /// Successor samples per pair; chosen from the noise level when absent.
    pub n_next: Option<usize>,
    pub min_eig_rel: f64,
    pub max_resample: usize,
}

impl Default for HessianConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            n_samples: dz::HESSIAN_SAMPLES,
            antithetic: dz::ANTITHETIC,
            bucket_pairs: dw::BUCKET_PAIRS,
            n_next: None,
            min_eig_rel: dz::MIN_EIG_REL,
            max_resample: dz::MAX_RESAMPLE,
        }
    }
}

/// Default perturbation scale: a fixed fraction of the RMS reference value.
pub fn default_sigma(phi0: &ParamVector) -> f64 {
    let v = phi0.values();
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    dz::SIGMA_REL * if rms > 0.0 { rms } else { 1.0 }
}

impl GradientConfig {
    pub fn zo_config(&self, phi0: &ParamVector) -> ZoConfig {
        let mut z = ZoConfig::new(
            self.sigma.unwrap_or_else(|| default_sigma(phi0)),
            self.n_samples,
            self.antithetic,
            0,
        );
        z.max_resample = self.max_resample;
        z
    }
}

impl HessianConfig {
    pub fn zo_config(&self, phi0: &ParamVector, seed: u64) -> ZoConfig {
        let mut z = ZoConfig::new(
            self.sigma.unwrap_or_else(|| default_sigma(phi0)),
            self.n_samples,
            self.antithetic,
            seed,
        );
        z.max_resample = self.max_resample;
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wr2lConfig {
    /// Radius of the Wasserstein ball. Zero gives plain policy optimization.
    pub epsilon: f64,
    #[serde(default = "default_outer_iters")]
    pub outer_iters: usize,
    #[serde(default = "default_inner_max_iters")]
    pub inner_max_iters: usize,
    #[serde(default = "default_inner_grad_tol")]
    pub inner_grad_tol: f64,
    #[serde(default = "default_inner_grad_rel_tol")]
    pub inner_grad_rel_tol: f64,
    /// Start every inner loop at the reference rather than the last worst case.
    #[serde(default = "default_reset_inner")]
    pub reset_inner: bool,
    /// Extra inner loops per outer iteration, each started at a uniform draw
    /// from the ellipsoid. The worst of all results is kept.
    #[serde(default)]
    pub inner_restarts: usize,
    #[serde(default)]
    pub solver: SolveMethod,
    #[serde(default)]
    pub line_search: WolfeConfig,
    #[serde(default)]
    pub gradient: GradientConfig,
    #[serde(default)]
    pub hessian: HessianConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
}

fn default_outer_iters() -> usize {
    d::OUTER_ITERS
}
fn default_inner_max_iters() -> usize {
    d::INNER_MAX_ITERS
}
fn default_inner_grad_tol() -> f64 {
    d::INNER_GRAD_TOL
}
fn default_inner_grad_rel_tol() -> f64 {
    d::INNER_GRAD_REL_TOL
}
fn default_reset_inner() -> bool {
    d::RESET_INNER
}

impl Wr2lConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            outer_iters: d::OUTER_ITERS,
            inner_max_iters: d::INNER_MAX_ITERS,
            inner_grad_tol: d::INNER_GRAD_TOL,
            inner_grad_rel_tol: d::INNER_GRAD_REL_TOL,
            reset_inner: d::RESET_INNER,
            inner_restarts: 0,
            solver: SolveMethod::default(),
            line_search: WolfeConfig::default(),
            gradient: GradientConfig::default(),
            hessian: HessianConfig::default(),
            ppo: PpoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.inner_grad_tol.is_nan()
            || self.inner_grad_tol < 0.0
            || !(self.inner_grad_rel_tol >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "inner gradient tolerances must be >= 0".into(),
            ));
        }
        let g = &self.gradient;
        if g.episodes_per_eval == 0 || g.line_search_episodes == 0 {
            return Err(Error::InvalidArgument(
                "episode budgets must be >= 1".into(),
            ));
        }
        if self.hessian.bucket_pairs == 0 || self.hessian.n_next == Some(0) {
            return Err(Error::InvalidArgument(
                "bucket_pairs and n_next must be >= 1".into(),
            ));
        }
        if !(self.hessian.min_eig_rel > 0.0) {
            return Err(Error::InvalidArgument(
                "min_eig_rel must be positive".into(),
            ));
        }
        for sigma in [g.sigma, self.hessian.sigma].into_iter().flatten() {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be positive, got {sigma}"
                )));
            }
        }
        if let SolveMethod::ConjugateGradient { tol, max_iters } = self.solver {
            if !(tol > 0.0) || max_iters == 0 {
                return Err(Error::InvalidArgument(
                    "conjugate-gradient settings must be positive".into(),
                ));
            }
        }
        self.line_search.validate()?;
        self.ppo.validate()
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub k: usize,
    /// Dynamics used for this iteration's policy update.
    pub phi: Vec<f64>,
    pub return_mean: f64,
    pub constraint: f64,
    pub entropy: f64,
    /// Wall time since training started.
    pub seconds: f64,
}

/// Append-only log of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub param_names: Vec<String>,
    pub epsilon: f64,
    pub seed: u64,
    pub records: Vec<TrainRecord>,
}

impl TrainReport {
    pub fn new(param_names: Vec<String>, epsilon: f64, seed: u64) -> Self {
        Self {
            param_names,
            epsilon,
            seed,
            records: Vec::new(),
        }
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["k".to_string()];
        cols.extend(self.param_names.iter().map(|n| format!("phi_{n}")));
        cols.extend(["return_mean", "constraint", "entropy", "seconds"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(r: &TrainRecord) -> String {
        let mut cols = vec![r.k.to_string()];
        cols.extend(r.phi.iter().map(|v| v.to_string()));
        cols.extend([r.return_mean, r.constraint, r.entropy, r.seconds].map(|v| v.to_string()));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::csv_row(r));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.records.iter_mut().for_each(|x| x.seconds = 0.0);
        r
    }
}

/// Streams report rows to a CSV file as they are produced, so a failed run
/// still leaves every completed iteration on disk.
pub struct CsvSink {
    file: std::fs::File,
}

impl CsvSink {
    pub fn create(path: &Path, report: &TrainReport) -> Result<Self> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{}", report.csv_header())?;
        Ok(Self { file })
    }

    pub fn push(&mut self, r: &TrainRecord) -> Result<()> {
        writeln!(self.file, "{}", TrainReport::csv_row(r))?;
        self.file.flush()?;
        Ok(())
    }
}

/// Bucket and regularized Hessian of the expected squared Wasserstein
/// distance at the reference parameters.
pub fn estimate_reference_hessian(
    settings: &EnvSettings,
    cfg: &HessianConfig,
    seed: u64,
) -> Result<(StateActionBucket, HessianEstimate)> {
    let phi0 = settings.reference_params()?;
    let bucket = build_bucket(
        settings,
        &phi0,
        cfg.bucket_pairs,
        derive_seed(seed, Purpose::Bucket, 0),
    )?;
    let zo = cfg.zo_config(&phi0, derive_seed(seed, Purpose::HessianPerturbation, 0));
    let n_next = cfg.n_next.unwrap_or_else(|| default_n_next(settings));
    let h = estimate_w2_hessian_with_floor(settings, &bucket, &phi0, &zo, n_next, cfg.min_eig_rel)?;
    Ok((bucket, h))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: PpoLearner,
    /// Worst-case dynamics from the last outer iteration.
    pub phi: ParamVector,
    pub report: TrainReport,
}

/// Robust training with no per-iteration callback.
pub fn train(
    settings: &EnvSettings,
    cfg: &Wr2lConfig,
    h0: &HessianEstimate,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with_callback(settings, cfg, h0, seed, &mut |_| Ok(()))
}

/// Alternates Phase I (worst-case dynamics inside the ellipsoid around the
/// reference) with Phase II (one policy update under those dynamics).
///
/// With `epsilon = 0` Phase I is skipped and the run is identical to
/// [`train_ppo`](crate::policy::train_ppo) with the same seed.
pub fn train_with_callback(
    settings: &EnvSettings,
    cfg: &Wr2lConfig,
    h0: &HessianEstimate,
    seed: u64,
    on_record: &mut dyn FnMut(&TrainRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    settings.validate()?;
    let phi0 = settings.reference_params()?;
    if h0.dim() != phi0.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi0.dim(),
            got: h0.dim(),
        });
    }
    let ctx = InnerContext {
        h0: &h0.matrix,
        phi0: &phi0,
        epsilon: cfg.epsilon,
        wolfe: &cfg.line_search,
        solver: cfg.solver,
    };
    let limits = InnerLimits {
        max_iters: cfg.inner_max_iters,
        grad_tol: cfg.inner_grad_tol,
        grad_rel_tol: cfg.inner_grad_rel_tol,
    };
    let zo = cfg.gradient.zo_config(&phi0);
    let threshold = entropy_stop_threshold(&cfg.ppo, settings.family);

    let start = Instant::now();
    let mut learner = PpoLearner::new(
        settings,
        &cfg.ppo,
        derive_seed(seed, Purpose::PolicyInit, 0),
    )?;
    let mut phi = phi0.clone();
    let mut report = TrainReport::new(phi0.names().to_vec(), cfg.epsilon, seed);

    for k in 0..cfg.outer_iters {
        let constraint = if cfg.epsilon > 0.0 {
            let init = if cfg.reset_inner {
                phi0.clone()
            } else {
                phi.clone()
            };
            let objective = ZoReturnObjective {
                policy: &learner.policy,
                settings,
                zo: zo.clone(),
                episodes_per_eval: cfg.gradient.episodes_per_eval,
                value_episodes: cfg.gradient.line_search_episodes,
            };
            let inner_seed = derive_seed(seed, Purpose::GradientPerturbation, k as u64);
            let out = inner_loop(&objective, &init, &ctx, &limits, inner_seed)?;
            log::debug!(
                "outer {k}: inner loop stopped after {} steps ({:?}), phi = {:?}",
                out.iterations,
                out.reason,
                out.phi.values()
            );
            let mut candidates = Vec::new();
            // A restarted search can miss a worse region it already found,
            // e.g. when returns saturate near the reference and the gradient
            // there vanishes. The previous worst case is still feasible.
            if cfg.reset_inner && k > 0 {
                candidates.push(phi.clone());
            }
            candidates.push(out.phi);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                Purpose::GradientPerturbation,
                (1 << 32) | k as u64,
            ));
            for r in 0..cfg.inner_restarts {
                let Some(start) = sample_in_ellipsoid(&ctx, objective.bound_margin(), &mut rng)?
                else {
                    break;
                };
                let s = derive_seed(inner_seed, Purpose::GradientPerturbation, r as u64 + 1);
                candidates.push(inner_loop(&objective, &start, &ctx, &limits, s)?.phi);
            }
            phi = if candidates.len() == 1 {
                candidates.pop().unwrap()
            } else {
                // Common rollout streams for all candidates; ties keep the
                // earlier one.
                let s = derive_seed(seed, Purpose::LineSearch, (1 << 32) | k as u64);
                let mut best = (f64::INFINITY, 0);
                for (i, c) in candidates.iter().enumerate() {
                    let v = objective.value(c, s)?;
                    if v < best.0 {
                        best = (v, i);
                    }
                }
                candidates.swap_remove(best.1)
            };
            constraint_value(&h0.matrix, phi.values(), phi0.values())
        } else {
            0.0
        };
        if constraint > cfg.epsilon + d::CONSTRAINT_TOL {
            return Err(Error::ConstraintViolation {
                value: constraint,
                epsilon: cfg.epsilon,
            });
        }

        let (it, stats) = policy_iteration(&mut learner, settings, &phi, &cfg.ppo, seed, k)?;
        if let Some(msg) = &stats.aborted {
            log::warn!("outer {k}: {msg}");
        }
        let record = TrainRecord {
            k,
            phi: phi.values().to_vec(),
            return_mean: it.return_mean,
            constraint,
            entropy: it.entropy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_record(&record)?;
        report.records.push(record);
        if it.entropy < threshold {
            log::info!(
                "outer {k}: entropy {:.4} below {threshold}; stopping",
                it.entropy
            );
            break;
        }
    }
    Ok(TrainOutcome {
        learner,
        phi,
        report,
    })
}
