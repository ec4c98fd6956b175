//! Phase I: constrained descent of the return over the dynamics parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::closed_form::{closed_form_minimizer, constraint_value, SolveMethod};
use super::line_search::{wolfe_search, LineObjective, WolfeConfig};
use super::objective::DynamicsObjective;
use crate::envs::ParamVector;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose};
use crate::zo::GradEstimate;

/// Fixed data of one inner loop.
#[derive(Debug, Clone, Copy)]
pub struct InnerContext<'a> {
    pub h0: &'a DMatrix<f64>,
    pub phi0: &'a ParamVector,
    pub epsilon: f64,
    pub wolfe: &'a WolfeConfig,
    pub solver: SolveMethod,
}

impl InnerContext<'_> {
    pub fn constraint(&self, x: &[f64]) -> f64 {
        constraint_value(self.h0, x, self.phi0.values())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub x: ParamVector,
    pub j: usize,
    /// Gradient estimate at `x`.
    pub last_grad: GradEstimate,
    pub constraint_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: InnerState,
    pub alpha: f64,
    /// Objective at the old and new iterate, from the same rollout streams.
    pub value_before: f64,
    pub value_after: f64,
    pub fallback: bool,
    /// False when the iterate is already the closed-form point.
    pub moved: bool,
}

/// Termination limits for [`inner_loop`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLimits {
    pub max_iters: usize,
    /// Absolute tolerance on the max-norm of the gradient.
    pub grad_tol: f64,
    /// Tolerance relative to the max-norm of the first gradient.
    pub grad_rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIters,
    /// The iterate equals the closed-form point or cannot move within bounds.
    FixedPoint,
    ZeroRadius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub phi: ParamVector,
    pub iterations: usize,
    pub reason: StopReason,
    pub constraint_value: f64,
    pub steps: Vec<StepOutcome>,
}

struct Along<'a, O: ?Sized> {
    obj: &'a O,
    x: &'a ParamVector,
    p: &'a [f64],
    value_seed: u64,
    grad_seed: u64,
    grad_cache: Option<(f64, GradEstimate)>,
}

impl<O: DynamicsObjective + ?Sized> Along<'_, O> {
    fn point(&self, alpha: f64) -> Result<ParamVector> {
        let v = self
            .x
            .values()
            .iter()
            .zip(self.p)
            .map(|(x, p)| x + alpha * p)
            .collect();
        self.x.with_values(v)
    }
}

impl<O: DynamicsObjective + ?Sized> LineObjective for Along<'_, O> {
    fn value(&mut self, alpha: f64) -> Result<f64> {
        self.obj.value(&self.point(alpha)?, self.value_seed)
    }

    fn slope(&mut self, alpha: f64) -> Result<f64> {
        let g = self.obj.gradient(&self.point(alpha)?, self.grad_seed)?;
        let s = g.grad.iter().zip(self.p).map(|(a, b)| a * b).sum();
        self.grad_cache = Some((alpha, g));
        Ok(s)
    }
}

/// Largest `alpha <= 1` keeping `x + alpha p` at least `margin` inside the
/// physical bounds.
fn max_feasible_step(x: &ParamVector, p: &[f64], margin: f64) -> f64 {
    let Some(bounds) = x.bounds() else {
        return 1.0;
    };
    let mut alpha: f64 = 1.0;
    for ((xi, pi), (lo, hi)) in x.values().iter().zip(p).zip(bounds) {
        if *pi > 0.0 {
            alpha = alpha.min((hi - margin - xi) / pi);
        } else if *pi < 0.0 {
            alpha = alpha.min((lo + margin - xi) / pi);
        }
    }
    alpha.max(0.0)
}

/// Pulls `x` back onto the ellipsoid if rounding left it marginally outside.
fn onto_ellipsoid(x: Vec<f64>, ctx: &InnerContext) -> Vec<f64> {
    let c = ctx.constraint(&x);
    if c <= ctx.epsilon || c == 0.0 {
        return x;
    }
    let shrink = (ctx.epsilon / c).sqrt();
    x.iter()
        .zip(ctx.phi0.values())
        .map(|(xi, p0)| p0 + (xi - p0) * shrink)
        .collect()
}

/// Initial state at `x` with a fresh gradient estimate.
pub fn initial_state<O: DynamicsObjective + ?Sized>(
    obj: &O,
    x: ParamVector,
    ctx: &InnerContext,
    seed: u64,
) -> Result<InnerState> {
    let last_grad = obj.gradient(&x, derive_seed(seed, Purpose::GradientPerturbation, 0))?;
    Ok(InnerState {
        constraint_value: ctx.constraint(x.values()),
        x,
        j: 0,
        last_grad,
    })
}

/// One step `x + alpha (x_cf - x)` toward the closed-form minimizer of the
/// linearized return, with `alpha` chosen by a Wolfe search on the return.
///
/// The gradient at the new iterate is estimated fresh (or reused from the
/// line search when it was already computed there).
pub fn inner_descent_step<O: DynamicsObjective + ?Sized>(
    state: &InnerState,
    obj: &O,
    ctx: &InnerContext,
    seed: u64,
) -> Result<StepOutcome> {
    let unchanged = |state: &InnerState| StepOutcome {
        state: state.clone(),
        alpha: 0.0,
        value_before: f64::NAN,
        value_after: f64::NAN,
        fallback: false,
        moved: false,
    };
    let target = match closed_form_minimizer(
        &state.last_grad.grad,
        ctx.h0,
        ctx.phi0.values(),
        ctx.epsilon,
        ctx.solver,
    ) {
        Ok(t) => t.point,
        Err(Error::ZeroGradient) => return Ok(unchanged(state)),
        Err(e) => return Err(e),
    };
    let x = state.x.values();
    let p: Vec<f64> = target.iter().zip(x).map(|(t, xi)| t - xi).collect();
    let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let slope0: f64 = state
        .last_grad
        .grad
        .iter()
        .zip(&p)
        .map(|(g, pi)| g * pi)
        .sum();
    let alpha_max = max_feasible_step(&state.x, &p, obj.bound_margin());
    if p_norm <= 1e-12 * (1.0 + x_norm) || slope0 >= 0.0 || alpha_max <= 0.0 {
        return Ok(unchanged(state));
    }

    let j = state.j as u64;
    let mut line = Along {
        obj,
        x: &state.x,
        p: &p,
        value_seed: derive_seed(seed, Purpose::LineSearch, j),
        grad_seed: derive_seed(seed, Purpose::GradientPerturbation, j + 1),
        grad_cache: None,
    };
    let value_before = line.value(0.0)?;
    let ls = wolfe_search(&mut line, value_before, slope0, alpha_max, ctx.wolfe)?;

    let moved: Vec<f64> = x
        .iter()
        .zip(&p)
        .map(|(xi, pi)| xi + ls.alpha * pi)
        .collect();
    let projected = onto_ellipsoid(moved, ctx);
    let exact_point = line.point(ls.alpha)?;
    let new_x = state.x.with_values(projected)?;
    let last_grad = match line.grad_cache.take() {
        Some((a, g)) if a == ls.alpha && new_x == exact_point => g,
        _ => obj.gradient(&new_x, line.grad_seed)?,
    };
    let constraint_value = ctx.constraint(new_x.values());
    Ok(StepOutcome {
        state: InnerState {
            x: new_x,
            j: state.j + 1,
            last_grad,
            constraint_value,
        },
        alpha: ls.alpha,
        value_before,
        value_after: ls.value,
        fallback: ls.fallback,
        moved: true,
    })
}

/// Iterates [`inner_descent_step`] from `phi_init` until the gradient is
/// small, the iterate stops moving, or `max_iters` steps were taken.
pub fn inner_loop<O: DynamicsObjective + ?Sized>(
    obj: &O,
    phi_init: &ParamVector,
    ctx: &InnerContext,
    limits: &InnerLimits,
    seed: u64,
) -> Result<InnerOutcome> {
    let done = |phi: ParamVector, iterations, reason, steps| {
        let constraint_value = ctx.constraint(phi.values());
        InnerOutcome {
            phi,
            iterations,
            reason,
            constraint_value,
            steps,
        }
    };
    if ctx.epsilon == 0.0 {
        return Ok(done(
            ctx.phi0.clone(),
            0,
            StopReason::ZeroRadius,
            Vec::new(),
        ));
    }
    if limits.grad_tol.is_infinite() || limits.max_iters == 0 {
        return Ok(done(phi_init.clone(), 0, StopReason::MaxIters, Vec::new()));
    }
    let mut state = initial_state(obj, phi_init.clone(), ctx, seed)?;
    let tol = limits
        .grad_tol
        .max(limits.grad_rel_tol * state.last_grad.norm_inf());
    let mut steps = Vec::new();
    for _ in 0..limits.max_iters {
        if state.last_grad.norm_inf() < tol {
            return Ok(done(
                state.x,
                steps.len(),
                StopReason::GradientTolerance,
                steps,
            ));
        }
        let step = inner_descent_step(&state, obj, ctx, seed)?;
        if !step.moved {
            return Ok(done(state.x, steps.len(), StopReason::FixedPoint, steps));
        }
        state = step.state.clone();
        steps.push(step);
    }
    let reason = if state.last_grad.norm_inf() < tol {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIters
    };
    Ok(done(state.x, steps.len(), reason, steps))
}

/// Draws a point uniformly from the ellipsoid `1/2 d' H0 d <= epsilon`
/// around the reference, rejecting draws closer than `margin` to the
/// parameter bounds. Gives up with `None` after 100 rejections.
pub fn sample_in_ellipsoid<R: Rng + ?Sized>(
    ctx: &InnerContext,
    margin: f64,
    rng: &mut R,
) -> Result<Option<ParamVector>> {
    let n = ctx.phi0.dim();
    let chol = ctx
        .h0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("reference Hessian".into()))?;
    let lt = chol.l().transpose();
    for _ in 0..100 {
        let mut z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        let radius = rng.random::<f64>().powf(1.0 / n as f64);
        z *= radius * (2.0 * ctx.epsilon).sqrt() / norm;
        // d' H0 d = d' L L' d = |z|^2 when L' d = z.
        let d = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::NotPositiveDefinite("reference Hessian".into()))?;
        let x: Vec<f64> = ctx.phi0.values().iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        let inside = match ctx.phi0.bounds() {
            Some(b) => x.iter().zip(b).all(|(v, (lo, hi))| *v >= lo + margin && *v <= hi - margin),
            None => true,
        };
        if inside {
            return Ok(Some(ctx.phi0.with_values(x)?));
        }
    }
    Ok(None)
}
