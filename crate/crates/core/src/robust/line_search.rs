//! Weak Wolfe line search on `f(alpha)` for `alpha` in `(0, alpha_max]`.

use serde::{Deserialize, Serialize};

use crate::defaults::wr2l as d;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WolfeConfig {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub alpha_init: f64,
    /// Step accepted (with a warning) when the search runs out of evaluations.
    pub alpha_min: f64,
    pub max_evals: usize,
}

impl Default for WolfeConfig {
    fn default() -> Self {
        Self {
            c1: d::WOLFE_C1,
            c2: d::WOLFE_C2,
            alpha_init: d::ALPHA_INIT,
            alpha_min: d::ALPHA_MIN,
            max_evals: d::MAX_LINE_SEARCH_EVALS,
        }
    }
}

impl WolfeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_init && self.alpha_init <= 1.0) {
            return Err(Error::InvalidArgument(
                "step sizes need 0 < alpha_min <= alpha_init <= 1".into(),
            ));
        }
        if self.max_evals == 0 {
            return Err(Error::InvalidArgument("max_evals must be >= 1".into()));
        }
        Ok(())
    }
}

/// A function restricted to a search line.
pub trait LineObjective {
    fn value(&mut self, alpha: f64) -> Result<f64>;
    /// Directional derivative at `alpha`.
    fn slope(&mut self, alpha: f64) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub value: f64,
    /// Value evaluations used.
    pub evals: usize,
    /// The search gave up and took `alpha_min`.
    pub fallback: bool,
}

/// Bracketing search for a step satisfying
/// `f(a) <= f0 + c1 a s0` and `f'(a) >= c2 s0`.
///
/// At `alpha_max` only sufficient decrease is required, since the step cannot
/// be extended further.
pub fn wolfe_search<L: LineObjective>(
    obj: &mut L,
    f0: f64,
    s0: f64,
    alpha_max: f64,
    cfg: &WolfeConfig,
) -> Result<LineSearchResult> {
    if !(s0 < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "line search needs a descent direction, slope is {s0}"
        )));
    }
    if !(alpha_max > 0.0) {
        return Err(Error::InvalidArgument("alpha_max must be positive".into()));
    }
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut alpha = cfg.alpha_init.min(alpha_max);
    for evals in 1..=cfg.max_evals {
        let f = obj.value(alpha)?;
        if !(f <= f0 + cfg.c1 * alpha * s0) {
            hi = alpha;
            alpha = 0.5 * (lo + hi);
            continue;
        }
        if alpha >= alpha_max {
            return Ok(LineSearchResult {
                alpha,
                value: f,
                evals,
                fallback: false,
            });
        }
        let s = obj.slope(alpha)?;
        if s < cfg.c2 * s0 {
            lo = alpha;
            alpha = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                (2.0 * alpha).min(alpha_max)
            };
            continue;
        }
        return Ok(LineSearchResult {
            alpha,
            value: f,
            evals,
            fallback: false,
        });
    }
    let alpha = cfg.alpha_min.min(alpha_max);
    log::warn!(
        "Wolfe search failed after {} evaluations; taking alpha = {alpha}",
        cfg.max_evals
    );
    let value = obj.value(alpha)?;
    Ok(LineSearchResult {
        alpha,
        value,
        evals: cfg.max_evals + 1,
        fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(a) = q/2 (a - m)^2`, minimized at `m`.
    struct Parabola {
        q: f64,
        m: f64,
    }

    impl LineObjective for Parabola {
        fn value(&mut self, a: f64) -> Result<f64> {
            Ok(0.5 * self.q * (a - self.m).powi(2))
        }
        fn slope(&mut self, a: f64) -> Result<f64> {
            Ok(self.q * (a - self.m))
        }
    }

    fn run(q: f64, m: f64) -> LineSearchResult {
        let mut p = Parabola { q, m };
        let (f0, s0) = (p.value(0.0).unwrap(), p.slope(0.0).unwrap());
        wolfe_search(&mut p, f0, s0, 1.0, &WolfeConfig::default()).unwrap()
    }

    #[test]
    fn unit_step_accepted_when_well_scaled() {
        // Minimum at 1: f(1) = 0 <= f0 - c1 q, f'(1) = 0 >= c2 f'(0).
        let r = run(2.0, 1.0);
        assert_eq!(r.alpha, 1.0);
        assert_eq!(r.evals, 1);
    }

    #[test]
    fn overshoot_is_backtracked_to_a_wolfe_point() {
        let r = run(1.0, 0.1);
        assert!(!r.fallback);
        let cfg = WolfeConfig::default();
        let f0 = 0.5 * 0.01;
        let s0 = -0.1;
        assert!(r.value <= f0 + cfg.c1 * r.alpha * s0);
        assert!(r.alpha - 0.1 >= cfg.c2 * s0);
    }

    #[test]
    fn minimum_beyond_the_box_takes_the_full_step() {
        let r = run(1.0, 5.0);
        assert_eq!(r.alpha, 1.0);
    }

    #[test]
    fn non_descent_direction_is_rejected() {
        let mut p = Parabola { q: 1.0, m: -1.0 };
        assert!(wolfe_search(&mut p, 0.5, 1.0, 1.0, &WolfeConfig::default()).is_err());
    }

    #[test]
    fn exhausted_search_falls_back() {
        struct Flat;
        impl LineObjective for Flat {
            fn value(&mut self, _: f64) -> Result<f64> {
                Ok(1.0)
            }
            fn slope(&mut self, _: f64) -> Result<f64> {
                Ok(0.0)
            }
        }
        let r = wolfe_search(&mut Flat, 1.0, -1.0, 1.0, &WolfeConfig::default()).unwrap();
        assert!(r.fallback);
        assert_eq!(r.alpha, WolfeConfig::default().alpha_min);
    }
}
