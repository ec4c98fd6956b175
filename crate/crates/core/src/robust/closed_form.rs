//! Minimizer of a linear objective over the ellipsoid
//! `1/2 (phi - phi0)' H0 (phi - phi0) <= eps`, and its optimality checks.
//!
//! `phi* = phi0 - sqrt(2 eps / g' H0^-1 g) H0^-1 g`, with Lagrange multiplier
//! `lambda = sqrt(g' H0^-1 g / (2 eps))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How `H0^-1 g` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SolveMethod {
    /// Cholesky factorization.
    Dense,
    /// Conjugate gradients using only Hessian-vector products.
    ConjugateGradient { tol: f64, max_iters: usize },
}

impl Default for SolveMethod {
    fn default() -> Self {
        SolveMethod::Dense
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormStep {
    pub point: Vec<f64>,
    pub lambda: f64,
}

/// Residuals of the KKT system at a candidate point, all relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `|c(phi) - eps| / eps`.
    pub boundary: f64,
    /// `||g + lambda H0 (phi - phi0)|| / ||g||`.
    pub stationarity: f64,
    /// `|lambda (c(phi) - eps)| / (lambda eps)`; zero when `lambda` is.
    pub complementarity: f64,
    pub lambda: f64,
}

/// `1/2 (phi - phi0)' H0 (phi - phi0)`.
pub fn constraint_value(h0: &DMatrix<f64>, phi: &[f64], phi0: &[f64]) -> f64 {
    let delta = DVector::from_iterator(phi.len(), phi.iter().zip(phi0).map(|(a, b)| a - b));
    0.5 * delta.dot(&(h0 * &delta))
}

fn check_inputs(g: &[f64], h0: &DMatrix<f64>, phi0: &[f64]) -> Result<()> {
    if !h0.is_square() || h0.nrows() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: h0.nrows(),
            got: g.len(),
        });
    }
    if phi0.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: phi0.len(),
        });
    }
    if g.iter().chain(phi0).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite gradient or reference point".into(),
        ));
    }
    Ok(())
}

/// Solves `H0 x = g` for symmetric positive definite `H0`.
pub fn solve_spd(h0: &DMatrix<f64>, g: &[f64], method: SolveMethod) -> Result<DVector<f64>> {
    let b = DVector::from_column_slice(g);
    match method {
        SolveMethod::Dense => {
            let chol = h0
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("H0 has no Cholesky factor".into()))?;
            Ok(chol.solve(&b))
        }
        SolveMethod::ConjugateGradient { tol, max_iters } => {
            conjugate_gradient(|v| h0 * v, &b, tol, max_iters)
        }
    }
}

/// Conjugate gradients for `A x = b` given only products `v -> A v`.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let target = tol * b.norm();
    for _ in 0..max_iters {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        let ap = apply(&p);
        let curv = p.dot(&ap);
        if !(curv > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "non-positive curvature {curv} in conjugate gradients"
            )));
        }
        let alpha = rr / curv;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    if rr.sqrt() <= target {
        Ok(x)
    } else {
        Err(Error::Estimator(format!(
            "conjugate gradients did not reach tolerance in {max_iters} iterations"
        )))
    }
}

/// Minimizer of `g' phi` over the ellipsoid of radius `epsilon` around `phi0`.
///
/// `epsilon = 0` returns `phi0` with a zero multiplier. A zero gradient is
/// reported as [`Error::ZeroGradient`], which callers treat as convergence.
pub fn closed_form_minimizer(
    g: &[f64],
    h0: &DMatrix<f64>,
    phi0: &[f64],
    epsilon: f64,
    method: SolveMethod,
) -> Result<ClosedFormStep> {
    check_inputs(g, h0, phi0)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        return Ok(ClosedFormStep {
            point: phi0.to_vec(),
            lambda: 0.0,
        });
    }
    if g.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroGradient);
    }
    let hinv_g = solve_spd(h0, g, method)?;
    let quad: f64 = hinv_g.iter().zip(g).map(|(a, b)| a * b).sum();
    if !(quad > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "g' H0^-1 g = {quad} is not positive"
        )));
    }
    let scale = (2.0 * epsilon / quad).sqrt();
    let point = phi0
        .iter()
        .zip(hinv_g.iter())
        .map(|(p, h)| p - scale * h)
        .collect();
    Ok(ClosedFormStep {
        point,
        lambda: (quad / (2.0 * epsilon)).sqrt(),
    })
}

/// KKT residuals of `phi` as a solution of the linear ellipsoid problem, with
/// the multiplier recovered by least squares from stationarity.
pub fn kkt_residuals(
    g: &[f64],
    h0: &DMatrix<f64>,
    phi0: &[f64],
    epsilon: f64,
    phi: &[f64],
) -> Result<KktResiduals> {
    check_inputs(g, h0, phi0)?;
    if phi.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: phi.len(),
        });
    }
    let delta = DVector::from_iterator(phi.len(), phi.iter().zip(phi0).map(|(a, b)| a - b));
    let gv = DVector::from_column_slice(g);
    let hd = h0 * &delta;
    let hd2 = hd.dot(&hd);
    // lambda minimizing ||g + lambda H0 delta||.
    let lambda = if hd2 > 0.0 { -gv.dot(&hd) / hd2 } else { 0.0 };
    let c = 0.5 * delta.dot(&hd);
    let g_norm = gv.norm();
    let boundary = if epsilon > 0.0 {
        (c - epsilon).abs() / epsilon
    } else {
        c.abs()
    };
    let stationarity = (&gv + &hd * lambda).norm() / if g_norm > 0.0 { g_norm } else { 1.0 };
    let complementarity = if lambda == 0.0 || epsilon == 0.0 {
        0.0
    } else {
        (lambda * (c - epsilon)).abs() / (lambda.abs() * epsilon)
    };
    Ok(KktResiduals {
        boundary,
        stationarity,
        complementarity,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_hessian_example() {
        let h = DMatrix::identity(2, 2);
        let s =
            closed_form_minimizer(&[1.0, 0.0], &h, &[0.0, 0.0], 0.5, SolveMethod::Dense).unwrap();
        assert!((s.point[0] + 1.0).abs() < 1e-15 && s.point[1] == 0.0);
        assert!((s.lambda - 1.0).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_example_lands_on_boundary() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let s =
            closed_form_minimizer(&[0.0, 1.0], &h, &[0.0, 0.0], 2.0, SolveMethod::Dense).unwrap();
        assert!(s.point[0].abs() < 1e-15);
        assert!((s.point[1] + 1.0).abs() < 1e-12);
        assert!((constraint_value(&h, &s.point, &[0.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let h = DMatrix::identity(2, 2);
        let s =
            closed_form_minimizer(&[1.0, 2.0], &h, &[0.3, 0.4], 0.0, SolveMethod::Dense).unwrap();
        assert_eq!(s.point, vec![0.3, 0.4]);
        assert!(matches!(
            closed_form_minimizer(&[0.0, 0.0], &h, &[0.0, 0.0], 1.0, SolveMethod::Dense),
            Err(Error::ZeroGradient)
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            closed_form_minimizer(&[1.0, 0.0], &bad, &[0.0, 0.0], 1.0, SolveMethod::Dense),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn conjugate_gradient_matches_dense() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let g = [0.3, -1.2, 0.7];
        let a = closed_form_minimizer(&g, &h, &[1.0, 1.0, 1.0], 0.1, SolveMethod::Dense).unwrap();
        let cg = SolveMethod::ConjugateGradient {
            tol: 1e-14,
            max_iters: 50,
        };
        let b = closed_form_minimizer(&g, &h, &[1.0, 1.0, 1.0], 0.1, cg).unwrap();
        for (x, y) in a.point.iter().zip(&b.point) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kkt_holds_at_the_closed_form_point() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = [0.4, -0.9];
        let s = closed_form_minimizer(&g, &h, &[0.0, 1.0], 0.7, SolveMethod::Dense).unwrap();
        let r = kkt_residuals(&g, &h, &[0.0, 1.0], 0.7, &s.point).unwrap();
        assert!(r.boundary < 1e-12 && r.stationarity < 1e-12 && r.complementarity < 1e-12);
        assert!((r.lambda - s.lambda).abs() < 1e-12);
        // The maximizer is stationary too, but with a negative multiplier.
        let flipped: Vec<f64> = s
            .point
            .iter()
            .zip([0.0, 1.0])
            .map(|(p, c)| 2.0 * c - p)
            .collect();
        assert!(
            kkt_residuals(&g, &h, &[0.0, 1.0], 0.7, &flipped)
                .unwrap()
                .lambda
                < 0.0
        );
    }
}
