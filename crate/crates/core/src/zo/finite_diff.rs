use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Central-difference gradient and Hessian of `f` at `phi`.
///
/// Exact up to rounding for quadratics; O(h^2) truncation otherwise.
pub fn finite_diff_oracle<F>(f: F, phi: &[f64], h: f64) -> Result<(Vec<f64>, DMatrix<f64>)>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    let d = phi.len();
    let at = |offsets: &[(usize, f64)]| {
        let mut x = phi.to_vec();
        for &(k, delta) in offsets {
            x[k] += delta;
        }
        f(&x)
    };
    let f0 = f(phi);
    let mut grad = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = at(&[(i, h)]);
        let fm = at(&[(i, -h)]);
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((grad, hess))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_recovered() {
        // f = 1/2 x'Ax + b'x with A = [[3, 1], [1, 2]], b = (1, -1).
        let f = |x: &[f64]| {
            0.5 * (3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 2.0 * x[1] * x[1]) + x[0] - x[1]
        };
        let (g, h) = finite_diff_oracle(f, &[0.5, -0.25], 1e-4).unwrap();
        assert!((g[0] - (3.0 * 0.5 - 0.25 + 1.0)).abs() < 1e-6);
        assert!((g[1] - (0.5 - 0.5 - 1.0)).abs() < 1e-6);
        let expected = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        assert!((h - expected).amax() < 1e-6);
    }

    #[test]
    fn constant_and_norm() {
        let (g, h) = finite_diff_oracle(|_| 4.0, &[1.0, 2.0], 1e-3).unwrap();
        assert!(g.iter().all(|v| *v == 0.0) && h.amax() == 0.0);
        let (g, h) =
            finite_diff_oracle(|x| x.iter().map(|v| v * v).sum(), &[0.0; 3], 1e-3).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        assert!((h - DMatrix::identity(3, 3) * 2.0).amax() < 1e-9);
        assert!(finite_diff_oracle(|_| 0.0, &[0.0], 0.0).is_err());
    }
}
