use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_psd(m)?;
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotPositiveDefinite(format!(
            "covariance is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::NotPositiveDefinite(
            "covariance is not symmetric".into(),
        ));
    }
    let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-9 * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "covariance has eigenvalue {min_eig}"
        )));
    }
    Ok(())
}

/// Squared 2-Wasserstein distance between two Gaussians:
/// `|m1 - m2|^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2)`.
pub fn w2_squared_gaussian(
    mean1: &DVector<f64>,
    cov1: &DMatrix<f64>,
    mean2: &DVector<f64>,
    cov2: &DMatrix<f64>,
) -> Result<f64> {
    let d = mean1.len();
    if mean2.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mean2.len(),
        });
    }
    for c in [cov1, cov2] {
        if c.nrows() != d || c.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.nrows(),
            });
        }
    }
    check_psd(cov1)?;
    let root2 = sqrt_psd(cov2)?;
    let mut inner = &root2 * cov1 * &root2;
    // Symmetrize away rounding before taking the second root.
    inner = (&inner + inner.transpose()) * 0.5;
    let cross = sqrt_psd(&inner)?;
    let mean_term = (mean1 - mean2).norm_squared();
    let trace_term = cov1.trace() + cov2.trace() - 2.0 * cross.trace();
    Ok(mean_term + trace_term.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_closed_form() {
        let w = w2_squared_gaussian(
            &DVector::from_vec(vec![0.0]),
            &DMatrix::from_vec(1, 1, vec![1.0]),
            &DVector::from_vec(vec![0.0]),
            &DMatrix::from_vec(1, 1, vec![4.0]),
        )
        .unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_covariances_leave_mean_shift() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m1 = DVector::from_vec(vec![1.0, 2.0]);
        let m2 = DVector::from_vec(vec![-1.0, 0.0]);
        let w = w2_squared_gaussian(&m1, &c, &m2, &c).unwrap();
        assert!((w - 8.0).abs() < 1e-10);
        assert!(w2_squared_gaussian(&m1, &c, &m1, &c).unwrap().abs() < 1e-10);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let ok = DMatrix::identity(2, 2);
        let m = DVector::zeros(2);
        assert!(matches!(
            w2_squared_gaussian(&m, &bad, &m, &ok),
            Err(Error::NotPositiveDefinite(_))
        ));
    }
}
