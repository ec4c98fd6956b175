use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{draw_perturbation, ZoConfig};
use crate::defaults::zo as d;
use crate::envs::{EnvSettings, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose};
use crate::wasserstein::{expected_w2, StateActionBucket};

/// Hessian of the expected squared Wasserstein distance at the reference
/// parameters, symmetrized and eigenvalue-floored so it is positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    pub matrix: DMatrix<f64>,
    /// Function evaluations spent.
    pub n_used: usize,
    /// Whether flooring changed any eigenvalue.
    pub regularized: bool,
    pub min_eig_floor: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl HessianEstimate {
    /// Wraps a known positive definite matrix (used with analytic Hessians).
    pub fn exact(matrix: DMatrix<f64>) -> Result<Self> {
        let (matrix, regularized, floor) = regularize(&matrix, 0.0)?;
        if regularized {
            return Err(Error::NotPositiveDefinite(
                "matrix is not positive definite".into(),
            ));
        }
        Ok(Self {
            matrix,
            n_used: 0,
            regularized: false,
            min_eig_floor: floor,
            sigma: 0.0,
            seed: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Unregularized (but symmetrized) zero-order Hessian estimate of `f` at `phi0`.
///
/// Returns the matrix and the number of evaluations used.
pub fn zo_hessian_raw<F>(f: F, phi0: &ParamVector, cfg: &ZoConfig) -> Result<(DMatrix<f64>, usize)>
where
    F: Fn(&ParamVector, u64) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let draws = cfg.draws();
    let perturbations = (0..draws as u64)
        .map(|i| draw_perturbation(phi0, cfg, Purpose::HessianPerturbation, i))
        .collect::<Result<Vec<_>>>()?;

    let values: Vec<Result<f64>> = perturbations
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut sum = 0.0;
            for (k, point) in p.points.iter().enumerate() {
                sum += f(point, (i * 2 + k) as u64)?;
            }
            Ok(sum / p.points.len() as f64)
        })
        .collect();

    let dim = phi0.dim();
    let sigma2 = cfg.sigma * cfg.sigma;
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    for (p, w) in perturbations.iter().zip(values) {
        let w = w?;
        if !w.is_finite() {
            return Err(Error::Estimator("distance evaluation returned NaN".into()));
        }
        let xi = DVector::from_column_slice(&p.xi);
        acc += (&xi * xi.transpose()) * (w / sigma2);
        for k in 0..dim {
            acc[(k, k)] -= w;
        }
    }
    acc /= sigma2 * draws as f64;
    let sym = (&acc + acc.transpose()) * 0.5;
    Ok((sym, draws * if cfg.antithetic { 2 } else { 1 }))
}

/// Symmetrizes and floors eigenvalues at `min_eig_rel * max(1, lambda_max)`.
///
/// Returns the matrix, whether any eigenvalue was raised, and the floor used.
/// A matrix already above the floor is returned unchanged (bar symmetrization).
pub fn regularize(matrix: &DMatrix<f64>, min_eig_rel: f64) -> Result<(DMatrix<f64>, bool, f64)> {
    if !matrix.is_square() {
        return Err(Error::InvalidArgument("Hessian must be square".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimator("Hessian has non-finite entries".into()));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.max();
    let floor = min_eig_rel * lambda_max.max(1.0);
    let needs_floor = eig
        .eigenvalues
        .iter()
        .any(|&l| l < floor || (floor == 0.0 && l <= 0.0));
    if !needs_floor {
        return Ok((sym, false, floor));
    }
    let floored = eig.eigenvalues.map(|l| l.max(floor));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    Ok(((&rebuilt + rebuilt.transpose()) * 0.5, true, floor))
}

/// Zero-order Hessian of `phi -> expected_w2(bucket, phi, phi0)` at `phi0`,
/// regularized with the default eigenvalue floor.
pub fn estimate_w2_hessian(
    settings: &EnvSettings,
    bucket: &StateActionBucket,
    phi0: &ParamVector,
    cfg: &ZoConfig,
    n_next: usize,
) -> Result<HessianEstimate> {
    estimate_w2_hessian_with_floor(settings, bucket, phi0, cfg, n_next, d::MIN_EIG_REL)
}

pub fn estimate_w2_hessian_with_floor(
    settings: &EnvSettings,
    bucket: &StateActionBucket,
    phi0: &ParamVector,
    cfg: &ZoConfig,
    n_next: usize,
    min_eig_rel: f64,
) -> Result<HessianEstimate> {
    if bucket.source_params().values() != phi0.values() {
        return Err(Error::InvalidArgument(
            "bucket was not collected at the reference parameters".into(),
        ));
    }
    if settings.is_deterministic() {
        let base = expected_w2(settings, bucket, phi0, phi0, n_next, cfg.seed)?;
        if base != 0.0 {
            return Err(Error::Estimator(format!(
                "distance at the reference is {base}, expected 0"
            )));
        }
    }
    let seed = cfg.seed;
    let (raw, n_used) = zo_hessian_raw(
        |phi, idx| {
            expected_w2(
                settings,
                bucket,
                phi,
                phi0,
                n_next,
                derive_seed(seed, Purpose::WassersteinSamples, idx),
            )
        },
        phi0,
        cfg,
    )?;
    let (matrix, regularized, min_eig_floor) = regularize(&raw, min_eig_rel)?;
    Ok(HessianEstimate {
        matrix,
        n_used,
        regularized,
        min_eig_floor,
        sigma: cfg.sigma,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_function_gives_zero_matrix_before_flooring() {
        let phi0 = ParamVector::unnamed(vec![0.0, 0.0]).unwrap();
        let (h, n) =
            zo_hessian_raw(|_, _| Ok(0.0), &phi0, &ZoConfig::new(0.1, 100, true, 0)).unwrap();
        assert_eq!(h, DMatrix::zeros(2, 2));
        assert_eq!(n, 100);
        let (r, changed, floor) = regularize(&h, 1e-3).unwrap();
        assert!(changed);
        assert_eq!(floor, 1e-3);
        assert!((r - DMatrix::identity(2, 2) * 1e-3).amax() < 1e-15);
    }

    #[test]
    fn regularize_leaves_well_conditioned_matrices_alone() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (r, changed, _) = regularize(&m, 1e-3).unwrap();
        assert!(!changed);
        assert_eq!(r, m);
    }

    #[test]
    fn regularized_output_is_symmetric_positive_definite() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.1, -3.0, 0.4, 0.0, 0.3, 0.5]);
        let (r, changed, floor) = regularize(&m, 1e-3).unwrap();
        assert!(changed);
        assert!((&r - r.transpose()).amax() < 1e-12);
        assert!(r.symmetric_eigen().eigenvalues.min() >= floor * (1.0 - 1e-9));
    }

    #[test]
    fn exact_rejects_indefinite() {
        assert!(
            HessianEstimate::exact(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err()
        );
        assert!(HessianEstimate::exact(DMatrix::identity(2, 2)).is_ok());
    }
}
