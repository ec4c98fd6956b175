//! Squared 2-Wasserstein distances between transition distributions.
//!
//! The ground metric is Euclidean distance on raw state vectors. Empirical
//! distances are exact: equal-size supports are solved as an assignment
//! problem, unequal sizes as a transportation problem.

pub mod assignment;
mod bucket;
pub mod gaussian;
pub mod transport;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bucket::{build_bucket, StateActionBucket};
pub use gaussian::w2_squared_gaussian;

use crate::envs::{EnvSettings, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose};

/// Uniform empirical measure `(1/n) sum_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    points: Vec<Vec<f64>>,
}

impl EmpiricalDist {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDistribution)?;
        let d = first.len();
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Self { points })
    }

    /// One-dimensional points.
    pub fn scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Transport plan between two empirical measures. Row sums equal the source
/// weights and column sums the target weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub kappa: Vec<Vec<f64>>,
}

impl CouplingMatrix {
    /// Largest deviation of the marginals from uniform weights.
    pub fn marginal_error(&self) -> f64 {
        let n = self.kappa.len();
        let m = self.kappa.first().map_or(0, Vec::len);
        let rows = self
            .kappa
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0 / n as f64).abs());
        let cols =
            (0..m).map(|j| (self.kappa.iter().map(|r| r[j]).sum::<f64>() - 1.0 / m as f64).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cost_matrix(mu: &EmpiricalDist, nu: &EmpiricalDist) -> Result<Vec<Vec<f64>>> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    Ok(mu
        .points
        .iter()
        .map(|x| nu.points.iter().map(|y| squared_distance(x, y)).collect())
        .collect())
}

/// Optimal coupling and its cost `sum kappa_ij |x_i - y_j|^2`.
pub fn optimal_coupling(mu: &EmpiricalDist, nu: &EmpiricalDist) -> Result<(f64, CouplingMatrix)> {
    let cost = cost_matrix(mu, nu)?;
    let (n, m) = (mu.len(), nu.len());
    if n == m {
        let assign = assignment::solve(&cost);
        let mut kappa = vec![vec![0.0; m]; n];
        let mut total = 0.0;
        for (i, &j) in assign.iter().enumerate() {
            kappa[i][j] = 1.0 / n as f64;
            total += cost[i][j];
        }
        Ok((total / n as f64, CouplingMatrix { kappa }))
    } else {
        let (flow, total) = transport::solve(&cost);
        let scale = (n * m) as f64;
        let kappa = flow
            .iter()
            .map(|r| r.iter().map(|&f| f as f64 / scale).collect())
            .collect();
        Ok((total, CouplingMatrix { kappa }))
    }
}

/// Exact squared 2-Wasserstein distance between empirical measures.
pub fn w2_squared_empirical(mu: &EmpiricalDist, nu: &EmpiricalDist) -> Result<f64> {
    if mu.len() == 1 && nu.len() == 1 {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                got: nu.dim(),
            });
        }
        return Ok(squared_distance(&mu.points[0], &nu.points[0]));
    }
    optimal_coupling(mu, nu).map(|(c, _)| c)
}

/// Squared 2-Wasserstein distance between equal-size empirical measures for
/// large supports, where the dense assignment is too slow or too big.
///
/// Returns `(value, gap)`: `value` is the cost of a feasible coupling and the
/// optimum lies in `[value - gap, value]`, with `gap <= rel_gap * value`.
pub fn w2_squared_large(mu: &EmpiricalDist, nu: &EmpiricalDist, rel_gap: f64) -> Result<(f64, f64)> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    if mu.len() != nu.len() {
        return Err(Error::InvalidArgument(format!(
            "auction solver needs equal sample counts, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    let r = assignment::auction_points(&mu.points, &nu.points, rel_gap);
    Ok((r.mean_cost, r.gap()))
}

/// Scalar fast path: the sorted (order-statistics) pairing is optimal for
/// convex costs on the line. Unequal sample counts fall back to the general
/// solver.
pub fn w2_squared_1d(mu: &EmpiricalDist, nu: &EmpiricalDist) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::InvalidArgument(
            "1-D fast path needs scalar points".into(),
        ));
    }
    if mu.len() != nu.len() {
        return w2_squared_empirical(mu, nu);
    }
    let mut a: Vec<f64> = mu.points.iter().map(|p| p[0]).collect();
    let mut b: Vec<f64> = nu.points.iter().map(|p| p[0]).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.len() as f64)
}

/// Monte-Carlo average over the bucket of `W2^2(P_phi(.|s,a), P_phi0(.|s,a))`,
/// each side estimated from `n_next` successor draws.
///
/// Pairs are evaluated in parallel; each pair draws from its own stream and
/// the sum is taken in bucket order, so the result does not depend on the
/// thread count.
pub fn expected_w2(
    settings: &EnvSettings,
    bucket: &StateActionBucket,
    phi: &ParamVector,
    phi0: &ParamVector,
    n_next: usize,
    seed: u64,
) -> Result<f64> {
    if bucket.is_empty() {
        return Err(Error::InvalidArgument("bucket is empty".into()));
    }
    if n_next == 0 {
        return Err(Error::InvalidArgument("n_next must be >= 1".into()));
    }
    phi.check_same_dim(phi0)?;
    let env_phi = settings.make(phi, seed)?;
    let env_ref = settings.make(phi0, seed)?;

    let per_pair: Vec<Result<f64>> = bucket
        .pairs()
        .par_iter()
        .enumerate()
        .map_init(
            || (env_phi.clone(), env_ref.clone()),
            |(a, b), (i, (s, act))| {
                a.reseed(derive_seed(seed, Purpose::WassersteinSamples, 2 * i as u64));
                b.reseed(derive_seed(
                    seed,
                    Purpose::WassersteinSamples,
                    2 * i as u64 + 1,
                ));
                let xs = EmpiricalDist::new(a.next_state_samples(s, act, n_next)?)?;
                let ys = EmpiricalDist::new(b.next_state_samples(s, act, n_next)?)?;
                w2_squared_empirical(&xs, &ys)
            },
        )
        .collect();

    let mut total = 0.0;
    for r in per_pair {
        total += r?;
    }
    Ok(total / bucket.len() as f64)
}

/// Default successor-sample count for the given settings.
pub fn default_n_next(settings: &EnvSettings) -> usize {
    if settings.is_deterministic() {
        crate::defaults::wasserstein::N_NEXT_DETERMINISTIC
    } else {
        crate::defaults::wasserstein::N_NEXT_STOCHASTIC
    }
}
