//! Built-in oracle suite: each check compares a production routine with an
//! independent reference (finite differences, brute force, closed forms).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::envs::{EnvFamily, EnvSettings, ParamVector, QuadSpec};
use crate::error::Result;
use crate::policy::{collect_rollouts, surrogate_and_grad, Critic, Mlp, PolicyParams};
use crate::robust::{closed_form_minimizer, kkt_residuals, SolveMethod};
use crate::wasserstein::{self, w2_squared_1d, w2_squared_empirical, w2_squared_gaussian, w2_squared_large, EmpiricalDist};
use crate::zo::{zo_gradient, zo_hessian_raw, ZoConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// Signature of a closed-form minimizer under test: `(g, H0, phi0, eps) -> phi*`.
pub type Minimizer<'a> = &'a dyn Fn(&[f64], &DMatrix<f64>, &[f64], f64) -> Result<Vec<f64>>;

/// The production minimizer in [`Minimizer`] form.
pub fn production_minimizer(g: &[f64], h: &DMatrix<f64>, phi0: &[f64], eps: f64) -> Result<Vec<f64>> {
    closed_form_minimizer(g, h, phi0, eps, SolveMethod::Dense).map(|s| s.point)
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random ellipsoid problems: the candidate must lie on the boundary, satisfy
/// stationarity with a positive multiplier, and beat sampled boundary points.
pub fn kkt_fuzz_check(minimizer: Minimizer, cases: usize, boundary_samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0.0f64);
    for case in 0..cases {
        let d = rng.random_range(1..=10);
        let h = random_spd(&mut rng, d);
        let g = normal_vec(&mut rng, d);
        let phi0 = normal_vec(&mut rng, d);
        let eps = rng.random_range(0.01..2.0);
        let phi = match minimizer(&g, &h, &phi0, eps) {
            Ok(p) => p,
            Err(e) => return CheckResult::new("closed-form KKT", false, format!("case {case}: {e}")),
        };
        let r = match kkt_residuals(&g, &h, &phi0, eps, &phi) {
            Ok(r) => r,
            Err(e) => return CheckResult::new("closed-form KKT", false, format!("case {case}: {e}")),
        };
        worst = (worst.0.max(r.boundary), worst.1.max(r.stationarity));
        if r.boundary > 1e-8 || r.stationarity > 1e-8 || !(r.lambda > 0.0) {
            return CheckResult::new(
                "closed-form KKT",
                false,
                format!(
                    "case {case}: boundary {:.2e}, stationarity {:.2e}, multiplier {:.3e}",
                    r.boundary, r.stationarity, r.lambda
                ),
            );
        }
        let obj = |x: &[f64]| x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let best = obj(&phi);
        // Boundary points phi0 + L^-T u sqrt(2 eps) for unit u, with H = L L'.
        let chol = h.clone().cholesky().expect("generated matrix is SPD");
        let lt = chol.l().transpose();
        for _ in 0..boundary_samples {
            let u = DVector::from_vec(normal_vec(&mut rng, d)).normalize() * (2.0 * eps).sqrt();
            let delta = lt.solve_upper_triangular(&u).expect("triangular factor is invertible");
            let x: Vec<f64> = phi0.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if obj(&x) < best - 1e-9 * (1.0 + best.abs()) {
                return CheckResult::new(
                    "closed-form KKT",
                    false,
                    format!("case {case}: a boundary point improves the objective"),
                );
            }
        }
    }
    CheckResult::new(
        "closed-form KKT",
        true,
        format!(
            "{cases} cases, max boundary residual {:.1e}, max stationarity residual {:.1e}",
            worst.0, worst.1
        ),
    )
}

fn mlp_gradient_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
    let x = [0.3, -0.7, 1.1];
    let w = [0.8, -1.3];
    let loss = |m: &Mlp| m.forward(&x).iter().zip(&w).map(|(o, c)| o * c).sum::<f64>();
    let trace = net.forward_trace(&x);
    let mut grad = vec![0.0; net.num_params()];
    net.backward(&trace, &w, &mut grad);
    let mut worst = 0.0f64;
    let h = 1e-6;
    for i in 0..net.num_params() {
        let mut p = net.clone();
        p.params_mut()[i] += h;
        let mut m = net.clone();
        m.params_mut()[i] -= h;
        let fd = (loss(&p) - loss(&m)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / (1e-8 + fd.abs().max(grad[i].abs())));
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.1e}")))
}

/// Surrogate gradient on a 4-unit network and 10 transitions versus central
/// differences, for both action heads.
pub fn surrogate_gradient_error(family: EnvFamily, seed: u64) -> Result<f64> {
    let settings = EnvSettings::new(family);
    let spec = settings.spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PolicyParams::new(spec.state_dim, &spec.action_space, &[4, 4], &mut rng);
    let critic = Critic::new(spec.state_dim, &[4, 4], &mut rng);
    let phi = settings.reference_params()?;
    let mut batch = collect_rollouts(&policy, &critic, &settings, &phi, 10, seed)?;
    batch.compute_advantages(0.99, 0.95);
    let idx: Vec<usize> = (0..10).collect();
    let adv: Vec<f64> = (0..batch.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    // Move away from the collection policy so ratios differ from one while
    // staying well inside the clip interval.
    let mut flat = policy.flat();
    for v in flat.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += 0.02 * z;
    }
    policy.set_flat(&flat);
    let (_, grad) = surrogate_and_grad(&policy, &batch, &adv, &idx, 0.5, 0.01);
    let h = 1e-6;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..flat.len() {
        let mut p = policy.clone();
        let mut f = flat.clone();
        f[i] += h;
        p.set_flat(&f);
        let up = surrogate_and_grad(&p, &batch, &adv, &idx, 0.5, 0.01).0;
        f[i] -= 2.0 * h;
        p.set_flat(&f);
        let down = surrogate_and_grad(&p, &batch, &adv, &idx, 0.5, 0.01).0;
        let fd = (up - down) / (2.0 * h);
        num += (fd - grad[i]).powi(2);
        den += fd.powi(2);
    }
    Ok((num / den).sqrt())
}

fn surrogate_check() -> Result<(bool, String)> {
    let a = surrogate_gradient_error(EnvFamily::Cartpole, 3)?;
    let b = surrogate_gradient_error(EnvFamily::Pendulum, 4)?;
    Ok((a < 1e-4 && b < 1e-4, format!("relative error categorical {a:.1e}, Gaussian {b:.1e}")))
}

/// Minimum over all permutations of the mean matched cost.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best / cost.len() as f64
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| normal_vec(rng, d)).collect()
}

fn ot_check(instances: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=3);
        let xs = random_points(&mut rng, n, d);
        let ys = random_points(&mut rng, n, d);
        let cost: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| ys.iter().map(|y| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()).collect())
            .collect();
        let exact = brute_force_assignment(&cost);
        let got = w2_squared_empirical(&EmpiricalDist::new(xs)?, &EmpiricalDist::new(ys)?)?;
        worst = worst.max((got - exact).abs());
    }
    Ok((worst <= 1e-10, format!("{instances} instances, max error {worst:.1e}")))
}

fn ot_unequal_check(instances: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let xs = random_points(&mut rng, n, 2);
        let ys = random_points(&mut rng, m, 2);
        // Replicating every source point m times and every target n times
        // turns the transport problem into an nm x nm assignment.
        let rx: Vec<Vec<f64>> = xs.iter().flat_map(|x| std::iter::repeat_n(x.clone(), m)).collect();
        let ry: Vec<Vec<f64>> = ys.iter().flat_map(|y| std::iter::repeat_n(y.clone(), n)).collect();
        let cost: Vec<Vec<f64>> = rx
            .iter()
            .map(|x| ry.iter().map(|y| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()).collect())
            .collect();
        let assign = wasserstein::assignment::solve(&cost);
        let reference = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / (n * m) as f64;
        let (got, plan) = wasserstein::optimal_coupling(&EmpiricalDist::new(xs)?, &EmpiricalDist::new(ys)?)?;
        worst = worst.max((got - reference).abs()).max(plan.marginal_error());
    }
    Ok((worst <= 1e-10, format!("{instances} instances, max error {worst:.1e}")))
}

fn fast_path_check(instances: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..instances {
        let n = rng.random_range(1..=8);
        let xs: Vec<f64> = normal_vec(&mut rng, n);
        let ys: Vec<f64> = normal_vec(&mut rng, n);
        let (a, b) = (EmpiricalDist::scalars(&xs)?, EmpiricalDist::scalars(&ys)?);
        let fast = w2_squared_1d(&a, &b)?;
        let general = wasserstein::optimal_coupling(&a, &b)?.0;
        if (fast - general).abs() > 1e-12 * (1.0 + general) {
            return Ok((false, format!("instance {k}: {fast} vs {general}")));
        }
    }
    Ok((true, format!("{instances} instances agree")))
}

fn zo_gradient_check(n: usize, tol: f64) -> Result<(bool, String)> {
    let spec = QuadSpec::isotropic(5, 1.0, vec![0.5; 5], 10.0);
    let phi = ParamVector::unnamed(vec![0.1, -0.3, 0.8, 1.2, -1.0])?;
    let est = zo_gradient(|p, _| Ok(spec.value(p.values())), &phi, &ZoConfig::new(0.05, n, true, 5))?;
    let exact = spec.gradient(phi.values());
    let err = est.grad.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        / exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok((err < tol, format!("N = {n}, relative L2 error {err:.2e}")))
}

fn zo_hessian_check(n: usize, tol_rel: f64) -> Result<(bool, String)> {
    let phi0 = ParamVector::unnamed(vec![0.0, 0.0])?;
    let w = |p: &ParamVector, _| {
        let v = p.values();
        Ok(0.5 * (v[0] * v[0] + 4.0 * v[1] * v[1]))
    };
    let (h, _) = zo_hessian_raw(w, &phi0, &ZoConfig::new(0.1, n, true, 6))?;
    let e0 = (h[(0, 0)] - 1.0).abs();
    let e1 = (h[(1, 1)] - 4.0).abs() / 4.0;
    let off = h[(0, 1)].abs();
    Ok((
        e0 < tol_rel && e1 < tol_rel && off < 0.2,
        format!("N = {n}, diagonal errors {e0:.3} / {e1:.3}, off-diagonal {off:.3}"),
    ))
}

fn gaussian_check(samples: usize, tol: f64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let m1 = DVector::from_vec(normal_vec(&mut rng, 2));
        let m2 = DVector::from_vec(normal_vec(&mut rng, 2));
        let s1 = random_spd(&mut rng, 2);
        let s2 = random_spd(&mut rng, 2);
        let exact = w2_squared_gaussian(&m1, &s1, &m2, &s2)?;
        let l1 = s1.clone().cholesky().expect("SPD").l();
        let l2 = s2.clone().cholesky().expect("SPD").l();
        let draw = |rng: &mut ChaCha8Rng, m: &DVector<f64>, l: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..samples)
                .map(|_| (m + l * DVector::from_vec(normal_vec(rng, 2))).iter().copied().collect())
                .collect()
        };
        let xs = draw(&mut rng, &m1, &l1);
        let ys = draw(&mut rng, &m2, &l2);
        let (mc, _) = w2_squared_large(&EmpiricalDist::new(xs)?, &EmpiricalDist::new(ys)?, 1e-4)?;
        worst = worst.max((mc - exact).abs() / exact);
    }
    Ok((worst < tol, format!("{samples} samples, max relative gap {worst:.3}")))
}

/// Runs the whole suite. `quick` uses reduced budgets and looser tolerances
/// where the check is statistical.
pub fn run_selftest(quick: bool, minimizer: Minimizer) -> Vec<CheckResult> {
    let (boundary, zo_n, zo_tol, hess_n, hess_tol, gauss_n) = if quick {
        (500, 5_000, 0.15, 20_000, 0.25, (2_000, 0.1))
    } else {
        (10_000, 50_000, 0.05, 200_000, 0.10, (10_000, 0.05))
    };
    vec![
        CheckResult::from_result("MLP backprop", mlp_gradient_check()),
        CheckResult::from_result("surrogate gradient", surrogate_check()),
        CheckResult::from_result("OT vs brute force", ot_check(200)),
        CheckResult::from_result("OT unequal sizes", ot_unequal_check(100)),
        CheckResult::from_result("1-D fast path", fast_path_check(200)),
        kkt_fuzz_check(minimizer, 100, boundary, 41),
        CheckResult::from_result("ZO gradient", zo_gradient_check(zo_n, zo_tol)),
        CheckResult::from_result("ZO Hessian", zo_hessian_check(hess_n, hess_tol)),
        CheckResult::from_result("Gaussian W2", gaussian_check(gauss_n.0, gauss_n.1)),
    ]
}
