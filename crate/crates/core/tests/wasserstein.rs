use proptest::prelude::*;

use wr2l::envs::{EnvFamily, EnvSettings, QuadSpec};
use wr2l::wasserstein::{
    assignment, build_bucket, expected_w2, optimal_coupling, w2_squared_1d, w2_squared_empirical, w2_squared_large,
    EmpiricalDist,
};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// Minimum over all permutations, by enumeration.
fn enumerate(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    fn go(xs: &[Vec<f64>], ys: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == xs.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..ys.len() {
            if !used[j] {
                used[j] = true;
                go(xs, ys, row + 1, used, acc + sq_dist(&xs[row], &ys[j]), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(xs, ys, 0, &mut vec![false; ys.len()], 0.0, &mut best);
    best / xs.len() as f64
}

fn cloud(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric(xs in cloud(1..=7, 2), ys in cloud(1..=7, 2)) {
        let (a, b) = (EmpiricalDist::new(xs).unwrap(), EmpiricalDist::new(ys).unwrap());
        let ab = w2_squared_empirical(&a, &b).unwrap();
        let ba = w2_squared_empirical(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
    }

    #[test]
    fn permuted_copy_has_zero_distance(xs in cloud(1..=8, 3), shift in 0usize..8) {
        let mut ys = xs.clone();
        ys.rotate_left(shift % xs.len());
        let d = w2_squared_empirical(&EmpiricalDist::new(xs).unwrap(), &EmpiricalDist::new(ys).unwrap()).unwrap();
        prop_assert_eq!(d, 0.0);
    }

    #[test]
    fn equal_sizes_match_enumeration(xs in cloud(1..=6, 2), seed in 0u64..1000) {
        let n = xs.len();
        let ys: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![((seed + i as u64 * 7) % 11) as f64 - 5.0, ((seed * 3 + i as u64) % 5) as f64])
            .collect();
        let exact = enumerate(&xs, &ys);
        let got = w2_squared_empirical(&EmpiricalDist::new(xs).unwrap(), &EmpiricalDist::new(ys).unwrap()).unwrap();
        prop_assert!((got - exact).abs() <= 1e-10);
    }

    #[test]
    fn unequal_sizes_match_replicated_enumeration(xs in cloud(1..=3, 2), ys in cloud(1..=2, 2)) {
        // Each source repeated m times and each target n times gives an
        // nm-point assignment with the same optimum as the transport problem.
        let (n, m) = (xs.len(), ys.len());
        let rx: Vec<Vec<f64>> = xs.iter().flat_map(|x| std::iter::repeat_n(x.clone(), m)).collect();
        let ry: Vec<Vec<f64>> = ys.iter().flat_map(|y| std::iter::repeat_n(y.clone(), n)).collect();
        let exact = enumerate(&rx, &ry);
        let (got, plan) = optimal_coupling(&EmpiricalDist::new(xs).unwrap(), &EmpiricalDist::new(ys).unwrap()).unwrap();
        prop_assert!((got - exact).abs() <= 1e-10);
        prop_assert!(plan.marginal_error() <= 1e-12);
    }

    #[test]
    fn scalar_fast_path_agrees(xs in prop::collection::vec(-10.0..10.0f64, 1..20), seed in 0u64..100) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.5 + ((i as u64 + seed) % 7) as f64).collect();
        let (a, b) = (EmpiricalDist::scalars(&xs).unwrap(), EmpiricalDist::scalars(&ys).unwrap());
        let fast = w2_squared_1d(&a, &b).unwrap();
        let general = w2_squared_empirical(&a, &b).unwrap();
        prop_assert!((fast - general).abs() <= 1e-12 * (1.0 + general));
    }
}

#[test]
fn large_solver_brackets_the_exact_optimum() {
    let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.37).sin() * 3.0, (i as f64 * 1.3).cos()]).collect();
    let ys: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.91).cos() + 0.5, (i as f64 * 0.23).sin() * 2.0]).collect();
    let cost: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| sq_dist(x, y)).collect()).collect();
    let exact = assignment::solve(&cost).iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / 60.0;
    let (value, gap) =
        w2_squared_large(&EmpiricalDist::new(xs).unwrap(), &EmpiricalDist::new(ys).unwrap(), 1e-6).unwrap();
    assert!(value >= exact - 1e-12);
    assert!(value - gap <= exact + 1e-12);
    assert!(gap <= 1e-6 * value);
}

#[test]
fn large_solver_rejects_unequal_sizes() {
    let a = EmpiricalDist::scalars(&[0.0, 1.0]).unwrap();
    let b = EmpiricalDist::scalars(&[0.0]).unwrap();
    assert!(w2_squared_large(&a, &b, 1e-3).is_err());
}

#[test]
fn testbed_expected_distance_is_squared_shift_for_any_bucket() {
    let spec = QuadSpec::isotropic(3, 1.0, vec![0.5; 3], 10.0);
    let settings = EnvSettings::new(EnvFamily::QuadTestbed).with_quad(spec);
    let phi0 = settings.reference_params().unwrap();
    let phi = settings.params(vec![0.7, -0.2, 1.9]).unwrap();
    let want = sq_dist(phi.values(), phi0.values());
    for seed in [1, 2, 3] {
        let bucket = build_bucket(&settings, &phi0, 17, seed).unwrap();
        let got = expected_w2(&settings, &bucket, &phi, &phi0, 1, seed).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn noisy_testbed_distance_is_thread_count_independent() {
    let settings = EnvSettings::new(EnvFamily::QuadTestbed).with_noise(0.3);
    let phi0 = settings.reference_params().unwrap();
    let phi = settings.params(vec![0.6, 0.4, 0.5]).unwrap();
    let bucket = build_bucket(&settings, &phi0, 40, 5).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| expected_w2(&settings, &bucket, &phi, &phi0, 8, 11).unwrap())
    };
    assert_eq!(run(1).to_bits(), run(3).to_bits());
}
