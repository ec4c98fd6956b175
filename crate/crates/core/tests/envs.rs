use wr2l::envs::{Action, EnvFamily, EnvSettings};
use wr2l::Error;

// Reference cart-pole step written out from the textbook equations. Only
// the order of floating-point operations may differ from the library.
fn cartpole_reference(l: f64, s: &[f64], push: f64) -> Vec<f64> {
    let (g, mc, mp, f, dt) = (9.8, 1.0, 0.1, 10.0 * push, 0.02);
    let half = l / 2.0;
    let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
    let temp = (f + mp * half * thd * thd * th.sin()) / (mc + mp);
    let thacc = (g * th.sin() - th.cos() * temp) / (half * (4.0 / 3.0 - mp * th.cos().powi(2) / (mc + mp)));
    let xacc = temp - mp * half * thacc * th.cos() / (mc + mp);
    vec![x + dt * xd, xd + dt * xacc, th + dt * thd, thd + dt * thacc]
}

#[test]
fn cartpole_trajectory_follows_reference_equations() {
    let settings = EnvSettings::new(EnvFamily::Cartpole);
    for l in [0.3, 1.0, 3.0] {
        let mut env = settings.make(&settings.params(vec![l]).unwrap(), 4).unwrap();
        let mut s = env.reset();
        for t in 0..40 {
            let a = (t * 7 % 3 == 0) as usize;
            let tr = env.step(&Action::Discrete(a)).unwrap();
            let want = cartpole_reference(l, &s, if a == 1 { 1.0 } else { -1.0 });
            for (got, w) in tr.next_state.iter().zip(&want) {
                assert!((got - w).abs() <= 1e-12 * w.abs().max(1.0), "{:?} vs {want:?}", tr.next_state);
            }
            assert_eq!(tr.reward, 1.0);
            let failed = tr.next_state[2].abs() > 12f64.to_radians() || tr.next_state[0].abs() > 2.4;
            assert_eq!(tr.done, failed || t + 1 == 1000);
            if tr.done {
                break;
            }
            s = tr.next_state;
        }
    }
}

#[test]
fn identical_seed_and_actions_give_identical_trajectories() {
    for family in [EnvFamily::Cartpole, EnvFamily::Pendulum, EnvFamily::QuadTestbed] {
        let settings = EnvSettings::new(family).with_noise(0.01);
        let spec = settings.spec().unwrap();
        let phi = settings.reference_params().unwrap();
        let run = || {
            let mut env = settings.make(&phi, 99).unwrap();
            let mut states = vec![env.reset()];
            for t in 0..30 {
                let a = match &spec.action_space {
                    wr2l::envs::ActionSpace::Discrete(_) => Action::Discrete(t % 2),
                    wr2l::envs::ActionSpace::Box { .. } => Action::Continuous(vec![(t as f64 * 0.3).sin()]),
                };
                let tr = env.step(&a).unwrap();
                states.push(tr.next_state.clone());
                if tr.done {
                    break;
                }
            }
            states
        };
        let (a, b) = (run(), run());
        assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn pendulum_reward_matches_cost_formula() {
    let settings = EnvSettings::new(EnvFamily::Pendulum);
    let mut env = settings.make(&settings.reference_params().unwrap(), 3).unwrap();
    let s = env.reset();
    let theta = s[1].atan2(s[0]);
    let tr = env.step(&Action::Continuous(vec![1.5])).unwrap();
    let want = -(theta * theta + 0.1 * s[2] * s[2] + 0.001 * 1.5 * 1.5);
    assert!((tr.reward - want).abs() < 1e-12, "{} vs {want}", tr.reward);
}

#[test]
fn parameter_changes_and_errors() {
    let settings = EnvSettings::new(EnvFamily::Cartpole);
    let mut env = settings.make(&settings.reference_params().unwrap(), 0).unwrap();
    for l in [0.3, 3.0] {
        env.set_params(&settings.params(vec![l]).unwrap()).unwrap();
        assert_eq!(env.params().values(), &[l]);
    }
    assert!(settings.params(vec![1.0, 1.0]).is_err());
    assert!(matches!(settings.params(vec![-1.0]), Err(Error::InvalidParameter { .. })));
    let s = env.reset();
    assert!(env.next_state_samples(&s, &Action::Discrete(0), 0).is_err());
    let five = env.next_state_samples(&s, &Action::Discrete(1), 5).unwrap();
    assert!(five.windows(2).all(|w| w[0] == w[1]));
}
