//! Torque-controlled pendulum swing-up.
//!
//! Observed state is `(cos theta, sin theta, theta_dot)`; parameters are
//! `(length, mass)`.

use rand::Rng;

use super::Action;
use crate::defaults::pendulum as c;
use crate::error::{Error, Result};

pub const PARAM_NAMES: [&str; 2] = ["length", "mass"];

fn angle_normalize(x: f64) -> f64 {
    use std::f64::consts::PI;
    (x + PI).rem_euclid(2.0 * PI) - PI
}

pub fn step(params: &[f64], state: &[f64], action: &Action) -> Result<(Vec<f64>, f64)> {
    let u = match action {
        Action::Continuous(a) if a.len() == 1 && a[0].is_finite() => {
            a[0].clamp(-c::MAX_TORQUE, c::MAX_TORQUE)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "pendulum takes one finite torque, got {other:?}"
            )))
        }
    };
    let (length, mass) = (params[0], params[1]);
    let theta = state[1].atan2(state[0]);
    let theta_dot = state[2];

    let cost = angle_normalize(theta).powi(2) + 0.1 * theta_dot * theta_dot + 0.001 * u * u;
    let new_theta_dot = (theta_dot
        + (3.0 * c::GRAVITY / (2.0 * length) * theta.sin() + 3.0 / (mass * length * length) * u)
            * c::DT)
        .clamp(-c::MAX_SPEED, c::MAX_SPEED);
    let new_theta = theta + new_theta_dot * c::DT;
    Ok((vec![new_theta.cos(), new_theta.sin(), new_theta_dot], -cost))
}

pub fn initial_state<R: Rng>(rng: &mut R) -> Vec<f64> {
    use std::f64::consts::PI;
    let theta: f64 = rng.random_range(-PI..=PI);
    let theta_dot: f64 = rng.random_range(-1.0..=1.0);
    vec![theta.cos(), theta.sin(), theta_dot]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_at_rest_is_an_equilibrium_with_zero_cost() {
        let (next, r) = step(
            &[1.0, 1.0],
            &[1.0, 0.0, 0.0],
            &Action::Continuous(vec![0.0]),
        )
        .unwrap();
        assert_eq!(r, 0.0);
        assert!((next[0] - 1.0).abs() < 1e-15 && next[1].abs() < 1e-15 && next[2] == 0.0);
    }

    #[test]
    fn torque_is_clipped() {
        let s = [1.0, 0.0, 0.0];
        let a = step(&[1.0, 1.0], &s, &Action::Continuous(vec![2.0])).unwrap();
        let b = step(&[1.0, 1.0], &s, &Action::Continuous(vec![50.0])).unwrap();
        assert_eq!(a.0, b.0);
    }
}
