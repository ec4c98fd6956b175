//! Classic cart-pole balanced by discrete left/right pushes.
//!
//! State is `(x, x_dot, theta, theta_dot)`. The single dynamics parameter is
//! the full pole length; the equations of motion use its half.

use rand::Rng;

use super::Action;
use crate::defaults::cartpole as c;
use crate::error::{Error, Result};

pub const PARAM_NAMES: [&str; 1] = ["pole_length"];

pub fn step(params: &[f64], state: &[f64], action: &Action) -> Result<Vec<f64>> {
    let push = match action {
        Action::Discrete(0) => -1.0,
        Action::Discrete(1) => 1.0,
        other => {
            return Err(Error::InvalidArgument(format!(
                "cart-pole takes discrete action 0 or 1, got {other:?}"
            )))
        }
    };
    let half_length = 0.5 * params[0];
    let total_mass = c::CART_MASS + c::POLE_MASS;
    let polemass_length = c::POLE_MASS * half_length;
    let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
    let force = push * c::FORCE_MAG;
    let (sin, cos) = theta.sin_cos();

    let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (c::GRAVITY * sin - cos * temp)
        / (half_length * (4.0 / 3.0 - c::POLE_MASS * cos * cos / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos / total_mass;

    Ok(vec![
        x + c::DT * x_dot,
        x_dot + c::DT * x_acc,
        theta + c::DT * theta_dot,
        theta_dot + c::DT * theta_acc,
    ])
}

pub fn failed(state: &[f64]) -> bool {
    state[2].abs() > c::THETA_MAX || state[0].abs() > c::X_MAX
}

pub fn initial_state<R: Rng>(rng: &mut R) -> Vec<f64> {
    (0..4)
        .map(|_| rng.random_range(-c::INIT_RANGE..=c::INIT_RANGE))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_euler_step_matches_hand_integration() {
        // theta = 0, at rest, push right: sin = 0, cos = 1.
        // temp = 10 / 1.1; theta_acc = -temp / (0.5 * (4/3 - 0.1/1.1));
        // x_acc = temp - 0.05 * theta_acc / 1.1.
        let s = step(&[1.0], &[0.0; 4], &Action::Discrete(1)).unwrap();
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.02 * x_acc).abs() < 1e-15);
        assert_eq!(s[2], 0.0);
        assert!((s[3] - 0.02 * theta_acc).abs() < 1e-15);
    }

    #[test]
    fn termination_thresholds() {
        assert!(!failed(&[0.0, 0.0, 0.2, 0.0]));
        assert!(failed(&[0.0, 0.0, 0.21, 0.0]));
        assert!(failed(&[-2.5, 0.0, 0.0, 0.0]));
    }
}
