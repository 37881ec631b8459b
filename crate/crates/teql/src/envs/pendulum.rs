//! Torque-controlled pendulum swing-up.
//!
//! State is `[theta, theta_dot]` with theta kept in `[-pi, pi]` (0 is
//! upright). Dynamics integrate gravity plus applied torque with a
//! semi-implicit Euler step, matching the common reference implementation:
//! the angular velocity updates first and the new velocity moves the angle.
//! Reward is the negated quadratic cost of the pre-step state and torque,
//! so resting upright with zero torque costs nothing.

use std::f64::consts::PI;

use rand::Rng;
use rand::RngCore;

use super::{assert_finite, Environment, Step};

const DT: f64 = 0.05;
const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    step_count: usize,
    max_steps: usize,
}

impl Pendulum {
    pub fn new(max_steps: usize) -> Self {
        Pendulum {
            theta: PI,
            theta_dot: 0.0,
            step_count: 0,
            max_steps,
        }
    }

    /// Places the pendulum at an explicit state (mainly for tests).
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        assert_finite(&[theta, theta_dot], "state");
        self.theta = wrap_angle(theta);
        self.theta_dot = theta_dot;
        self.step_count = 0;
    }

    pub fn state(&self) -> [f64; 2] {
        [self.theta, self.theta_dot]
    }

    /// Worst per-step cost: angle at pi, speed at the clip, torque at the clip.
    pub fn max_step_cost() -> f64 {
        PI * PI + 0.1 * MAX_SPEED * MAX_SPEED + 0.001 * MAX_TORQUE * MAX_TORQUE
    }
}

impl Environment for Pendulum {
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.step_count = 0;
        vec![self.theta, self.theta_dot]
    }

    fn step(&mut self, action: &[f64]) -> Step {
        assert_eq!(action.len(), 1, "pendulum takes a single torque");
        assert_finite(action, "action");
        assert_finite(&[self.theta, self.theta_dot], "state");
        let torque = action[0].clamp(-MAX_TORQUE, MAX_TORQUE);

        let cost = wrap_angle(self.theta).powi(2)
            + 0.1 * self.theta_dot.powi(2)
            + 0.001 * torque.powi(2);

        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * torque;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta = wrap_angle(self.theta + self.theta_dot * DT);

        self.step_count += 1;
        Step {
            state: vec![self.theta, self.theta_dot],
            reward: -cost,
            done: self.step_count >= self.max_steps,
        }
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reward_bound(&self) -> f64 {
        Self::max_step_cost()
    }

    fn min_episode_return(&self) -> f64 {
        -Self::max_step_cost() * self.max_steps as f64
    }

    fn name(&self) -> &'static str {
        "pendulum"
    }
}

fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Same dynamics integrated with 10 substeps per control step.
    fn fine_step(theta: f64, theta_dot: f64, torque: f64) -> (f64, f64) {
        let sub = 10;
        let dt = DT / sub as f64;
        let (mut th, mut thdot) = (theta, theta_dot);
        for _ in 0..sub {
            let accel =
                3.0 * GRAVITY / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * torque;
            thdot = (thdot + accel * dt).clamp(-MAX_SPEED, MAX_SPEED);
            th = wrap_angle(th + thdot * dt);
        }
        (th, thdot)
    }

    #[test]
    fn upright_rest_is_a_zero_cost_fixed_point() {
        let mut env = Pendulum::new(100);
        env.set_state(0.0, 0.0);
        let step = env.step(&[0.0]);
        assert_eq!(step.reward, 0.0);
        assert_eq!(step.state, vec![0.0, 0.0]);
        assert!(!step.done);
    }

    #[test]
    fn reward_is_never_positive() {
        let mut env = Pendulum::new(100);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        env.reset(&mut rng);
        for k in 0..100 {
            let torque = ((k % 5) as f64 - 2.0) * 0.9;
            let step = env.step(&[torque]);
            assert!(step.reward <= 0.0);
        }
    }

    #[test]
    fn hanging_start_matches_fine_step_integration() {
        let mut env = Pendulum::new(100);
        env.set_state(PI, 0.0);
        let (mut th_f, mut thdot_f) = (env.state()[0], 0.0);
        for k in 0..100 {
            let step = env.step(&[0.0]);
            let (nth, nthdot) = fine_step(th_f, thdot_f, 0.0);
            th_f = nth;
            thdot_f = nthdot;
            let err = angle_gap(step.state[0], th_f).abs();
            assert!(err <= 0.05 * PI, "step {k}: coarse {} fine {th_f}", step.state[0]);
            assert_eq!(step.done, k == 99);
        }
    }

    #[test]
    fn swing_matches_fine_step_integration_over_one_second() {
        let mut env = Pendulum::new(100);
        env.set_state(2.0, 0.0);
        let (mut th_f, mut thdot_f) = (2.0, 0.0);
        for _ in 0..20 {
            let step = env.step(&[0.0]);
            let (nth, nthdot) = fine_step(th_f, thdot_f, 0.0);
            th_f = nth;
            thdot_f = nthdot;
            assert!(angle_gap(step.state[0], th_f).abs() <= 0.05 * PI);
        }
    }

    #[test]
    fn reset_is_seed_deterministic_and_in_range() {
        use rand::SeedableRng;
        let mut env = Pendulum::new(100);
        let a = env.reset(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        let b = env.reset(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!((-PI..PI).contains(&a[0]));
        assert!((-1.0..1.0).contains(&a[1]));
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn nan_torque_panics() {
        let mut env = Pendulum::new(100);
        env.set_state(1.0, 0.0);
        env.step(&[f64::NAN]);
    }

    fn angle_gap(a: f64, b: f64) -> f64 {
        wrap_angle(a - b)
    }
}
