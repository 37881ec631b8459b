//! Cart-pole balancing with a continuous force input.
//!
//! State is `[x, x_dot, theta, theta_dot]`. The action `a` in `[-1, 1]`
//! applies a horizontal force of `10 a` newtons. Physical constants and the
//! explicit-Euler integration order follow the standard reference
//! implementation; each step from a live state earns +1, and the episode
//! ends when the cart or pole leaves its limits or the step cap is reached.

use rand::Rng;
use rand::RngCore;

use super::{assert_finite, Environment, Step};

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * POLE_HALF_LENGTH;
const FORCE_SCALE: f64 = 10.0;
const DT: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Debug)]
pub struct CartPole {
    state: [f64; 4],
    step_count: usize,
    max_steps: usize,
    failed: bool,
}

impl CartPole {
    pub fn new(max_steps: usize) -> Self {
        CartPole {
            state: [0.0; 4],
            step_count: 0,
            max_steps,
            failed: false,
        }
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        assert_finite(&state, "state");
        self.state = state;
        self.step_count = 0;
        self.failed = false;
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    fn derivatives(state: &[f64; 4], force: f64) -> (f64, f64) {
        let theta = state[2];
        let theta_dot = state[3];
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        (x_acc, theta_acc)
    }
}

impl Environment for CartPole {
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.random_range(-0.05..0.05);
        }
        self.step_count = 0;
        self.failed = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Step {
        assert_eq!(action.len(), 1, "cart-pole takes a single force command");
        assert_finite(action, "action");
        assert_finite(&self.state, "state");
        let force = FORCE_SCALE * action[0].clamp(-1.0, 1.0);

        let (x_acc, theta_acc) = Self::derivatives(&self.state, force);
        let [x, x_dot, theta, theta_dot] = self.state;
        self.state = [
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ];

        self.step_count += 1;
        self.failed = self.state[0].abs() > X_LIMIT || self.state[2].abs() > THETA_LIMIT;
        Step {
            state: self.state.to_vec(),
            reward: 1.0,
            done: self.failed || self.step_count >= self.max_steps,
        }
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn min_episode_return(&self) -> f64 {
        0.0
    }

    fn name(&self) -> &'static str {
        "cartpole"
    }
}
