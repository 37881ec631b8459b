//! Native control environments.
//!
//! Both physics tasks are deterministic given the state and action; the only
//! randomness is in `reset`. Episodes are capped at `max_steps` (100 by
//! default), and cart-pole additionally terminates when the pole or cart
//! leaves its limits. The synthetic MDP is a small tabular process with an
//! exactly computable optimal Q-function, used for regret measurements.

mod cartpole;
mod pendulum;
mod synthetic;

pub use cartpole::CartPole;
pub use pendulum::Pendulum;
pub use synthetic::{MdpError, SyntheticMdp};

use rand::RngCore;

/// Outcome of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    /// Draws an initial state; deterministic given the generator state.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one step. Panics on non-finite state or action components.
    fn step(&mut self, action: &[f64]) -> Step;

    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Bound on per-step reward magnitude, used to size the Q clamp.
    fn reward_bound(&self) -> f64;

    /// Lowest achievable episode return under the step cap; the floor of the
    /// performance scale when placing convergence thresholds.
    fn min_episode_return(&self) -> f64;

    fn name(&self) -> &'static str;
}

pub(crate) fn assert_finite(values: &[f64], what: &str) {
    for (i, v) in values.iter().enumerate() {
        assert!(
            v.is_finite(),
            "non-finite {what} component {i}: {v}"
        );
    }
}
