//! Tensor-efficient Q-learning on discretized state-action spaces.
//!
//! The Q-function is stored as a rank-`R` CP factorization (one small factor
//! matrix per state/action dimension) instead of a dense table, updated one
//! transition at a time by block coordinate descent on a frequency-penalized
//! TD objective, and explored with a bonus that combines the decomposition
//! error at each pair with a visit-count upper confidence term.
//!
//! Crate layout:
//!
//! - [`tensor`] — CP model storage, entrywise evaluation, action maximization
//! - [`discretize`] — continuous state/action vectors to grid index tuples
//! - [`envs`] — native pendulum / cart-pole dynamics and a synthetic MDP
//! - [`learner`] — the per-transition penalized BCD update and its bookkeeping
//! - [`policy`] — error-uncertainty guided exploration, UCB, epsilon-greedy
//! - [`oracle`] — independent checks: dense reconstruction, finite
//!   differences, exact Q* via value iteration, regret traces
//! - [`harness`] — multi-seed training runs, experiment grids, CSV output
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability, and the `teql` binary for the equivalent command line.

pub mod discretize;
pub mod envs;
pub mod harness;
pub mod learner;
pub mod oracle;
pub mod policy;
pub mod tensor;

pub use discretize::{DimSpec, DiscretizeError, DiscretizationSpec};
pub use envs::{CartPole, Environment, Pendulum, Step, SyntheticMdp};
pub use learner::{Learner, LearnerConfig, LearnerError, StatTables, Transition};
pub use oracle::RegretTrace;
pub use policy::{PolicyConfig, PolicyKind};
pub use tensor::{CpModel, IndexTuple, TensorError};
