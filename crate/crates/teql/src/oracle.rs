//! Independent verification machinery.
//!
//! Everything here exists to check the fast paths against slower,
//! unmistakably-correct computations: explicit dense reconstruction of a CP
//! model, central finite differences for gradients, exact optimal values by
//! value iteration, and regret traces against those exact values on the
//! synthetic MDP.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::SyntheticMdp;
use crate::learner::{Learner, LearnerConfig, LearnerError, Transition};
use crate::policy::{select_action, PolicyConfig};
use crate::tensor::{CpModel, IndexTuple, TensorError};

/// Largest dense tensor the reconstruction oracle will materialize.
pub const DENSE_CAP: usize = 100_000;

/// Explicit sum of rank-one outer products, row-major over all indices.
/// Refuses tensors with more than [`DENSE_CAP`] entries.
pub fn dense_reconstruct(model: &CpModel) -> Result<Vec<f64>, TensorError> {
    let size: usize = model.dims().iter().product();
    if size > DENSE_CAP {
        return Err(TensorError::InvalidShape(format!(
            "dense reconstruction of {size} entries exceeds cap {DENSE_CAP}"
        )));
    }
    let dims = model.dims();
    let n = dims.len();
    let mut out = vec![0.0f64; size];
    for r in 0..model.rank() {
        let mut idx = vec![1u32; n];
        for slot in out.iter_mut() {
            let mut prod = 1.0;
            for (mode, &i) in idx.iter().enumerate() {
                prod *= model.factor_entry(mode, i, r);
            }
            *slot += prod;
            for mode in (0..n).rev() {
                if (idx[mode] as usize) < dims[mode] {
                    idx[mode] += 1;
                    break;
                }
                idx[mode] = 1;
            }
        }
    }
    Ok(out)
}

/// Central difference `(f(x + h) - f(x - h)) / (2 h)`.
pub fn finite_diff_grad(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Per-step and cumulative regret of one run against exact optimal values.
#[derive(Clone, Debug, Default)]
pub struct RegretTrace {
    /// `V*(s_t) - Q*(s_t, a_t)` per step; zero on restart steps, which are
    /// excluded from the accounting.
    pub instantaneous: Vec<f64>,
    /// Running sum of the instantaneous series.
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn push(&mut self, regret: f64) {
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.instantaneous.push(regret);
        self.cumulative.push(prev + regret);
    }

    pub fn len(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instantaneous.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Mean instantaneous regret over the 0-based step range `[from, to)`.
    pub fn mean_over(&self, from: usize, to: usize) -> f64 {
        let slice = &self.instantaneous[from..to];
        slice.iter().sum::<f64>() / slice.len().max(1) as f64
    }

    /// Trailing means over windows of `window` steps (full windows only).
    pub fn window_averaged(&self, window: usize) -> Vec<f64> {
        if window == 0 || self.instantaneous.len() < window {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.instantaneous.len() - window + 1);
        let mut sum: f64 = self.instantaneous[..window].iter().sum();
        out.push(sum / window as f64);
        for k in window..self.instantaneous.len() {
            sum += self.instantaneous[k] - self.instantaneous[k - window];
            out.push(sum / window as f64);
        }
        out
    }

    /// Writes `step,instantaneous_regret,cumulative_regret` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut out = String::from("step,instantaneous_regret,cumulative_regret\n");
        for (k, (inst, cum)) in self.instantaneous.iter().zip(&self.cumulative).enumerate() {
            out.push_str(&format!("{},{:.12},{:.12}\n", k + 1, inst, cum));
        }
        std::fs::write(path, out)
    }
}

/// How often the regret run teleports to a uniformly random state to keep
/// coverage; the step taken from a teleported state is excluded from the
/// regret sums.
pub const RESTART_PERIOD: usize = 200;

/// Runs the tensor learner with the configured policy on a synthetic MDP for
/// `steps` transitions, scoring each action choice against the exact optimal
/// values. States and actions are already discrete, so index `s + 1` is the
/// tensor index of state `s` and likewise for actions.
pub fn run_regret_experiment(
    mdp: &SyntheticMdp,
    rank: usize,
    init_scale: f64,
    learner_cfg: LearnerConfig,
    policy_cfg: PolicyConfig,
    steps: usize,
    seed: u64,
) -> Result<RegretTrace, LearnerError> {
    let q_star = mdp.q_star();
    let dims = [mdp.n_states(), mdp.n_actions()];
    let model = CpModel::init(&dims, 1, rank, seed ^ 0x7e71, init_scale)?;
    let mut learner = Learner::new(model, learner_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let v_star: Vec<f64> = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| q_star[s * mdp.n_actions() + a])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut trace = RegretTrace::default();
    let mut state = rng.random_range(0..mdp.n_states());
    let mut teleported = false;
    for t in 1..=steps {
        let state_idx = [state as u32 + 1];
        let action_idx = select_action(
            learner.model(),
            learner.tables(),
            &state_idx,
            &policy_cfg,
            policy_cfg.eps0,
            &mut rng,
        )?;
        let action = (action_idx[0] - 1) as usize;

        if teleported {
            trace.push(0.0);
        } else {
            trace.push(v_star[state] - q_star[state * mdp.n_actions() + action]);
        }

        let reward = mdp.reward(state, action);
        let next = mdp.sample_next(state, action, &mut rng);
        learner.update(&Transition {
            state_action: IndexTuple::from_parts(&state_idx, &action_idx),
            next_state: vec![next as u32 + 1],
            reward,
            done: false,
        })?;

        if t % RESTART_PERIOD == 0 {
            state = rng.random_range(0..mdp.n_states());
            teleported = true;
        } else {
            state = next;
            teleported = false;
        }
    }
    Ok(trace)
}
