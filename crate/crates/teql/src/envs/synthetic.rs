//! Small tabular MDP with an exactly solvable optimal Q-function.
//!
//! Transition rows are drawn uniformly from the probability simplex and
//! rewards uniformly from `[0, 1]`, all seeded, so regret experiments are
//! reproducible. `q_star` solves the Bellman fixed point by value iteration
//! to sup-norm tolerance 1e-10.

use rand::Rng;
use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("transition row (s={state}, a={action}) sums to {sum}, not 1")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("discount factor must lie in (0, 1), got {0}")]
    BadDiscount(f64),
    #[error("invalid mdp shape: {0}")]
    InvalidShape(String),
}

#[derive(Clone, Debug)]
pub struct SyntheticMdp {
    n_states: usize,
    n_actions: usize,
    /// `[s][a][s']` flattened.
    transition: Vec<f64>,
    /// `[s][a]` flattened.
    reward: Vec<f64>,
    gamma: f64,
}

impl SyntheticMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::InvalidShape("empty state or action set".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(MdpError::InvalidShape(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(MdpError::InvalidShape(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if !(0.0 < gamma && gamma < 1.0) {
            return Err(MdpError::BadDiscount(gamma));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(MdpError::NotStochastic { state: s, action: a, sum });
                }
            }
        }
        Ok(SyntheticMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
        })
    }

    /// Seeded random instance: transition rows uniform on the simplex,
    /// rewards uniform on `[0, 1]`.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, rng: &mut dyn RngCore) -> Self {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            // normalized Exp(1) draws are Dirichlet(1, ..., 1)
            let mut row: Vec<f64> = (0..n_states)
                .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
                .collect();
            let sum: f64 = row.iter().sum();
            for p in &mut row {
                *p /= sum;
            }
            // renormalize the tail so the row sums to exactly 1
            let head: f64 = row[..n_states - 1].iter().sum();
            row[n_states - 1] = 1.0 - head;
            transition.extend(row);
        }
        let reward = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
        SyntheticMdp::new(n_states, n_actions, transition, reward, gamma)
            .expect("generated rows are stochastic")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    /// Samples `s'` from `P(s, a, .)` by inverse transform.
    pub fn sample_next(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let row = self.transition_row(s, a);
        let mut acc = 0.0;
        for (sp, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return sp;
            }
        }
        self.n_states - 1
    }

    /// Optimal Q-function by value iteration to sup-norm tolerance 1e-10.
    /// Returned flattened `[s][a]`.
    pub fn q_star(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.n_states * self.n_actions];
        loop {
            let (next, delta) = self.bellman_backup(&q);
            q = next;
            if delta < 1e-10 {
                return q;
            }
        }
    }

    fn bellman_backup(&self, q: &[f64]) -> (Vec<f64>, f64) {
        let values: Vec<f64> = (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| q[s * self.n_actions + a])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut next = vec![0.0; q.len()];
        let mut delta: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let expected: f64 = self
                    .transition_row(s, a)
                    .iter()
                    .zip(&values)
                    .map(|(&p, &v)| p * v)
                    .sum();
                let updated = self.reward(s, a) + self.gamma * expected;
                let k = s * self.n_actions + a;
                delta = delta.max((updated - q[k]).abs());
                next[k] = updated;
            }
        }
        (next, delta)
    }

    /// Sup-norm Bellman residual of a candidate Q table.
    pub fn bellman_residual(&self, q: &[f64]) -> f64 {
        let (backed, _) = self.bellman_backup(q);
        q.iter()
            .zip(&backed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
