//! Action selection over the discrete action grid.
//!
//! The main strategy scores every action with an error-uncertainty value
//!
//! ```text
//! EU(s, a) = Q(s, a) + c * (Q_error(s, a) + sqrt(log N_total(s) / (N(s, a) + 1)))
//! ```
//!
//! and picks the argmax, so actions whose entries recently moved a lot or
//! that were rarely tried get scored above their current Q estimate. With
//! the error table ignored this is a plain visit-count UCB rule; with `c = 0`
//! it degenerates to greedy selection. A decaying epsilon-greedy rule is kept
//! for the unpenalized baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::learner::StatTables;
use crate::tensor::{CpModel, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Euge,
    Ucb,
    EpsilonGreedy,
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Exploration constant for the bonus-based rules.
    pub c: f64,
    /// Initial exploration rate for epsilon-greedy.
    pub eps0: f64,
    /// Multiplicative epsilon decay applied once per episode.
    pub eps_decay: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: PolicyKind::Euge,
            c: 2.0,
            eps0: 0.0,
            eps_decay: 0.99,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            PolicyKind::Euge | PolicyKind::Ucb => {
                if !(self.c > 0.0 && self.c.is_finite()) {
                    return Err(format!("exploration constant must be > 0, got {}", self.c));
                }
            }
            PolicyKind::EpsilonGreedy => {
                if !(0.0..=1.0).contains(&self.eps0) {
                    return Err(format!("eps0 must lie in [0, 1], got {}", self.eps0));
                }
                if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
                    return Err(format!("eps_decay must lie in (0, 1], got {}", self.eps_decay));
                }
            }
            PolicyKind::Greedy => {}
        }
        Ok(())
    }

    /// Exploration rate in force during 0-based `episode`: `eps0 * decay^episode`.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        self.eps0 * self.eps_decay.powi(episode as i32)
    }
}

/// Visit-count confidence term. Defined as zero until the state has been
/// visited more than once, where the logarithm would be negative infinity
/// or zero anyway.
fn ucb_term(n_total: u64, n_sa: u64) -> f64 {
    if n_total <= 1 {
        0.0
    } else {
        ((n_total as f64).ln() / (n_sa as f64 + 1.0)).sqrt()
    }
}

fn select_by_bonus(
    model: &CpModel,
    tables: &StatTables,
    state_idx: &[u32],
    c: f64,
    use_error: bool,
) -> Result<Vec<u32>, TensorError> {
    let n_state = model.n_state_dims();
    let n_total = tables.state_total(state_idx);
    let mut full: Vec<u32> = Vec::with_capacity(model.n_modes());
    full.extend_from_slice(state_idx);
    full.resize(model.n_modes(), 0);

    let mut best_action: Vec<u32> = Vec::new();
    let mut best_score = f64::NEG_INFINITY;
    model.scan_actions(state_idx, |action, q| {
        full[n_state..].copy_from_slice(action);
        let n_sa = tables.visit_count_at(&full);
        let error = if use_error { tables.q_error_at(&full) } else { 0.0 };
        let score = q + c * (error + ucb_term(n_total, n_sa));
        if score > best_score {
            best_score = score;
            best_action = action.to_vec();
        }
    })?;
    Ok(best_action)
}

/// Argmax of the error-uncertainty score; ties break to the lowest action index.
pub fn euge_select(
    model: &CpModel,
    tables: &StatTables,
    state_idx: &[u32],
    c: f64,
) -> Result<Vec<u32>, TensorError> {
    select_by_bonus(model, tables, state_idx, c, true)
}

/// Visit-count UCB selection: the error-free special case of the EU score.
pub fn ucb_select(
    model: &CpModel,
    tables: &StatTables,
    state_idx: &[u32],
    c: f64,
) -> Result<Vec<u32>, TensorError> {
    select_by_bonus(model, tables, state_idx, c, false)
}

/// Greedy argmax of the Q estimate.
pub fn greedy_select(model: &CpModel, state_idx: &[u32]) -> Result<Vec<u32>, TensorError> {
    let (action, _) = model.max_q_over_actions(state_idx)?;
    Ok(action)
}

/// With probability `eps` a uniformly random grid action, otherwise greedy.
pub fn epsilon_greedy_select(
    model: &CpModel,
    state_idx: &[u32],
    eps: f64,
    rng: &mut impl Rng,
) -> Result<Vec<u32>, TensorError> {
    if eps > 0.0 && rng.random::<f64>() < eps {
        let flat = rng.random_range(0..model.action_grid_size());
        return Ok(unrank_action(model, flat));
    }
    greedy_select(model, state_idx)
}

/// Row-major unranking of a flat draw into a 1-based action multi-index.
fn unrank_action(model: &CpModel, mut flat: usize) -> Vec<u32> {
    let action_dims = &model.dims()[model.n_state_dims()..];
    let mut idx = vec![0u32; action_dims.len()];
    for (k, &d) in action_dims.iter().enumerate().rev() {
        idx[k] = (flat % d) as u32 + 1;
        flat /= d;
    }
    idx
}

/// Dispatches on the configured policy kind.
pub fn select_action(
    model: &CpModel,
    tables: &StatTables,
    state_idx: &[u32],
    cfg: &PolicyConfig,
    eps_now: f64,
    rng: &mut impl Rng,
) -> Result<Vec<u32>, TensorError> {
    match cfg.kind {
        PolicyKind::Euge => euge_select(model, tables, state_idx, cfg.c),
        PolicyKind::Ucb => ucb_select(model, tables, state_idx, cfg.c),
        PolicyKind::EpsilonGreedy => epsilon_greedy_select(model, state_idx, eps_now, rng),
        PolicyKind::Greedy => greedy_select(model, state_idx),
    }
}
