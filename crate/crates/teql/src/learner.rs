//! Per-transition Q-function update by penalized block coordinate descent.
//!
//! One observed transition drives a regression of the CP model toward the
//! TD target `r + gamma * max_a' Q(s', a')`. The loss subtracts a
//! frequency penalty `lambda * Q^2 / (N + eps)` so pairs that have been
//! visited often receive less fitting pressure than fresh ones. Each mode's
//! factor row is stepped along the analytic gradient for up to `max_inner`
//! iterations, stopping early once the entry value settles within `tau`.
//! The absolute change of the entry across the whole update is recorded as
//! the decomposition error that feeds the exploration bonus.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{CpModel, IndexTuple, TensorError};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("bad learner config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("update diverged at {idx:?}: q-value {value}")]
    Diverged { idx: IndexTuple, value: f64 },
    #[error("stat table i/o: {0}")]
    TableIo(String),
}

/// Hyperparameters of the penalized BCD update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Penalty weight. Zero recovers the plain TD regression.
    pub lambda: f64,
    /// Stabilizer added to the visit count in the penalty denominator.
    pub eps_pen: f64,
    /// Base learning rate; the effective rate is `alpha0 / (1 + kappa * t)`.
    pub alpha0: f64,
    /// Learning-rate decay per transition.
    pub kappa: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Inner convergence threshold on the entry value.
    pub tau: f64,
    /// Cap on inner gradient iterations per mode.
    pub max_inner: usize,
    /// Absolute bound the entry is rescaled into after each update, if set.
    /// The penalty is unbounded below, so an unclamped run can blow up at
    /// rarely visited pairs.
    pub q_clip: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            lambda: 0.0,
            eps_pen: 1.0,
            alpha0: 0.005,
            kappa: 1e-5,
            gamma: 0.9,
            tau: 0.01,
            max_inner: 5,
            q_clip: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: String| Err(LearnerError::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.eps_pen > 0.0) {
            return bad(format!("eps_pen must be > 0, got {}", self.eps_pen));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad(format!("alpha0 must be positive, got {}", self.alpha0));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be finite and >= 0, got {}", self.kappa));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if self.max_inner == 0 {
            return bad("max_inner must be >= 1".into());
        }
        if let Some(c) = self.q_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("q_clip must be positive and finite, got {c}"));
            }
        }
        Ok(())
    }

    /// Per-transition learning rate `alpha0 / (1 + kappa * t)`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        self.alpha0 / (1.0 + self.kappa * t as f64)
    }
}

/// One discretized observation driving an update.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Combined (state, action) index of the visited pair.
    pub state_action: IndexTuple,
    /// State index of the successor (state components only).
    pub next_state: Vec<u32>,
    pub reward: f64,
    /// Terminal transitions bootstrap from zero instead of the action max.
    pub done: bool,
}

/// Sparse visit counts, per-state totals, and last decomposition errors.
///
/// Keys are the packed index tuples of visited pairs, so memory grows with
/// the number of distinct pairs actually seen, never with the grid size.
#[derive(Clone, Debug, Default)]
pub struct StatTables {
    n_state_dims: usize,
    visit: HashMap<IndexTuple, u64>,
    state_total: HashMap<Vec<u32>, u64>,
    q_error: HashMap<IndexTuple, f64>,
}

impl StatTables {
    pub fn new(n_state_dims: usize) -> Self {
        StatTables {
            n_state_dims,
            ..Default::default()
        }
    }

    pub fn n_state_dims(&self) -> usize {
        self.n_state_dims
    }

    /// `N(s, a)`; zero when the pair was never visited.
    pub fn visit_count(&self, idx: &IndexTuple) -> u64 {
        self.visit.get(idx).copied().unwrap_or(0)
    }

    /// Same as [`visit_count`](Self::visit_count), keyed by a borrowed slice.
    pub fn visit_count_at(&self, indices: &[u32]) -> u64 {
        self.visit.get(indices).copied().unwrap_or(0)
    }

    /// `N_total(s) = sum_a N(s, a)`; zero for unseen states.
    pub fn state_total(&self, state_idx: &[u32]) -> u64 {
        self.state_total.get(state_idx).copied().unwrap_or(0)
    }

    /// Last recorded decomposition error at the pair; zero when absent.
    pub fn q_error(&self, idx: &IndexTuple) -> f64 {
        self.q_error.get(idx).copied().unwrap_or(0.0)
    }

    /// Same as [`q_error`](Self::q_error), keyed by a borrowed slice.
    pub fn q_error_at(&self, indices: &[u32]) -> f64 {
        self.q_error.get(indices).copied().unwrap_or(0.0)
    }

    pub fn record_visit(&mut self, idx: &IndexTuple) {
        *self.visit.entry(idx.clone()).or_insert(0) += 1;
        let state = idx.state_part(self.n_state_dims).to_vec();
        *self.state_total.entry(state).or_insert(0) += 1;
    }

    pub fn set_q_error(&mut self, idx: &IndexTuple, error: f64) {
        self.q_error.insert(idx.clone(), error);
    }

    pub fn visited_pairs(&self) -> usize {
        self.visit.len()
    }

    pub fn visited_states(&self) -> usize {
        self.state_total.len()
    }

    pub fn error_entries(&self) -> usize {
        self.q_error.len()
    }

    /// Verifies `N_total(s) == sum_a N(s, a)` for every stored state.
    pub fn totals_consistent(&self) -> bool {
        let mut recomputed: HashMap<&[u32], u64> = HashMap::new();
        for (idx, &n) in &self.visit {
            *recomputed.entry(idx.state_part(self.n_state_dims)).or_insert(0) += n;
        }
        recomputed.len() == self.state_total.len()
            && recomputed
                .iter()
                .all(|(s, &n)| self.state_total.get(*s) == Some(&n))
    }

    /// Writes `i_1,...,i_N<TAB>count<TAB>error` lines, sorted by key.
    pub fn dump(&self, path: &Path) -> Result<(), LearnerError> {
        let mut keys: Vec<&IndexTuple> = self.visit.keys().collect();
        keys.sort();
        let mut out = String::new();
        for idx in keys {
            let key = idx
                .indices()
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "{key}\t{}\t{}\n",
                self.visit[idx],
                self.q_error.get(idx).copied().unwrap_or(0.0)
            ));
        }
        fs::write(path, out).map_err(|e| LearnerError::TableIo(e.to_string()))
    }

    /// Rebuilds tables from a dump; state totals are recomputed from counts.
    pub fn load(path: &Path, n_state_dims: usize) -> Result<Self, LearnerError> {
        let text = fs::read_to_string(path).map_err(|e| LearnerError::TableIo(e.to_string()))?;
        let mut tables = StatTables::new(n_state_dims);
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (key, count, error) = (|| {
                let key = parts.next()?;
                let count = parts.next()?.parse::<u64>().ok()?;
                let error = parts.next()?.parse::<f64>().ok()?;
                Some((key, count, error))
            })()
            .ok_or_else(|| LearnerError::TableIo(format!("malformed line {}", lineno + 1)))?;
            let indices = key
                .split(',')
                .map(|p| p.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| LearnerError::TableIo(format!("line {}: {e}", lineno + 1)))?;
            let idx = IndexTuple::new(indices);
            let state = idx.state_part(n_state_dims).to_vec();
            *tables.state_total.entry(state).or_insert(0) += count;
            tables.visit.insert(idx.clone(), count);
            if error != 0.0 {
                tables.q_error.insert(idx, error);
            }
        }
        Ok(tables)
    }
}

/// Running tallies of factor-entry reads and writes, split by phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub updates: u64,
    /// Entries read while maximizing over the action grid for the target.
    pub action_max_entry_reads: u64,
    /// Entries read or written inside the gradient iterations.
    pub gradient_entry_touches: u64,
    /// Entries read for snapshot evaluations outside the inner loops.
    pub eval_entry_reads: u64,
    /// Inner gradient iterations actually executed.
    pub inner_iterations: u64,
}

impl CostCounters {
    pub fn total_entry_touches(&self) -> u64 {
        self.action_max_entry_reads + self.gradient_entry_touches + self.eval_entry_reads
    }
}

/// TD target for a transition, from the pre-update model.
pub fn compute_target(
    model: &CpModel,
    transition: &Transition,
    gamma: f64,
) -> Result<f64, TensorError> {
    if transition.done {
        return Ok(transition.reward);
    }
    let (_, best) = model.max_q_over_actions(&transition.next_state)?;
    Ok(transition.reward + gamma * best)
}

/// Penalized loss `0.5 (target - q)^2 - lambda q^2 / (N + eps)`.
pub fn loss(
    model: &CpModel,
    idx: &IndexTuple,
    target: f64,
    visit_count: u64,
    cfg: &LearnerConfig,
) -> Result<f64, TensorError> {
    let q = model.evaluate(idx)?;
    Ok(loss_value(q, target, visit_count, cfg))
}

fn loss_value(q: f64, target: f64, visit_count: u64, cfg: &LearnerConfig) -> f64 {
    0.5 * (target - q).powi(2) - cfg.lambda * q * q / (visit_count as f64 + cfg.eps_pen)
}

/// Analytic gradient of [`loss`] with respect to factor entry `(mode, r)` at
/// the tuple's row:
/// `-(target - q) * prod_{m != mode} F_m(i_m, r) - 2 lambda q prod / (N + eps)`.
pub fn grad_factor_entry(
    model: &CpModel,
    idx: &IndexTuple,
    target: f64,
    visit_count: u64,
    cfg: &LearnerConfig,
    mode: usize,
    r: usize,
) -> Result<f64, TensorError> {
    model.validate_index(idx)?;
    let q = model.eval_unchecked(idx.indices());
    let others: f64 = idx
        .indices()
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != mode)
        .map(|(m, &i)| model.factor_entry(m, i, r))
        .product();
    let td = target - q;
    let pen = 2.0 * cfg.lambda * q / (visit_count as f64 + cfg.eps_pen);
    Ok(-(td + pen) * others)
}

/// Result of one BCD update.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    /// `|q_before - q_after|` at the visited pair, also stored in the tables.
    pub q_error: f64,
    pub target: f64,
    pub q_before: f64,
    pub q_after: f64,
}

/// Owns a CP model, its visit statistics, and the update schedule.
#[derive(Clone, Debug)]
pub struct Learner {
    model: CpModel,
    tables: StatTables,
    cfg: LearnerConfig,
    t: u64,
    counters: CostCounters,
}

impl Learner {
    pub fn new(model: CpModel, cfg: LearnerConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let tables = StatTables::new(model.n_state_dims());
        Ok(Learner {
            model,
            tables,
            cfg,
            t: 0,
            counters: CostCounters::default(),
        })
    }

    pub fn model(&self) -> &CpModel {
        &self.model
    }

    pub fn tables(&self) -> &StatTables {
        &self.tables
    }

    pub fn cfg(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn counters(&self) -> &CostCounters {
        &self.counters
    }

    pub fn transitions_seen(&self) -> u64 {
        self.t
    }

    /// Restores a checkpointed model and tables in place of the current ones.
    pub fn restore(&mut self, model: CpModel, tables: StatTables, t: u64) {
        self.model = model;
        self.tables = tables;
        self.t = t;
    }

    /// One full penalized BCD update for a single transition.
    ///
    /// The target is computed once from the pre-update model; every mode's
    /// row `(i_n, .)` is then stepped in order, each inner iteration moving
    /// all `R` entries of the row simultaneously (Jacobi within the row) and
    /// re-evaluating the entry, until the change drops below `tau` or the
    /// iteration cap is hit. Finally the decomposition error is recorded and
    /// the visit counters advance.
    pub fn update(&mut self, transition: &Transition) -> Result<UpdateOutcome, LearnerError> {
        self.t += 1;
        let alpha = self.cfg.learning_rate(self.t);

        let idx = &transition.state_action;
        self.model.validate_index(idx)?;

        let rank = self.model.rank();
        let n_modes = self.model.n_modes();

        let q_before = self.model.eval_unchecked(idx.indices());
        self.counters.eval_entry_reads += (rank * n_modes) as u64;

        let target = compute_target(&self.model, transition, self.cfg.gamma)?;
        if !transition.done {
            self.counters.action_max_entry_reads += self.model.action_max_entry_reads();
        }

        let visits = self.tables.visit_count(idx) as f64;
        let pen_denom = visits + self.cfg.eps_pen;

        let mut others = vec![0.0f64; rank];
        for mode in 0..n_modes {
            // products over the fixed modes; row `mode` is the only one moving
            for (r, o) in others.iter_mut().enumerate() {
                *o = idx
                    .indices()
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != mode)
                    .map(|(m, &i)| self.model.factor_entry(m, i, r))
                    .product();
            }
            self.counters.gradient_entry_touches += (rank * (n_modes - 1)) as u64;

            let row_index = idx.indices()[mode];
            let mut q_prev: f64 = {
                let row = self.model.factor_row(mode, row_index);
                row.iter().zip(&others).map(|(f, o)| f * o).sum()
            };
            self.counters.eval_entry_reads += rank as u64;

            for _ in 0..self.cfg.max_inner {
                let td = target - q_prev;
                let pen = 2.0 * self.cfg.lambda * q_prev / pen_denom;
                let row = self.model.factor_row_mut(mode, row_index);
                let mut q_curr = 0.0;
                for (f, &o) in row.iter_mut().zip(&others) {
                    *f -= alpha * (-(td + pen) * o);
                    q_curr += *f * o;
                }
                self.counters.gradient_entry_touches += 3 * rank as u64;
                self.counters.inner_iterations += 1;
                let settled = (q_curr - q_prev).abs() < self.cfg.tau;
                q_prev = q_curr;
                if settled {
                    break;
                }
            }
        }

        let mut q_after = self.model.eval_unchecked(idx.indices());
        self.counters.eval_entry_reads += (rank * n_modes) as u64;

        if let Some(clip) = self.cfg.q_clip {
            if q_after.is_finite() && q_after.abs() > clip {
                // shrink every updated row by the same factor so the entry
                // lands exactly on the bound with its sign preserved
                let shrink = (clip / q_after.abs()).powf(1.0 / n_modes as f64);
                for mode in 0..n_modes {
                    for f in self.model.factor_row_mut(mode, idx.indices()[mode]) {
                        *f *= shrink;
                    }
                }
                self.counters.gradient_entry_touches += (rank * n_modes) as u64;
                q_after = self.model.eval_unchecked(idx.indices());
                self.counters.eval_entry_reads += (rank * n_modes) as u64;
            }
        }

        if !q_after.is_finite() {
            return Err(LearnerError::Diverged {
                idx: idx.clone(),
                value: q_after,
            });
        }

        let q_error = (q_before - q_after).abs();
        self.tables.set_q_error(idx, q_error);
        self.tables.record_visit(idx);
        self.counters.updates += 1;

        Ok(UpdateOutcome {
            q_error,
            target,
            q_before,
            q_after,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff_grad;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_model(dims: &[usize], n_state: usize, rank: usize) -> CpModel {
        CpModel::init(dims, n_state, rank, 0, 0.0).unwrap()
    }

    fn transition(idx: Vec<u32>, next: Vec<u32>, reward: f64, done: bool) -> Transition {
        Transition {
            state_action: IndexTuple::new(idx),
            next_state: next,
            reward,
            done,
        }
    }

    #[test]
    fn target_on_zero_model_is_the_reward() {
        let m = zero_model(&[3, 3, 4], 2, 2);
        let tr = transition(vec![1, 1, 1], vec![2, 2], 1.0, false);
        assert_eq!(compute_target(&m, &tr, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn terminal_target_ignores_the_model() {
        let m = CpModel::init(&[3, 3, 4], 2, 2, 5, 1.0).unwrap();
        let tr = transition(vec![1, 1, 1], vec![2, 2], -1.0, true);
        assert_eq!(compute_target(&m, &tr, 0.9).unwrap(), -1.0);
    }

    #[test]
    fn target_matches_exhaustive_action_enumeration() {
        let m = CpModel::init(&[3, 3, 7], 2, 3, 12, 0.7).unwrap();
        let tr = transition(vec![1, 2, 3], vec![3, 1], 0.25, false);
        let mut best = f64::NEG_INFINITY;
        for a in 1..=7u32 {
            best = best.max(m.evaluate(&IndexTuple::new(vec![3, 1, a])).unwrap());
        }
        let got = compute_target(&m, &tr, 0.9).unwrap();
        assert!((got - (0.25 + 0.9 * best)).abs() < 1e-12);
    }

    #[test]
    fn loss_examples_from_direct_substitution() {
        let mut cfg = LearnerConfig::default();
        // exact fit, no penalty
        cfg.lambda = 0.0;
        let m = CpModel::from_factors(vec![vec![2.0], vec![1.0]], &[1, 1], 1, 1).unwrap();
        let idx = IndexTuple::new(vec![1, 1]);
        assert_eq!(loss(&m, &idx, 2.0, 0, &cfg).unwrap(), 0.0);
        // lambda=1, eps=1, N=0, q=2, target=2 -> -4
        cfg.lambda = 1.0;
        cfg.eps_pen = 1.0;
        assert_eq!(loss(&m, &idx, 2.0, 0, &cfg).unwrap(), -4.0);
        // penalty vanishes as N grows
        let with_pen = loss(&m, &idx, 1.0, 1_000_000, &cfg).unwrap();
        assert!((with_pen - 0.5).abs() < 1e-5);
    }

    #[test]
    fn penalty_magnitude_is_nonincreasing_in_visit_count() {
        let cfg = LearnerConfig {
            lambda: 0.7,
            ..Default::default()
        };
        let m = CpModel::from_factors(vec![vec![1.5], vec![1.0]], &[1, 1], 1, 1).unwrap();
        let idx = IndexTuple::new(vec![1, 1]);
        let fit = 0.5 * (2.0f64 - 1.5).powi(2);
        let mut last = f64::INFINITY;
        for n in [0u64, 1, 2, 5, 10, 100, 10_000] {
            let penalty = (loss(&m, &idx, 2.0, n, &cfg).unwrap() - fit).abs();
            assert!(penalty <= last + 1e-15);
            last = penalty;
        }
    }

    #[test]
    fn gradient_is_zero_at_exact_fit_without_penalty() {
        let cfg = LearnerConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let m = CpModel::init(&[3, 3, 4], 2, 3, 3, 0.5).unwrap();
        let idx = IndexTuple::new(vec![2, 3, 1]);
        let target = m.evaluate(&idx).unwrap();
        for mode in 0..3 {
            for r in 0..3 {
                let g = grad_factor_entry(&m, &idx, target, 5, &cfg, mode, r).unwrap();
                assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn rank1_gradient_reduces_to_negative_other_product() {
        // q = 0 at the entry, target 1, huge N so the penalty is negligible
        let cfg = LearnerConfig {
            lambda: 1.0,
            ..Default::default()
        };
        let m = CpModel::from_factors(vec![vec![0.7], vec![0.0]], &[1, 1], 1, 1).unwrap();
        let idx = IndexTuple::new(vec![1, 1]);
        let g = grad_factor_entry(&m, &idx, 1.0, u64::MAX / 2, &cfg, 1, 0).unwrap();
        assert!((g - (-0.7)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..40 {
            let cfg = LearnerConfig {
                lambda: [0.0, 0.01, 1.0][case % 3],
                ..Default::default()
            };
            let visits = [0u64, 1, 10, 1_000_000][case % 4];
            let m = CpModel::init(&[3, 4, 5], 2, 2, 1000 + case as u64, 0.9).unwrap();
            let idx = IndexTuple::new(vec![
                rng.random_range(1..=3),
                rng.random_range(1..=4),
                rng.random_range(1..=5),
            ]);
            let target: f64 = rng.random_range(-2.0..2.0);
            for mode in 0..3 {
                for r in 0..2 {
                    let analytic =
                        grad_factor_entry(&m, &idx, target, visits, &cfg, mode, r).unwrap();
                    let numeric = finite_diff_grad(
                        |x| {
                            let mut probe = m.clone();
                            probe.factor_row_mut(mode, idx.indices()[mode])[r] = x;
                            loss(&probe, &idx, target, visits, &cfg).unwrap()
                        },
                        m.factor_entry(mode, idx.indices()[mode], r),
                        1e-6,
                    );
                    let scale = analytic.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        (analytic - numeric).abs() / scale < 1e-5,
                        "case {case} mode {mode} r {r}: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn infinite_tau_runs_exactly_one_inner_iteration_per_mode() {
        let cfg = LearnerConfig {
            tau: f64::INFINITY,
            ..Default::default()
        };
        let model = CpModel::init(&[3, 3, 4], 2, 2, 9, 0.5).unwrap();
        let mut learner = Learner::new(model, cfg).unwrap();
        let tr = transition(vec![1, 2, 3], vec![2, 2], 0.5, false);
        learner.update(&tr).unwrap();
        assert_eq!(learner.counters().inner_iterations, 3);
    }

    #[test]
    fn repeated_fixed_target_fit_converges_monotonically() {
        let cfg = LearnerConfig {
            lambda: 0.0,
            alpha0: 0.005,
            q_clip: None,
            ..Default::default()
        };
        let model = CpModel::init(&[4, 4, 4], 2, 10, 21, 1.0).unwrap();
        let mut learner = Learner::new(model, cfg).unwrap();
        // terminal transition keeps the target fixed at the reward
        let tr = transition(vec![2, 3, 1], vec![1, 1], 1.0, true);
        let mut gaps = Vec::new();
        for _ in 0..500 {
            let out = learner.update(&tr).unwrap();
            gaps.push((out.q_after - 1.0).abs());
        }
        for pair in gaps.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{} then {}", pair[0], pair[1]);
        }
        assert!(
            *gaps.last().unwrap() < 0.05,
            "gap after 500 updates: {}",
            gaps.last().unwrap()
        );
    }

    #[test]
    fn update_advances_visit_bookkeeping() {
        let model = CpModel::init(&[3, 3, 4], 2, 2, 2, 0.3).unwrap();
        let mut learner = Learner::new(model, LearnerConfig::default()).unwrap();
        let idx = vec![1u32, 2, 3];
        let tr = transition(idx.clone(), vec![2, 1], 0.0, false);
        learner.update(&tr).unwrap();
        let key = IndexTuple::new(idx);
        assert_eq!(learner.tables().visit_count(&key), 1);
        assert_eq!(learner.tables().state_total(&[1, 2]), 1);
        learner.update(&tr).unwrap();
        assert_eq!(learner.tables().visit_count(&key), 2);
        assert!(learner.tables().totals_consistent());
    }

    #[test]
    fn update_touches_only_the_visited_rows() {
        let model = CpModel::init(&[4, 5, 6], 2, 3, 31, 0.6).unwrap();
        let before = model.clone();
        let mut learner = Learner::new(model, LearnerConfig::default()).unwrap();
        let tr = transition(vec![2, 4, 5], vec![1, 1], 1.0, false);
        learner.update(&tr).unwrap();
        let after = learner.model();
        let visited = [2u32, 4, 5];
        for (mode, &dim) in [4usize, 5, 6].iter().enumerate() {
            for row in 1..=dim as u32 {
                let a = before.factor_row(mode, row);
                let b = after.factor_row(mode, row);
                if row == visited[mode] {
                    assert_ne!(a, b, "visited row should move");
                } else {
                    assert_eq!(a, b, "mode {mode} row {row} must be untouched");
                }
            }
        }
    }

    #[test]
    fn q_error_matches_before_after_snapshots() {
        let model = CpModel::init(&[3, 3, 4], 2, 4, 8, 0.8).unwrap();
        let mut learner = Learner::new(model.clone(), LearnerConfig::default()).unwrap();
        let idx = IndexTuple::new(vec![3, 3, 2]);
        let tr = transition(vec![3, 3, 2], vec![1, 2], -0.5, false);
        let before = model.evaluate(&idx).unwrap();
        let out = learner.update(&tr).unwrap();
        let after = learner.model().evaluate(&idx).unwrap();
        assert!((out.q_error - (before - after).abs()).abs() < 1e-15);
        assert_eq!(learner.tables().q_error(&idx), out.q_error);
    }

    #[test]
    fn single_inner_step_does_not_increase_td_loss_at_small_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let mut failures = 0;
        let runs = 1000;
        for k in 0..runs {
            let cfg = LearnerConfig {
                lambda: 0.0,
                alpha0: 1e-4,
                kappa: 0.0,
                tau: f64::INFINITY, // exactly one iteration per mode
                max_inner: 1,
                ..Default::default()
            };
            let model = CpModel::init(&[3, 3, 4], 2, 3, 9000 + k, 1.0).unwrap();
            let mut learner = Learner::new(model, cfg).unwrap();
            let tr = transition(
                vec![
                    rng.random_range(1..=3),
                    rng.random_range(1..=3),
                    rng.random_range(1..=4),
                ],
                vec![rng.random_range(1..=3), rng.random_range(1..=3)],
                rng.random_range(-1.0..1.0),
                true,
            );
            let idx = tr.state_action.clone();
            let before = learner.model().evaluate(&idx).unwrap();
            let out = learner.update(&tr).unwrap();
            let after = learner.model().evaluate(&idx).unwrap();
            let loss_before = 0.5 * (out.target - before).powi(2);
            let loss_after = 0.5 * (out.target - after).powi(2);
            if loss_after > loss_before + 1e-12 {
                failures += 1;
            }
        }
        assert!(
            (failures as f64) < 0.01 * runs as f64,
            "{failures} of {runs} inner steps increased the TD loss"
        );
    }

    #[test]
    fn q_clip_rescales_the_entry_onto_the_bound() {
        let cfg = LearnerConfig {
            alpha0: 2.0, // deliberately aggressive
            q_clip: Some(1.5),
            tau: f64::INFINITY,
            ..Default::default()
        };
        let model = CpModel::init(&[3, 3, 4], 2, 2, 6, 1.0).unwrap();
        let mut learner = Learner::new(model, cfg).unwrap();
        let tr = transition(vec![1, 1, 1], vec![1, 1], 50.0, true);
        for _ in 0..5 {
            let out = learner.update(&tr).unwrap();
            assert!(out.q_after.abs() <= 1.5 + 1e-9, "clipped to {}", out.q_after);
        }
    }

    #[test]
    fn runaway_update_reports_divergence() {
        let cfg = LearnerConfig {
            alpha0: 1e155,
            q_clip: None,
            tau: f64::INFINITY,
            ..Default::default()
        };
        let model = CpModel::init(&[3, 3, 4], 2, 2, 6, 1.0).unwrap();
        let mut learner = Learner::new(model, cfg).unwrap();
        let tr = transition(vec![1, 1, 1], vec![1, 1], 1.0, true);
        let mut diverged = false;
        for _ in 0..4 {
            if let Err(LearnerError::Diverged { idx, .. }) = learner.update(&tr) {
                assert_eq!(idx, IndexTuple::new(vec![1, 1, 1]));
                diverged = true;
                break;
            }
        }
        assert!(diverged);
    }

    #[test]
    fn stat_tables_dump_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tables.tsv");
        let mut tables = StatTables::new(2);
        for (idx, err) in [
            (vec![1u32, 2, 3], 0.5),
            (vec![1, 2, 4], 0.0),
            (vec![2, 1, 1], 1.25),
        ] {
            let key = IndexTuple::new(idx);
            tables.record_visit(&key);
            tables.record_visit(&key);
            tables.set_q_error(&key, err);
        }
        tables.dump(&path).unwrap();
        let back = StatTables::load(&path, 2).unwrap();
        assert_eq!(back.visit_count(&IndexTuple::new(vec![1, 2, 3])), 2);
        assert_eq!(back.state_total(&[1, 2]), 4);
        assert_eq!(back.q_error(&IndexTuple::new(vec![2, 1, 1])), 1.25);
        assert!(back.totals_consistent());
    }
}
