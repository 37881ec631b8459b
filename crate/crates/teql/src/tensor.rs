//! CP-factorized Q-function storage and evaluation.
//!
//! A rank-`R` CP model keeps one `d_n x R` factor matrix per tensor mode.
//! The Q-value of an index tuple `(i_1, ..., i_N)` is
//! `sum_r prod_n F_n(i_n, r)`, so the whole table costs `R * sum_n d_n`
//! parameters instead of `prod_n d_n` entries. Indices are 1-based on the
//! public surface; storage is 0-based row-major.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("index {index} out of range [1, {dim}] in mode {mode}")]
    IndexOutOfRange { mode: usize, index: u32, dim: usize },
    #[error("expected {expected} indices, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("invalid model shape: {0}")]
    InvalidShape(String),
    #[error("checkpoint i/o: {0}")]
    Checkpoint(String),
}

/// 1-based multi-index into the Q-tensor, state dimensions first.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTuple(Vec<u32>);

impl IndexTuple {
    pub fn new(indices: Vec<u32>) -> Self {
        IndexTuple(indices)
    }

    /// Concatenates state indices and action indices.
    pub fn from_parts(state: &[u32], action: &[u32]) -> Self {
        let mut v = Vec::with_capacity(state.len() + action.len());
        v.extend_from_slice(state);
        v.extend_from_slice(action);
        IndexTuple(v)
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The leading `n_state` components (the state part of the key).
    pub fn state_part(&self, n_state: usize) -> &[u32] {
        &self.0[..n_state]
    }

    /// The trailing components after the first `n_state` (the action part).
    pub fn action_part(&self, n_state: usize) -> &[u32] {
        &self.0[n_state..]
    }
}

impl fmt::Debug for IndexTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IndexTuple{:?}", self.0)
    }
}

impl From<Vec<u32>> for IndexTuple {
    fn from(v: Vec<u32>) -> Self {
        IndexTuple(v)
    }
}

// lets sparse tables be queried with a borrowed slice, no key allocation
impl std::borrow::Borrow<[u32]> for IndexTuple {
    fn borrow(&self) -> &[u32] {
        &self.0
    }
}

/// Rank-`R` CP factorization of the Q-tensor.
///
/// `factors[n]` is the mode-`n` factor matrix, stored row-major with `dims[n]`
/// rows and `rank` columns. The first `n_state_dims` modes index the state,
/// the rest index the action grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CpModel {
    factors: Vec<Vec<f64>>,
    dims: Vec<usize>,
    rank: usize,
    n_state_dims: usize,
}

impl CpModel {
    /// Builds a model with factor entries drawn i.i.d. uniform on
    /// `[-scale, scale]`, deterministically from `seed`.
    pub fn init(
        dims: &[usize],
        n_state_dims: usize,
        rank: usize,
        seed: u64,
        scale: f64,
    ) -> Result<Self, TensorError> {
        Self::validate_shape(dims, n_state_dims, rank)?;
        if !scale.is_finite() || scale < 0.0 {
            return Err(TensorError::InvalidShape(format!(
                "init scale must be finite and nonnegative, got {scale}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = dims
            .iter()
            .map(|&d| {
                (0..d * rank)
                    .map(|_| {
                        if scale == 0.0 {
                            0.0
                        } else {
                            rng.random_range(-scale..=scale)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(CpModel {
            factors,
            dims: dims.to_vec(),
            rank,
            n_state_dims,
        })
    }

    /// Builds a model from explicit factor matrices (row-major, `dims[n] x rank`).
    pub fn from_factors(
        factors: Vec<Vec<f64>>,
        dims: &[usize],
        n_state_dims: usize,
        rank: usize,
    ) -> Result<Self, TensorError> {
        Self::validate_shape(dims, n_state_dims, rank)?;
        if factors.len() != dims.len() {
            return Err(TensorError::InvalidShape(format!(
                "got {} factor matrices for {} modes",
                factors.len(),
                dims.len()
            )));
        }
        for (n, (f, &d)) in factors.iter().zip(dims).enumerate() {
            if f.len() != d * rank {
                return Err(TensorError::InvalidShape(format!(
                    "mode {n} factor has {} entries, expected {}x{}",
                    f.len(),
                    d,
                    rank
                )));
            }
        }
        Ok(CpModel {
            factors,
            dims: dims.to_vec(),
            rank,
            n_state_dims,
        })
    }

    fn validate_shape(dims: &[usize], n_state_dims: usize, rank: usize) -> Result<(), TensorError> {
        if dims.is_empty() {
            return Err(TensorError::InvalidShape("empty dims".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape("zero-size mode".into()));
        }
        if rank == 0 {
            return Err(TensorError::InvalidShape("rank must be >= 1".into()));
        }
        if n_state_dims == 0 || n_state_dims >= dims.len() {
            return Err(TensorError::InvalidShape(format!(
                "n_state_dims {} must leave at least one action mode of {}",
                n_state_dims,
                dims.len()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn n_state_dims(&self) -> usize {
        self.n_state_dims
    }

    pub fn n_action_dims(&self) -> usize {
        self.dims.len() - self.n_state_dims
    }

    /// Total stored parameters: `R * sum_n d_n`.
    pub fn parameter_count(&self) -> usize {
        self.rank * self.dims.iter().sum::<usize>()
    }

    /// Effective dimension `R * N` used in the cost and regret scaling.
    pub fn effective_dim(&self) -> usize {
        self.rank * self.dims.len()
    }

    /// Number of points on the action grid: `prod` of the action-mode sizes.
    pub fn action_grid_size(&self) -> usize {
        self.dims[self.n_state_dims..].iter().product()
    }

    pub fn factor_entry(&self, mode: usize, index_1based: u32, r: usize) -> f64 {
        self.factors[mode][(index_1based as usize - 1) * self.rank + r]
    }

    /// Row `(i_n, .)` of the mode-`n` factor matrix, 1-based.
    pub fn factor_row(&self, mode: usize, index_1based: u32) -> &[f64] {
        let start = (index_1based as usize - 1) * self.rank;
        &self.factors[mode][start..start + self.rank]
    }

    pub(crate) fn factor_row_mut(&mut self, mode: usize, index_1based: u32) -> &mut [f64] {
        let rank = self.rank;
        let start = (index_1based as usize - 1) * rank;
        &mut self.factors[mode][start..start + rank]
    }

    pub fn validate_index(&self, idx: &IndexTuple) -> Result<(), TensorError> {
        self.validate_components(idx.indices(), 0, self.dims.len())
    }

    /// Checks `components` against modes `[mode_offset, mode_offset + expected)`.
    fn validate_components(
        &self,
        components: &[u32],
        mode_offset: usize,
        expected: usize,
    ) -> Result<(), TensorError> {
        if components.len() != expected {
            return Err(TensorError::WrongArity {
                expected,
                got: components.len(),
            });
        }
        for (k, &i) in components.iter().enumerate() {
            let mode = mode_offset + k;
            let d = self.dims[mode];
            if i < 1 || i as usize > d {
                return Err(TensorError::IndexOutOfRange { mode, index: i, dim: d });
            }
        }
        Ok(())
    }

    /// Q-value at a full (state, action) index tuple: `sum_r prod_n F_n(i_n, r)`.
    pub fn evaluate(&self, idx: &IndexTuple) -> Result<f64, TensorError> {
        self.validate_index(idx)?;
        Ok(self.eval_unchecked(idx.indices()))
    }

    pub(crate) fn eval_unchecked(&self, indices: &[u32]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.rank {
            let mut prod = 1.0;
            for (n, &i) in indices.iter().enumerate() {
                prod *= self.factors[n][(i as usize - 1) * self.rank + r];
            }
            total += prod;
        }
        total
    }

    /// Calls `visit(action_indices, q)` for every point of the action grid,
    /// in row-major order (last action mode fastest), reusing one buffer.
    pub fn scan_actions<F>(&self, state_idx: &[u32], mut visit: F) -> Result<(), TensorError>
    where
        F: FnMut(&[u32], f64),
    {
        self.validate_components(state_idx, 0, self.n_state_dims)?;
        let n_action = self.n_action_dims();
        let mut full: Vec<u32> = Vec::with_capacity(self.dims.len());
        full.extend_from_slice(state_idx);
        full.extend(std::iter::repeat(1u32).take(n_action));
        loop {
            let q = self.eval_unchecked(&full);
            visit(&full[self.n_state_dims..], q);
            // odometer increment over the action components
            let mut mode = self.dims.len();
            loop {
                if mode == self.n_state_dims {
                    return Ok(());
                }
                mode -= 1;
                if (full[mode] as usize) < self.dims[mode] {
                    full[mode] += 1;
                    break;
                }
                full[mode] = 1;
            }
        }
    }

    /// Maximizes the Q-value over the whole action grid for a fixed state.
    ///
    /// Ties break toward the earliest grid point in scan order, i.e. the
    /// lexicographically smallest action index.
    pub fn max_q_over_actions(&self, state_idx: &[u32]) -> Result<(Vec<u32>, f64), TensorError> {
        let mut best_action: Vec<u32> = Vec::new();
        let mut best_q = f64::NEG_INFINITY;
        self.scan_actions(state_idx, |action, q| {
            if q > best_q {
                best_q = q;
                best_action = action.to_vec();
            }
        })?;
        Ok((best_action, best_q))
    }

    /// Factor entries read by one `max_q_over_actions` sweep.
    pub fn action_max_entry_reads(&self) -> u64 {
        (self.action_grid_size() * self.rank * self.n_modes()) as u64
    }

    pub fn save(&self, path: &Path) -> Result<(), TensorError> {
        let ck = Checkpoint {
            rank: self.rank,
            dims: self.dims.clone(),
            n_state_dims: self.n_state_dims,
            factors: self.factors.clone(),
        };
        let json = serde_json::to_string(&ck)
            .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TensorError> {
        let text = fs::read_to_string(path).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        Self::from_factors(ck.factors, &ck.dims, ck.n_state_dims, ck.rank)
    }
}

/// On-disk model layout: header (rank, dims, state arity), then factor
/// matrices in mode order, each row-major.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    rank: usize,
    dims: Vec<usize>,
    n_state_dims: usize,
    factors: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense_reconstruct;
    use proptest::prelude::*;

    fn ones_model(dims: &[usize], n_state: usize, rank: usize) -> CpModel {
        let factors = dims.iter().map(|&d| vec![1.0; d * rank]).collect();
        CpModel::from_factors(factors, dims, n_state, rank).unwrap()
    }

    #[test]
    fn all_ones_rank3_evaluates_to_three() {
        let m = ones_model(&[2, 3, 4], 2, 3);
        let q = m.evaluate(&IndexTuple::new(vec![1, 2, 4])).unwrap();
        assert_eq!(q, 3.0);
    }

    #[test]
    fn rank1_two_modes_is_outer_product() {
        let m = CpModel::from_factors(vec![vec![2.0, 2.0], vec![3.0, 3.0, 3.0]], &[2, 3], 1, 1)
            .unwrap();
        let q = m.evaluate(&IndexTuple::new(vec![1, 2])).unwrap();
        assert_eq!(q, 6.0);
    }

    #[test]
    fn evaluate_matches_dense_reconstruction() {
        let m = CpModel::init(&[4, 4, 4], 2, 2, 7, 0.8).unwrap();
        let dense = dense_reconstruct(&m).unwrap();
        let mut flat = 0usize;
        for i in 1..=4u32 {
            for j in 1..=4u32 {
                for k in 1..=4u32 {
                    let q = m.evaluate(&IndexTuple::new(vec![i, j, k])).unwrap();
                    assert!((q - dense[flat]).abs() <= 1e-12, "entry ({i},{j},{k})");
                    flat += 1;
                }
            }
        }
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let m = ones_model(&[2, 3], 1, 1);
        let err = m.evaluate(&IndexTuple::new(vec![3, 1])).unwrap_err();
        assert_eq!(
            err,
            TensorError::IndexOutOfRange { mode: 0, index: 3, dim: 2 }
        );
        assert!(m.evaluate(&IndexTuple::new(vec![0, 1])).is_err());
        assert!(m.evaluate(&IndexTuple::new(vec![1])).is_err());
    }

    #[test]
    fn max_over_actions_follows_action_factor_for_rank1() {
        // one state mode (positive product), one action mode with column (1, 5, 2)
        let m = CpModel::from_factors(
            vec![vec![0.5, 2.0], vec![1.0, 5.0, 2.0]],
            &[2, 3],
            1,
            1,
        )
        .unwrap();
        let (a, q) = m.max_q_over_actions(&[2]).unwrap();
        assert_eq!(a, vec![2]);
        assert_eq!(q, 10.0);
    }

    #[test]
    fn max_over_actions_ties_break_to_lowest_index() {
        let m = ones_model(&[2, 3], 1, 2);
        let (a, q) = m.max_q_over_actions(&[1]).unwrap();
        assert_eq!(a, vec![1]);
        assert_eq!(q, 2.0);
    }

    #[test]
    fn max_over_actions_matches_exhaustive_loop() {
        let m = CpModel::init(&[3, 4, 10], 2, 3, 99, 0.6).unwrap();
        for s1 in 1..=3u32 {
            for s2 in 1..=4u32 {
                let (best_a, best_q) = m.max_q_over_actions(&[s1, s2]).unwrap();
                let mut exp_a = 0u32;
                let mut exp_q = f64::NEG_INFINITY;
                for a in 1..=10u32 {
                    let q = m.evaluate(&IndexTuple::new(vec![s1, s2, a])).unwrap();
                    if q > exp_q {
                        exp_q = q;
                        exp_a = a;
                    }
                }
                assert_eq!(best_a, vec![exp_a]);
                assert_eq!(best_q, exp_q);
            }
        }
    }

    #[test]
    fn parameter_count_and_effective_dim() {
        let m = ones_model(&[10, 10, 20, 20, 10], 4, 10);
        assert_eq!(m.effective_dim(), 50);
        assert_eq!(m.parameter_count(), 700);
        let small = ones_model(&[2, 2], 1, 1);
        assert_eq!(small.parameter_count(), 4);
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let a = CpModel::init(&[20, 20, 10], 2, 10, 42, 0.1).unwrap();
        let b = CpModel::init(&[20, 20, 10], 2, 10, 42, 0.1).unwrap();
        assert_eq!(a, b);
        for n in 0..3 {
            for row in 1..=a.dims()[n] as u32 {
                for r in 0..10 {
                    assert!(a.factor_entry(n, row, r).abs() <= 0.1);
                }
            }
        }
        let c = CpModel::init(&[20, 20, 10], 2, 10, 43, 0.1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_scale_gives_zero_model() {
        let m = CpModel::init(&[3, 3], 1, 4, 1, 0.0).unwrap();
        for i in 1..=3u32 {
            for j in 1..=3u32 {
                assert_eq!(m.evaluate(&IndexTuple::new(vec![i, j])).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn degenerate_shapes_are_rejected() {
        assert!(CpModel::init(&[], 0, 1, 0, 0.1).is_err());
        assert!(CpModel::init(&[2, 2], 1, 0, 0, 0.1).is_err());
        assert!(CpModel::init(&[2, 0], 1, 1, 0, 0.1).is_err());
        // a model needs at least one action mode
        assert!(CpModel::init(&[2, 2], 2, 1, 0, 0.1).is_err());
        assert!(CpModel::init(&[2, 2], 1, 1, 0, f64::NAN).is_err());
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = CpModel::init(&[5, 4, 3], 2, 6, 11, 0.3).unwrap();
        m.save(&path).unwrap();
        let back = CpModel::load(&path).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        // scaling one rank-one component's column in a single mode scales that
        // component's contribution exactly (multilinearity)
        #[test]
        fn rank1_model_scales_linearly(alpha in -3.0f64..3.0, seed in 0u64..1000) {
            let m = CpModel::init(&[3, 3, 3], 2, 1, seed, 0.9).unwrap();
            let mut scaled = m.clone();
            for i in 1..=3u32 {
                scaled.factor_row_mut(0, i)[0] *= alpha;
            }
            for i in 1..=3u32 {
                for j in 1..=3u32 {
                    for k in 1..=3u32 {
                        let idx = IndexTuple::new(vec![i, j, k]);
                        let base = m.evaluate(&idx).unwrap();
                        let got = scaled.evaluate(&idx).unwrap();
                        prop_assert!((got - alpha * base).abs() <= 1e-12 * base.abs().max(1.0));
                    }
                }
            }
        }

        #[test]
        fn parameter_count_ignores_values(seed in 0u64..500) {
            let m = CpModel::init(&[4, 3, 5], 1, 3, seed, 1.0).unwrap();
            prop_assert_eq!(m.parameter_count(), 3 * (4 + 3 + 5));
        }
    }
}
