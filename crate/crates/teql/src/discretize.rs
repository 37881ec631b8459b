//! Mapping between continuous state/action vectors and tensor index tuples.
//!
//! Each dimension carries bounds `[min, max]` and a bin count `d`. A value
//! maps to index `floor((x - min) / (max - min) * (d - 1)) + 1`, clamped into
//! `[1, d]`, so `min` lands on index 1 and `max` on index `d`. Action indices
//! map back to continuous values on the grid nodes themselves, which makes
//! index -> value -> index a round trip.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::IndexTuple;

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("NaN input in dimension {0}")]
    NanInput(usize),
    #[error("expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action index {index} out of range [1, {bins}] in action dimension {dim}")]
    ActionIndexOutOfRange { dim: usize, index: u32, bins: usize },
    #[error("invalid dimension spec: {0}")]
    InvalidSpec(String),
}

/// Bounds and resolution of one state or action dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl DimSpec {
    pub fn new(min: f64, max: f64, bins: usize) -> Self {
        DimSpec { min, max, bins }
    }

    fn validate(&self, dim: usize) -> Result<(), DiscretizeError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min >= self.max {
            return Err(DiscretizeError::InvalidSpec(format!(
                "dimension {dim}: need finite min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.bins < 2 {
            return Err(DiscretizeError::InvalidSpec(format!(
                "dimension {dim}: need at least 2 bins, got {}",
                self.bins
            )));
        }
        Ok(())
    }

    /// 1-based bin index of `x`; out-of-range values clamp to the bounds.
    pub fn index_of(&self, x: f64, dim: usize) -> Result<u32, DiscretizeError> {
        if x.is_nan() {
            return Err(DiscretizeError::NanInput(dim));
        }
        let clamped = x.clamp(self.min, self.max);
        let frac = (clamped - self.min) / (self.max - self.min);
        let i = (frac * (self.bins - 1) as f64).floor() as i64 + 1;
        Ok(i.clamp(1, self.bins as i64) as u32)
    }

    /// Grid node for 1-based index `j`: `min + (j-1)/(d-1) * (max-min)`.
    pub fn value_of(&self, j: u32, dim: usize) -> Result<f64, DiscretizeError> {
        if j < 1 || j as usize > self.bins {
            return Err(DiscretizeError::ActionIndexOutOfRange {
                dim,
                index: j,
                bins: self.bins,
            });
        }
        Ok(self.min + (j - 1) as f64 / (self.bins - 1) as f64 * (self.max - self.min))
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / (self.bins - 1) as f64
    }
}

/// Per-dimension grids for the state block and the action block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub state: Vec<DimSpec>,
    pub action: Vec<DimSpec>,
}

impl DiscretizationSpec {
    pub fn new(state: Vec<DimSpec>, action: Vec<DimSpec>) -> Result<Self, DiscretizeError> {
        if state.is_empty() || action.is_empty() {
            return Err(DiscretizeError::InvalidSpec(
                "need at least one state and one action dimension".into(),
            ));
        }
        for (d, s) in state.iter().chain(action.iter()).enumerate() {
            s.validate(d)?;
        }
        Ok(DiscretizationSpec { state, action })
    }

    pub fn n_state_dims(&self) -> usize {
        self.state.len()
    }

    pub fn n_action_dims(&self) -> usize {
        self.action.len()
    }

    /// Mode sizes for the CP model: state bins then action bins.
    pub fn tensor_dims(&self) -> Vec<usize> {
        self.state
            .iter()
            .chain(self.action.iter())
            .map(|d| d.bins)
            .collect()
    }

    /// Total number of discrete state-action pairs, `prod` of all bin counts.
    pub fn total_pairs(&self) -> usize {
        self.tensor_dims().iter().product()
    }

    pub fn discretize_state(&self, s: &[f64]) -> Result<Vec<u32>, DiscretizeError> {
        if s.len() != self.state.len() {
            return Err(DiscretizeError::DimensionMismatch {
                expected: self.state.len(),
                got: s.len(),
            });
        }
        s.iter()
            .zip(&self.state)
            .enumerate()
            .map(|(d, (&x, spec))| spec.index_of(x, d))
            .collect()
    }

    /// Full index tuple for a continuous (state, action) pair, state modes first.
    pub fn discretize_state_action(
        &self,
        s: &[f64],
        a: &[f64],
    ) -> Result<IndexTuple, DiscretizeError> {
        let state_idx = self.discretize_state(s)?;
        if a.len() != self.action.len() {
            return Err(DiscretizeError::DimensionMismatch {
                expected: self.action.len(),
                got: a.len(),
            });
        }
        let mut all = state_idx;
        for (j, (&x, spec)) in a.iter().zip(&self.action).enumerate() {
            all.push(spec.index_of(x, self.state.len() + j)?);
        }
        Ok(IndexTuple::new(all))
    }

    /// Continuous action vector represented by a 1-based action multi-index.
    pub fn action_values(&self, action_idx: &[u32]) -> Result<Vec<f64>, DiscretizeError> {
        if action_idx.len() != self.action.len() {
            return Err(DiscretizeError::DimensionMismatch {
                expected: self.action.len(),
                got: action_idx.len(),
            });
        }
        action_idx
            .iter()
            .zip(&self.action)
            .enumerate()
            .map(|(d, (&j, spec))| spec.value_of(j, d))
            .collect()
    }
}
