//! Training runs, convergence statistics, and multi-seed experiments.
//!
//! A *cell* is one (variant, seed) training run; experiments expand a
//! configuration into variants, run every cell in a worker pool, and write
//! per-cell reward CSVs plus aggregated percentile bands and threshold
//! tables. Every cell is fully determined by its derived seed, so re-running
//! a cell reproduces its CSV byte for byte.

mod config;
mod experiment;

pub use config::{
    identity_grid, EnvId, ExperimentKind, RunConfig, DEFAULT_EPISODES, DEFAULT_MASTER_SEED,
    DEFAULT_MAX_STEPS, DEFAULT_RANK, DEFAULT_SEEDS, TLR_EPS0_CARTPOLE, TLR_EPS0_PENDULUM,
    TLR_EPS_DECAY,
};
pub use experiment::{
    cartpole_granularity_presets, pendulum_granularity_presets, reaggregate_report,
    run_experiment, write_rewards_csv, CellRecord, ExperimentOutcome, Manifest, Variant,
    VariantOutcome,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{DiscretizationSpec, DiscretizeError};
use crate::learner::{CostCounters, Learner, LearnerConfig, LearnerError, Transition};
use crate::policy::{select_action, PolicyConfig};
use crate::tensor::{CpModel, IndexTuple, TensorError};

/// Episodes in the trailing mean that smooths reward curves.
pub const SMOOTHING_WINDOW: usize = 50;
/// Share of final episodes whose smoothed rewards define the asymptote.
pub const ASYMPTOTE_TAIL: f64 = 0.10;
/// Threshold fractions reported for every variant.
pub const THRESHOLD_FRACTIONS: [f64; 3] = [0.80, 0.90, 0.95];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("need at least 2 seeds to aggregate, got {0}")]
    NotEnoughSeeds(usize),
    #[error("seed series have mismatched lengths: {0} vs {1}")]
    MismatchedSeries(usize, usize),
    #[error("{0}")]
    Report(String),
}

/// Everything needed to run one training cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub env: EnvId,
    pub discretization: DiscretizationSpec,
    pub learner: LearnerConfig,
    pub policy: PolicyConfig,
    pub episodes: usize,
    pub max_steps: usize,
    pub rank: usize,
    pub init_scale: f64,
}

impl RunConfig {
    /// The cell settings shared by all seeds of the base variant.
    pub fn cell(&self) -> CellConfig {
        CellConfig {
            env: self.environment,
            discretization: self.discretization.clone(),
            learner: self.learner,
            policy: self.policy,
            episodes: self.episodes,
            max_steps: self.max_steps,
            rank: self.rank,
            init_scale: self.init_scale,
        }
    }
}

/// Diagnostic kept when a seed's learner blows up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub episode: usize,
    pub step: u64,
    pub message: String,
}

/// Result of one training cell.
#[derive(Clone, Debug)]
pub struct SeedRun {
    /// Total reward per completed episode.
    pub rewards: Vec<f64>,
    /// Trailing mean over [`SMOOTHING_WINDOW`] episodes; `None` until the
    /// window fills.
    pub smoothed: Vec<Option<f64>>,
    pub steps_executed: u64,
    pub visited_pairs: usize,
    pub visited_states: usize,
    pub error_entries: usize,
    pub counters: CostCounters,
    /// Set when the learner diverged; rewards stop at the failed episode.
    pub diverged: Option<DivergenceRecord>,
}

/// Runs one seed of the outer learning loop: select an action, step the
/// environment, update the factorization, repeat. Fully deterministic given
/// `seed`.
pub fn run_training(cell: &CellConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    let dims = cell.discretization.tensor_dims();
    let n_state = cell.discretization.n_state_dims();
    let model = CpModel::init(&dims, n_state, cell.rank, split_seed(seed, 1), cell.init_scale)?;
    let mut learner = Learner::new(model, cell.learner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 2));
    let mut env = cell.env.make(cell.max_steps);

    let mut rewards = Vec::with_capacity(cell.episodes);
    let mut diverged = None;

    'episodes: for episode in 0..cell.episodes {
        let eps = cell.policy.epsilon_at(episode);
        let mut state = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            let state_idx = cell.discretization.discretize_state(&state)?;
            let action_idx = select_action(
                learner.model(),
                learner.tables(),
                &state_idx,
                &cell.policy,
                eps,
                &mut rng,
            )?;
            let action = cell.discretization.action_values(&action_idx)?;
            let step = env.step(&action);
            total += step.reward;
            let next_state_idx = cell.discretization.discretize_state(&step.state)?;
            let transition = Transition {
                state_action: IndexTuple::from_parts(&state_idx, &action_idx),
                next_state: next_state_idx,
                reward: step.reward,
                done: step.done,
            };
            if let Err(err) = learner.update(&transition) {
                diverged = Some(DivergenceRecord {
                    episode,
                    step: learner.transitions_seen(),
                    message: err.to_string(),
                });
                break 'episodes;
            }
            state = step.state;
            if step.done {
                break;
            }
        }
        rewards.push(total);
    }

    let smoothed = smooth(&rewards, SMOOTHING_WINDOW);
    Ok(SeedRun {
        smoothed,
        steps_executed: learner.transitions_seen(),
        visited_pairs: learner.tables().visited_pairs(),
        visited_states: learner.tables().visited_states(),
        error_entries: learner.tables().error_entries(),
        counters: *learner.counters(),
        diverged,
        rewards,
    })
}

/// Trailing mean over `window` episodes; positions before the first full
/// window carry `None`.
pub fn smooth(series: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; series.len()];
    if window == 0 || series.len() < window {
        return out;
    }
    let mut sum: f64 = series[..window].iter().sum();
    out[window - 1] = Some(sum / window as f64);
    for k in window..series.len() {
        sum += series[k] - series[k - window];
        out[k] = Some(sum / window as f64);
    }
    out
}

/// Mean smoothed reward over the final [`ASYMPTOTE_TAIL`] share of episodes.
pub fn asymptote(smoothed: &[Option<f64>]) -> Option<f64> {
    let n = smoothed.len();
    if n == 0 {
        return None;
    }
    let tail = ((n as f64) * (1.0 - ASYMPTOTE_TAIL)).floor() as usize;
    let values: Vec<f64> = smoothed[tail.min(n - 1)..].iter().flatten().copied().collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// First 1-based episode whose smoothed reward reaches `level`.
pub fn episodes_to_level(smoothed: &[Option<f64>], level: f64) -> Option<usize> {
    smoothed
        .iter()
        .position(|v| v.is_some_and(|x| x >= level))
        .map(|p| p + 1)
}

/// First 1-based episode whose smoothed reward reaches `fraction` of the
/// series' own asymptotic level (mean smoothed reward over the final tenth
/// of episodes). `None` when the level is never reached or the series is
/// shorter than the smoothing window.
pub fn episodes_to_threshold(series: &[f64], fraction: f64) -> Option<usize> {
    assert!(
        fraction > 0.0 && fraction <= 1.0,
        "fraction must lie in (0, 1], got {fraction}"
    );
    let smoothed = smooth(series, SMOOTHING_WINDOW);
    let asym = asymptote(&smoothed)?;
    episodes_to_level(&smoothed, fraction * asym)
}

/// Threshold level shared across an experiment's variants: `fraction` of the
/// way from the environment's floor return to the reference asymptote.
/// With a zero floor this is exactly `fraction * reference`.
pub fn threshold_level(floor: f64, reference: f64, fraction: f64) -> f64 {
    floor + fraction * (reference - floor)
}

/// Per-episode 25/50/75 percentile bands across seeds, linear interpolation
/// between order statistics. Needs at least two equal-length series.
pub fn percentile_bands(series: &[&[f64]]) -> Result<Vec<[f64; 3]>, HarnessError> {
    if series.len() < 2 {
        return Err(HarnessError::NotEnoughSeeds(series.len()));
    }
    let len = series[0].len();
    for s in series {
        if s.len() != len {
            return Err(HarnessError::MismatchedSeries(len, s.len()));
        }
    }
    let mut bands = Vec::with_capacity(len);
    let mut column = vec![0.0f64; series.len()];
    for e in 0..len {
        for (k, s) in series.iter().enumerate() {
            column[k] = s[e];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("rewards are finite"));
        bands.push([
            percentile_sorted(&column, 0.25),
            percentile_sorted(&column, 0.50),
            percentile_sorted(&column, 0.75),
        ]);
    }
    Ok(bands)
}

/// Linear-interpolation percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Lower median of threshold episodes; `None` sorts above every number.
pub fn median_threshold(values: &[Option<usize>]) -> Option<usize> {
    let mut sorted: Vec<Option<usize>> = values.to_vec();
    sorted.sort_by_key(|v| v.map_or(u64::MAX, |e| e as u64));
    sorted[(sorted.len().saturating_sub(1)) / 2]
}

/// Median of per-seed asymptote levels (None entries dropped).
pub fn median_asymptote(values: &[Option<f64>]) -> Option<f64> {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    present.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Some(percentile_sorted(&present, 0.50))
}

/// Stable cell seed from (master seed, variant id, seed index); adding
/// variants never perturbs existing cells.
pub fn cell_seed(master_seed: u64, variant_id: &str, seed_index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in variant_id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(
        master_seed
            ^ h
            ^ (seed_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

fn split_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ stream.wrapping_mul(0xd129_0429_7f5c_d1f5))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    fn tiny_cell() -> CellConfig {
        let cfg = RunConfig::defaults_for(EnvId::Cartpole);
        CellConfig {
            episodes: 1,
            max_steps: 1,
            ..cfg.cell()
        }
    }

    #[test]
    fn one_episode_one_step_processes_one_transition() {
        let run = run_training(&tiny_cell(), 3).unwrap();
        assert_eq!(run.rewards.len(), 1);
        assert_eq!(run.steps_executed, 1);
        assert_eq!(run.visited_pairs, 1);
        assert!(run.diverged.is_none());
    }

    #[test]
    fn same_seed_reproduces_the_reward_series_bitwise() {
        let cfg = RunConfig::defaults_for(EnvId::Cartpole);
        let cell = CellConfig {
            episodes: 30,
            ..cfg.cell()
        };
        let a = run_training(&cell, 11).unwrap();
        let b = run_training(&cell, 11).unwrap();
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.steps_executed, b.steps_executed);
        let c = run_training(&cell, 12).unwrap();
        assert_ne!(a.rewards, c.rewards);
    }

    #[test]
    fn sparse_tables_never_outgrow_the_step_count() {
        let cfg = RunConfig::defaults_for(EnvId::Pendulum);
        let cell = CellConfig {
            episodes: 5,
            ..cfg.cell()
        };
        let run = run_training(&cell, 21).unwrap();
        let steps = run.steps_executed as usize;
        assert!(run.visited_pairs <= steps);
        assert!(run.visited_states <= steps);
        assert!(run.error_entries <= steps);
    }

    #[test]
    fn epsilon_greedy_cells_are_also_deterministic() {
        let mut cfg = RunConfig::defaults_for(EnvId::Pendulum);
        cfg.policy.kind = PolicyKind::EpsilonGreedy;
        cfg.policy.eps0 = 1.0;
        cfg.learner.lambda = 0.0;
        let cell = CellConfig {
            episodes: 10,
            ..cfg.cell()
        };
        let a = run_training(&cell, 5).unwrap();
        let b = run_training(&cell, 5).unwrap();
        assert_eq!(a.rewards, b.rewards);
    }

    #[test]
    fn smoothing_uses_full_windows_only() {
        let series: Vec<f64> = (1..=6).map(|v| v as f64).collect();
        let sm = smooth(&series, 3);
        assert_eq!(sm[0], None);
        assert_eq!(sm[1], None);
        assert_eq!(sm[2], Some(2.0));
        assert_eq!(sm[5], Some(5.0));
        assert!(smooth(&[1.0, 2.0], 3).iter().all(|v| v.is_none()));
    }

    #[test]
    fn constant_series_meets_threshold_at_first_full_window() {
        let series = vec![5.0; 200];
        assert_eq!(episodes_to_threshold(&series, 0.8), Some(SMOOTHING_WINDOW));
        assert_eq!(episodes_to_threshold(&series, 1.0), Some(SMOOTHING_WINDOW));
    }

    #[test]
    fn linear_series_threshold_matches_a_direct_scan() {
        let series: Vec<f64> = (1..=400).map(|v| v as f64).collect();
        let fraction = 0.5;
        let got = episodes_to_threshold(&series, fraction);
        // direct scan with independently recomputed trailing means
        let mut expected = None;
        let asym = {
            let mut tail_vals = Vec::new();
            for e in 360..400 {
                let w: f64 = series[e + 1 - 50..=e].iter().sum::<f64>() / 50.0;
                tail_vals.push(w);
            }
            tail_vals.iter().sum::<f64>() / tail_vals.len() as f64
        };
        for e in 49..400 {
            let w: f64 = series[e + 1 - 50..=e].iter().sum::<f64>() / 50.0;
            if w >= fraction * asym {
                expected = Some(e + 1);
                break;
            }
        }
        assert_eq!(got, expected);
        assert!(got.is_some());
    }

    #[test]
    fn negative_drift_tail_never_reaches_the_threshold() {
        // negative series declining toward its tail: the threshold sits
        // above the final level and is never met
        let series: Vec<f64> = (0..300).map(|e| -100.0 - e as f64).collect();
        assert_eq!(episodes_to_threshold(&series, 0.8), None);
    }

    #[test]
    fn shared_threshold_level_interpolates_from_the_floor() {
        assert_eq!(threshold_level(0.0, 60.0, 0.8), 48.0);
        let lvl = threshold_level(-1627.36, -400.0, 0.8);
        assert!((lvl - (-1627.36 + 0.8 * 1227.36)).abs() < 1e-9);
    }

    #[test]
    fn percentile_bands_match_a_sort_based_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let seeds = 100;
        let episodes = 40;
        let series: Vec<Vec<f64>> = (0..seeds)
            .map(|_| (0..episodes).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let bands = percentile_bands(&refs).unwrap();
        for e in 0..episodes {
            let mut col: Vec<f64> = series.iter().map(|s| s[e]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // oracle: numpy-style linear interpolation by hand
            for (k, q) in [(0usize, 0.25f64), (1, 0.50), (2, 0.75)] {
                let h = (seeds - 1) as f64 * q;
                let lo = h.floor() as usize;
                let expect = col[lo] + (h - lo as f64) * (col[lo + 1] - col[lo]);
                assert!((bands[e][k] - expect).abs() < 1e-12);
            }
            assert!(bands[e][0] <= bands[e][1] && bands[e][1] <= bands[e][2]);
        }
    }

    #[test]
    fn three_constant_seeds_have_their_middle_as_median() {
        let s1 = vec![1.0; 10];
        let s2 = vec![2.0; 10];
        let s3 = vec![3.0; 10];
        let bands = percentile_bands(&[&s1, &s2, &s3]).unwrap();
        for b in &bands {
            assert_eq!(b[1], 2.0);
        }
        // permuting the seeds changes nothing
        let permuted = percentile_bands(&[&s3, &s1, &s2]).unwrap();
        assert_eq!(bands, permuted);
    }

    #[test]
    fn aggregation_input_is_validated() {
        let s1 = vec![1.0; 10];
        assert!(matches!(
            percentile_bands(&[&s1]),
            Err(HarnessError::NotEnoughSeeds(1))
        ));
        let s2 = vec![1.0; 9];
        assert!(matches!(
            percentile_bands(&[&s1, &s2]),
            Err(HarnessError::MismatchedSeries(10, 9))
        ));
    }

    #[test]
    fn median_threshold_treats_none_as_infinite() {
        assert_eq!(
            median_threshold(&[Some(10), None, Some(30), Some(20), None]),
            Some(30)
        );
        assert_eq!(median_threshold(&[None, None, Some(5)]), None);
        assert_eq!(median_threshold(&[Some(4), Some(2)]), Some(2));
    }

    #[test]
    fn cell_seeds_are_stable_and_variant_isolated() {
        let a = cell_seed(7, "teql", 0);
        assert_eq!(a, cell_seed(7, "teql", 0));
        assert_ne!(a, cell_seed(7, "teql", 1));
        assert_ne!(a, cell_seed(7, "tlr", 0));
        assert_ne!(a, cell_seed(8, "teql", 0));
    }
}
