//! Experiment grids: variant expansion, parallel cell execution, CSV and
//! manifest output, and re-aggregation of existing results.
//!
//! Output layout inside the experiment directory:
//!
//! - `rewards_<variant>_<seed>.csv` — episode, total_reward, smoothed_reward
//! - `aggregate_<variant>.csv` — episode, p25, p50, p75 across seeds
//! - `thresholds_<variant>.csv` — seed, frac80, frac90, frac95
//! - `regret_<seed>.csv` — step, instantaneous_regret, cumulative_regret
//! - `manifest.json` — resolved config, derivation metadata, cell records
//!
//! Convergence thresholds are placed on a scale shared by all variants of an
//! experiment: `level = floor + fraction * (reference - floor)`, where the
//! floor is the environment's minimum achievable episode return and the
//! reference is the best variant's median asymptote. A shared level keeps
//! "episodes to reach 80%" comparable between variants and well defined for
//! reward scales that are negative throughout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{DimSpec, DiscretizationSpec};
use crate::envs::SyntheticMdp;
use crate::learner::LearnerConfig;
use crate::oracle::{run_regret_experiment, RegretTrace};
use crate::policy::{PolicyConfig, PolicyKind};

use super::config::{EnvId, ExperimentKind, RunConfig};
use super::{
    asymptote, cell_seed, episodes_to_level, median_asymptote, median_threshold,
    percentile_bands, run_training, threshold_level, CellConfig, DivergenceRecord, HarnessError,
    SeedRun, ASYMPTOTE_TAIL, SMOOTHING_WINDOW, THRESHOLD_FRACTIONS,
};

/// One column of the experiment grid: an id plus the cell settings shared by
/// all of its seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub id: String,
    pub cell: CellConfig,
}

/// Pendulum grids from very coarse to very fine; total pair counts
/// 256, 1,800, 4,000, 13,500, 32,000.
pub fn pendulum_granularity_presets() -> Vec<(&'static str, DiscretizationSpec)> {
    let pi = std::f64::consts::PI;
    let spec = |s: usize, a: usize| {
        DiscretizationSpec::new(
            vec![DimSpec::new(-pi, pi, s), DimSpec::new(-8.0, 8.0, s)],
            vec![DimSpec::new(-2.0, 2.0, a)],
        )
        .expect("static preset")
    };
    vec![
        ("very_coarse", spec(8, 4)),
        ("coarse", spec(15, 8)),
        ("median", spec(20, 10)),
        ("fine", spec(30, 15)),
        ("very_fine", spec(40, 20)),
    ]
}

/// Cart-pole grids from very coarse to very fine; total pair counts
/// 6,400, 115,200, 400,000, 3,037,500, 12,800,000.
pub fn cartpole_granularity_presets() -> Vec<(&'static str, DiscretizationSpec)> {
    let spec = |xv: usize, th: usize, a: usize| {
        DiscretizationSpec::new(
            vec![
                DimSpec::new(-4.8, 4.8, xv),
                DimSpec::new(-4.0, 4.0, xv),
                DimSpec::new(-0.418, 0.418, th),
                DimSpec::new(-4.0, 4.0, th),
            ],
            vec![DimSpec::new(-1.0, 1.0, a)],
        )
        .expect("static preset")
    };
    vec![
        ("very_coarse", spec(5, 8, 4)),
        ("coarse", spec(8, 15, 8)),
        ("median", spec(10, 20, 10)),
        ("fine", spec(15, 30, 15)),
        ("very_fine", spec(20, 40, 20)),
    ]
}

/// Expands an experiment into its variant columns.
pub fn expand_variants(cfg: &RunConfig) -> Result<Vec<Variant>, HarnessError> {
    let base = cfg.cell();
    let teql_policy = PolicyConfig {
        kind: PolicyKind::Euge,
        c: cfg.policy.c,
        eps0: cfg.environment.tlr_eps0(),
        eps_decay: super::TLR_EPS_DECAY,
    };
    let baseline_policy = PolicyConfig {
        kind: PolicyKind::EpsilonGreedy,
        ..teql_policy
    };
    let variants = match cfg.experiment {
        ExperimentKind::TeqlVsTlr => {
            let teql = Variant {
                id: "teql".into(),
                cell: CellConfig {
                    policy: teql_policy,
                    ..base.clone()
                },
            };
            let mut tlr_learner = base.learner;
            tlr_learner.lambda = 0.0;
            let tlr = Variant {
                id: "tlr".into(),
                cell: CellConfig {
                    policy: baseline_policy,
                    learner: tlr_learner,
                    ..base
                },
            };
            vec![teql, tlr]
        }
        ExperimentKind::AblationPenalty => {
            let penalty = Variant {
                id: "penalty".into(),
                cell: CellConfig {
                    policy: teql_policy,
                    ..base.clone()
                },
            };
            let mut plain = base.learner;
            plain.lambda = 0.0;
            let no_penalty = Variant {
                id: "no_penalty".into(),
                cell: CellConfig {
                    policy: teql_policy,
                    learner: plain,
                    ..base
                },
            };
            vec![penalty, no_penalty]
        }
        ExperimentKind::GranularitySweep => {
            let presets = match cfg.environment {
                EnvId::Pendulum => pendulum_granularity_presets(),
                EnvId::Cartpole => cartpole_granularity_presets(),
                EnvId::Synthetic => {
                    return Err(HarnessError::Config(
                        "granularity sweep needs a physics environment".into(),
                    ))
                }
            };
            presets
                .into_iter()
                .map(|(id, disc)| Variant {
                    id: id.into(),
                    cell: CellConfig {
                        discretization: disc,
                        policy: teql_policy,
                        ..base.clone()
                    },
                })
                .collect()
        }
        ExperimentKind::Regret => vec![Variant {
            id: "teql".into(),
            cell: CellConfig {
                policy: teql_policy,
                ..base
            },
        }],
    };
    Ok(variants)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellRecord {
    pub variant: String,
    pub seed_index: usize,
    pub cell_seed: u64,
    pub episodes_completed: usize,
    pub steps: u64,
    pub visited_pairs: usize,
    pub total_entry_touches: u64,
    pub diverged: Option<DivergenceRecord>,
}

/// Run record written next to the result CSVs. Only the timestamp and wall
/// time vary between identical re-runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub created_unix_ms: u128,
    pub wall_time_secs: f64,
    pub dry_run: bool,
    pub experiment: String,
    pub config: RunConfig,
    pub variants: Vec<String>,
    pub smoothing_window: usize,
    pub asymptote_tail: f64,
    pub percentile_method: String,
    pub threshold_rule: String,
    pub threshold_floor: Option<f64>,
    pub threshold_reference: Option<f64>,
    pub threshold_levels: BTreeMap<String, f64>,
    pub cells: Vec<CellRecord>,
    /// Per-seed (first-half, second-half) mean step regret, regret runs only.
    pub regret_halves: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug)]
pub struct VariantOutcome {
    pub id: String,
    pub cell: CellConfig,
    pub runs: Vec<SeedRun>,
    /// Per-seed episodes to the shared 80/90/95% levels.
    pub thresholds: Vec<[Option<usize>; 3]>,
    pub median_thresholds: [Option<usize>; 3],
    pub median_asymptote: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub variants: Vec<VariantOutcome>,
    pub regret_traces: Vec<RegretTrace>,
}

impl ExperimentOutcome {
    pub fn any_diverged(&self) -> bool {
        self.manifest.cells.iter().any(|c| c.diverged.is_some())
    }

    pub fn variant(&self, id: &str) -> Option<&VariantOutcome> {
        self.variants.iter().find(|v| v.id == id)
    }
}

/// Executes every (variant, seed) cell of the configured experiment and
/// writes results under `out_dir`. `workers = 0` uses all cores; `dry_run`
/// writes only the manifest.
pub fn run_experiment(
    cfg: &RunConfig,
    out_dir: &Path,
    workers: usize,
    dry_run: bool,
) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();

    if cfg.experiment == ExperimentKind::Regret {
        return run_regret_grid(cfg, out_dir, workers, dry_run, started);
    }

    let variants = expand_variants(cfg)?;
    let mut manifest = manifest_skeleton(cfg, &variants, dry_run);

    if dry_run {
        for variant in &variants {
            for seed_index in 0..cfg.seeds {
                manifest.cells.push(CellRecord {
                    variant: variant.id.clone(),
                    seed_index,
                    cell_seed: cell_seed(cfg.master_seed, &variant.id, seed_index),
                    episodes_completed: 0,
                    steps: 0,
                    visited_pairs: 0,
                    total_entry_touches: 0,
                    diverged: None,
                });
            }
        }
        manifest.wall_time_secs = started.elapsed().as_secs_f64();
        write_manifest(out_dir, &manifest)?;
        return Ok(ExperimentOutcome {
            out_dir: out_dir.to_path_buf(),
            manifest,
            variants: Vec::new(),
            regret_traces: Vec::new(),
        });
    }

    // every cell is independent; run them on a bounded pool
    let jobs: Vec<(usize, usize, u64)> = variants
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| {
            (0..cfg.seeds).map(move |si| (vi, si, cell_seed(cfg.master_seed, &v.id, si)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let results: Result<Vec<SeedRun>, HarnessError> = pool.install(|| {
        jobs.par_iter()
            .map(|&(vi, _, seed)| run_training(&variants[vi].cell, seed))
            .collect()
    });
    let results = results?;

    let mut runs_by_variant: Vec<Vec<SeedRun>> = vec![Vec::new(); variants.len()];
    for (&(vi, si, seed), run) in jobs.iter().zip(results) {
        debug_assert_eq!(runs_by_variant[vi].len(), si);
        write_rewards_csv(
            &out_dir.join(format!("rewards_{}_{}.csv", variants[vi].id, si)),
            &run.rewards,
            &run.smoothed,
        )?;
        manifest.cells.push(CellRecord {
            variant: variants[vi].id.clone(),
            seed_index: si,
            cell_seed: seed,
            episodes_completed: run.rewards.len(),
            steps: run.steps_executed,
            visited_pairs: run.visited_pairs,
            total_entry_touches: run.counters.total_entry_touches(),
            diverged: run.diverged.clone(),
        });
        runs_by_variant[vi].push(run);
    }

    // shared threshold scale: floor from the environment, reference from the
    // best variant's median asymptote
    let floor = cfg
        .environment
        .make(cfg.max_steps)
        .min_episode_return();
    let per_variant_asymptotes: Vec<Vec<Option<f64>>> = runs_by_variant
        .iter()
        .map(|runs| {
            runs.iter()
                .map(|r| {
                    if r.diverged.is_some() {
                        None
                    } else {
                        asymptote(&r.smoothed)
                    }
                })
                .collect()
        })
        .collect();
    let reference = per_variant_asymptotes
        .iter()
        .filter_map(|asyms| median_asymptote(asyms))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));

    manifest.threshold_floor = Some(floor);
    manifest.threshold_reference = reference;
    if let Some(reference) = reference {
        for f in THRESHOLD_FRACTIONS {
            manifest.threshold_levels.insert(
                format!("frac{:02.0}", f * 100.0),
                threshold_level(floor, reference, f),
            );
        }
    }

    let mut outcomes = Vec::with_capacity(variants.len());
    for (vi, variant) in variants.iter().enumerate() {
        let runs = std::mem::take(&mut runs_by_variant[vi]);
        let thresholds: Vec<[Option<usize>; 3]> = runs
            .iter()
            .map(|run| {
                let mut row = [None; 3];
                if run.diverged.is_none() {
                    if let Some(reference) = reference {
                        for (k, f) in THRESHOLD_FRACTIONS.iter().enumerate() {
                            let level = threshold_level(floor, reference, *f);
                            row[k] = episodes_to_level(&run.smoothed, level);
                        }
                    }
                }
                row
            })
            .collect();
        write_thresholds_csv(
            &out_dir.join(format!("thresholds_{}.csv", variant.id)),
            &thresholds,
        )?;

        let healthy: Vec<&[f64]> = runs
            .iter()
            .filter(|r| r.diverged.is_none())
            .map(|r| r.rewards.as_slice())
            .collect();
        if healthy.len() >= 2 {
            let bands = percentile_bands(&healthy)?;
            write_aggregate_csv(
                &out_dir.join(format!("aggregate_{}.csv", variant.id)),
                &bands,
            )?;
        }

        let median_thresholds = [
            median_threshold(&thresholds.iter().map(|t| t[0]).collect::<Vec<_>>()),
            median_threshold(&thresholds.iter().map(|t| t[1]).collect::<Vec<_>>()),
            median_threshold(&thresholds.iter().map(|t| t[2]).collect::<Vec<_>>()),
        ];
        outcomes.push(VariantOutcome {
            id: variant.id.clone(),
            cell: variant.cell.clone(),
            median_asymptote: median_asymptote(&per_variant_asymptotes[vi]),
            thresholds,
            median_thresholds,
            runs,
        });
    }

    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    write_manifest(out_dir, &manifest)?;
    Ok(ExperimentOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
        variants: outcomes,
        regret_traces: Vec::new(),
    })
}

fn run_regret_grid(
    cfg: &RunConfig,
    out_dir: &Path,
    workers: usize,
    dry_run: bool,
    started: Instant,
) -> Result<ExperimentOutcome, HarnessError> {
    let variants = expand_variants(cfg)?;
    let mut manifest = manifest_skeleton(cfg, &variants, dry_run);
    let steps = cfg.episodes * cfg.max_steps;
    let seeds: Vec<(usize, u64)> = (0..cfg.seeds)
        .map(|si| (si, cell_seed(cfg.master_seed, "teql", si)))
        .collect();

    if dry_run {
        for &(si, seed) in &seeds {
            manifest.cells.push(CellRecord {
                variant: "teql".into(),
                seed_index: si,
                cell_seed: seed,
                episodes_completed: 0,
                steps: 0,
                visited_pairs: 0,
                total_entry_touches: 0,
                diverged: None,
            });
        }
        manifest.wall_time_secs = started.elapsed().as_secs_f64();
        write_manifest(out_dir, &manifest)?;
        return Ok(ExperimentOutcome {
            out_dir: out_dir.to_path_buf(),
            manifest,
            variants: Vec::new(),
            regret_traces: Vec::new(),
        });
    }

    // one seeded MDP shared by all agent seeds
    let mut mdp_rng = ChaCha8Rng::seed_from_u64(cfg.master_seed ^ 0x6d64_7067_656e);
    let mdp = SyntheticMdp::random(cfg.mdp_states, cfg.mdp_actions, cfg.learner.gamma, &mut mdp_rng);

    let learner_cfg = LearnerConfig {
        q_clip: Some(2.0 * mdp.reward_bound() / (1.0 - cfg.learner.gamma)),
        ..cfg.learner
    };
    let policy_cfg = PolicyConfig {
        kind: PolicyKind::Euge,
        ..cfg.policy
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let traces: Result<Vec<RegretTrace>, HarnessError> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&(_, seed)| {
                run_regret_experiment(
                    &mdp,
                    cfg.rank,
                    cfg.init_scale,
                    learner_cfg,
                    policy_cfg,
                    steps,
                    seed,
                )
                .map_err(HarnessError::from)
            })
            .collect()
    });
    let traces = traces?;

    let mut halves = Vec::with_capacity(traces.len());
    for (&(si, seed), trace) in seeds.iter().zip(&traces) {
        trace.write_csv(&out_dir.join(format!("regret_{si}.csv")))?;
        halves.push([
            trace.mean_over(0, trace.len() / 2),
            trace.mean_over(trace.len() / 2, trace.len()),
        ]);
        manifest.cells.push(CellRecord {
            variant: "teql".into(),
            seed_index: si,
            cell_seed: seed,
            episodes_completed: 0,
            steps: trace.len() as u64,
            visited_pairs: 0,
            total_entry_touches: 0,
            diverged: None,
        });
    }
    manifest.regret_halves = Some(halves);
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    write_manifest(out_dir, &manifest)?;
    Ok(ExperimentOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
        variants: Vec::new(),
        regret_traces: traces,
    })
}

fn manifest_skeleton(cfg: &RunConfig, variants: &[Variant], dry_run: bool) -> Manifest {
    Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        wall_time_secs: 0.0,
        dry_run,
        experiment: cfg.experiment.as_str().to_string(),
        config: cfg.clone(),
        variants: variants.iter().map(|v| v.id.clone()).collect(),
        smoothing_window: SMOOTHING_WINDOW,
        asymptote_tail: ASYMPTOTE_TAIL,
        percentile_method: "linear interpolation between order statistics".into(),
        threshold_rule: "floor + fraction * (best-variant median asymptote - floor)".into(),
        threshold_floor: None,
        threshold_reference: None,
        threshold_levels: BTreeMap::new(),
        cells: Vec::new(),
        regret_halves: None,
    }
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| HarnessError::Report(format!("manifest serialization: {e}")))?;
    fs::write(out_dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Report(format!("manifest parse: {e}")))
}

/// Writes `episode,total_reward,smoothed_reward`; the smoothed column is
/// empty before the window fills. Floats use shortest round-trip formatting
/// so re-aggregation from disk is exact.
pub fn write_rewards_csv(
    path: &Path,
    rewards: &[f64],
    smoothed: &[Option<f64>],
) -> Result<(), HarnessError> {
    let mut out = String::from("episode,total_reward,smoothed_reward\n");
    for (e, (r, s)) in rewards.iter().zip(smoothed).enumerate() {
        match s {
            Some(s) => out.push_str(&format!("{},{},{}\n", e + 1, r, s)),
            None => out.push_str(&format!("{},{},\n", e + 1, r)),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads back a rewards CSV written by [`write_rewards_csv`].
pub fn read_rewards_csv(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut rewards = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 || line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let _episode = cols.next();
        let reward = cols
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                HarnessError::Report(format!("{}: malformed line {}", path.display(), k + 1))
            })?;
        rewards.push(reward);
    }
    Ok(rewards)
}

fn write_aggregate_csv(path: &Path, bands: &[[f64; 3]]) -> Result<(), HarnessError> {
    let mut out = String::from("episode,p25,p50,p75\n");
    for (e, b) in bands.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", e + 1, b[0], b[1], b[2]));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_thresholds_csv(path: &Path, thresholds: &[[Option<usize>; 3]]) -> Result<(), HarnessError> {
    let mut out = String::from("seed,frac80,frac90,frac95\n");
    for (seed, row) in thresholds.iter().enumerate() {
        let cell = |v: Option<usize>| v.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            seed,
            cell(row[0]),
            cell(row[1]),
            cell(row[2])
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Rebuilds aggregate and threshold CSVs from the per-seed reward files in an
/// existing experiment directory, using the manifest for the threshold scale.
pub fn reaggregate_report(dir: &Path) -> Result<Vec<String>, HarnessError> {
    let manifest = read_manifest(dir)?;
    let mut by_variant: BTreeMap<String, Vec<(usize, PathBuf)>> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        let stem = match name.strip_prefix("rewards_").and_then(|s| s.strip_suffix(".csv")) {
            Some(s) => s,
            None => continue,
        };
        // the seed index is the final underscore-separated token; variant
        // ids may themselves contain underscores
        let Some((variant, seed)) = stem.rsplit_once('_') else {
            continue;
        };
        let Ok(seed) = seed.parse::<usize>() else {
            continue;
        };
        by_variant
            .entry(variant.to_string())
            .or_default()
            .push((seed, path));
    }
    if by_variant.is_empty() {
        return Err(HarnessError::Report(format!(
            "no rewards_*.csv files under {}",
            dir.display()
        )));
    }

    let mut summaries = Vec::new();
    let mut variant_series: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (variant, mut files) in by_variant {
        files.sort_by_key(|(seed, _)| *seed);
        let series: Result<Vec<Vec<f64>>, HarnessError> =
            files.iter().map(|(_, p)| read_rewards_csv(p)).collect();
        variant_series.insert(variant, series?);
    }

    // reference asymptote recomputed across all variants
    let floor = manifest.threshold_floor.unwrap_or(0.0);
    let mut reference: Option<f64> = None;
    let mut smoothed_by_variant: BTreeMap<String, Vec<Vec<Option<f64>>>> = BTreeMap::new();
    for (variant, series) in &variant_series {
        let smoothed: Vec<Vec<Option<f64>>> = series
            .iter()
            .map(|s| super::smooth(s, manifest.smoothing_window))
            .collect();
        let asyms: Vec<Option<f64>> = smoothed.iter().map(|s| asymptote(s)).collect();
        if let Some(m) = median_asymptote(&asyms) {
            reference = Some(reference.map_or(m, |r: f64| r.max(m)));
        }
        smoothed_by_variant.insert(variant.clone(), smoothed);
    }

    for (variant, series) in &variant_series {
        let smoothed = &smoothed_by_variant[variant];
        let full_len = series.iter().map(|s| s.len()).max().unwrap_or(0);
        let complete: Vec<&[f64]> = series
            .iter()
            .filter(|s| s.len() == full_len)
            .map(|s| s.as_slice())
            .collect();
        if complete.len() >= 2 {
            let bands = percentile_bands(&complete)?;
            write_aggregate_csv(&dir.join(format!("aggregate_{variant}.csv")), &bands)?;
        }
        let thresholds: Vec<[Option<usize>; 3]> = smoothed
            .iter()
            .map(|sm| {
                let mut row = [None; 3];
                if let Some(reference) = reference {
                    for (k, f) in THRESHOLD_FRACTIONS.iter().enumerate() {
                        row[k] = episodes_to_level(sm, threshold_level(floor, reference, *f));
                    }
                }
                row
            })
            .collect();
        write_thresholds_csv(&dir.join(format!("thresholds_{variant}.csv")), &thresholds)?;
        let medians = [
            median_threshold(&thresholds.iter().map(|t| t[0]).collect::<Vec<_>>()),
            median_threshold(&thresholds.iter().map(|t| t[1]).collect::<Vec<_>>()),
            median_threshold(&thresholds.iter().map(|t| t[2]).collect::<Vec<_>>()),
        ];
        summaries.push(format!(
            "{variant}: {} seeds, median episodes to 80/90/95%: {} / {} / {}",
            series.len(),
            medians[0].map_or("never".into(), |e| e.to_string()),
            medians[1].map_or("never".into(), |e| e.to_string()),
            medians[2].map_or("never".into(), |e| e.to_string()),
        ));
    }
    Ok(summaries)
}
