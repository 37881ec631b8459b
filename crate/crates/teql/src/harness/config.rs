//! Run configuration: environment defaults, TOML parsing, derived values.
//!
//! A config file only needs an `environment`; every other knob has a default
//! recorded here. Two defaults are derived rather than fixed: the penalty
//! weight falls back to `sqrt(d_eff / T)` with `T` the configured total step
//! budget, and the Q clamp falls back to `2 * R_max / (1 - gamma)` from the
//! environment's reward bound.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::discretize::{DimSpec, DiscretizationSpec};
use crate::envs::{CartPole, Environment, Pendulum};
use crate::learner::LearnerConfig;
use crate::policy::{PolicyConfig, PolicyKind};

use super::HarnessError;

pub const DEFAULT_EPISODES: usize = 500;
pub const DEFAULT_MAX_STEPS: usize = 100;
pub const DEFAULT_SEEDS: usize = 10;
pub const DEFAULT_RANK: usize = 10;
pub const DEFAULT_INIT_SCALE: f64 = 1.0;
pub const DEFAULT_MASTER_SEED: u64 = 7;
/// Epsilon-greedy schedule of the unpenalized baseline, per environment.
pub const TLR_EPS0_PENDULUM: f64 = 1.0;
pub const TLR_EPS0_CARTPOLE: f64 = 0.0;
pub const TLR_EPS_DECAY: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Pendulum,
    Cartpole,
    /// Seeded tabular MDP used by the regret experiment.
    Synthetic,
}

impl EnvId {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "pendulum" => Ok(EnvId::Pendulum),
            "cartpole" => Ok(EnvId::Cartpole),
            "synthetic" => Ok(EnvId::Synthetic),
            other => Err(HarnessError::Config(format!(
                "unknown environment '{other}' (expected pendulum, cartpole, or synthetic)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Pendulum => "pendulum",
            EnvId::Cartpole => "cartpole",
            EnvId::Synthetic => "synthetic",
        }
    }

    pub fn make(&self, max_steps: usize) -> Box<dyn Environment> {
        match self {
            EnvId::Pendulum => Box::new(Pendulum::new(max_steps)),
            EnvId::Cartpole => Box::new(CartPole::new(max_steps)),
            EnvId::Synthetic => panic!("the synthetic MDP is driven by the regret runner"),
        }
    }

    /// Standard grid: bin counts from the reference setup, bounds wide
    /// enough to cover observed trajectories.
    pub fn default_discretization(&self) -> DiscretizationSpec {
        match self {
            EnvId::Pendulum => DiscretizationSpec::new(
                vec![
                    DimSpec::new(-std::f64::consts::PI, std::f64::consts::PI, 20),
                    DimSpec::new(-8.0, 8.0, 20),
                ],
                vec![DimSpec::new(-2.0, 2.0, 10)],
            )
            .expect("static spec"),
            EnvId::Cartpole => DiscretizationSpec::new(
                vec![
                    DimSpec::new(-4.8, 4.8, 10),
                    DimSpec::new(-4.0, 4.0, 10),
                    DimSpec::new(-0.418, 0.418, 20),
                    DimSpec::new(-4.0, 4.0, 20),
                ],
                vec![DimSpec::new(-1.0, 1.0, 10)],
            )
            .expect("static spec"),
            EnvId::Synthetic => identity_grid(5, 3),
        }
    }

    pub fn tlr_eps0(&self) -> f64 {
        match self {
            EnvId::Pendulum => TLR_EPS0_PENDULUM,
            EnvId::Cartpole | EnvId::Synthetic => TLR_EPS0_CARTPOLE,
        }
    }
}

/// One bin per integer value on `[0, n-1]`: index `v + 1` for value `v`, so
/// already-discrete spaces pass through the same machinery unchanged.
pub fn identity_grid(n_states: usize, n_actions: usize) -> DiscretizationSpec {
    DiscretizationSpec::new(
        vec![DimSpec::new(0.0, (n_states - 1) as f64, n_states)],
        vec![DimSpec::new(0.0, (n_actions - 1) as f64, n_actions)],
    )
    .expect("identity grid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TeqlVsTlr,
    AblationPenalty,
    GranularitySweep,
    Regret,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "teql_vs_tlr" => Ok(ExperimentKind::TeqlVsTlr),
            "ablation_penalty" => Ok(ExperimentKind::AblationPenalty),
            "granularity_sweep" => Ok(ExperimentKind::GranularitySweep),
            "regret" => Ok(ExperimentKind::Regret),
            other => Err(HarnessError::Config(format!(
                "unknown experiment '{other}'"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::TeqlVsTlr => "teql_vs_tlr",
            ExperimentKind::AblationPenalty => "ablation_penalty",
            ExperimentKind::GranularitySweep => "granularity_sweep",
            ExperimentKind::Regret => "regret",
        }
    }
}

/// Fully resolved configuration of one run; echoed verbatim into manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub environment: EnvId,
    pub experiment: ExperimentKind,
    pub discretization: DiscretizationSpec,
    pub learner: LearnerConfig,
    pub policy: PolicyConfig,
    pub episodes: usize,
    pub max_steps: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub rank: usize,
    pub init_scale: f64,
    pub output_dir: PathBuf,
    /// Synthetic-MDP shape for the regret experiment.
    pub mdp_states: usize,
    pub mdp_actions: usize,
}

impl RunConfig {
    /// Reference defaults for an environment: EUGE with c = 2, rank 10,
    /// alpha 0.005, gamma 0.9, derived penalty weight and Q clamp.
    pub fn defaults_for(env: EnvId) -> RunConfig {
        let mut cfg = RunConfig {
            environment: env,
            experiment: ExperimentKind::TeqlVsTlr,
            discretization: env.default_discretization(),
            learner: LearnerConfig::default(),
            policy: PolicyConfig {
                kind: PolicyKind::Euge,
                c: 2.0,
                eps0: env.tlr_eps0(),
                eps_decay: TLR_EPS_DECAY,
            },
            episodes: DEFAULT_EPISODES,
            max_steps: DEFAULT_MAX_STEPS,
            seeds: DEFAULT_SEEDS,
            master_seed: DEFAULT_MASTER_SEED,
            rank: DEFAULT_RANK,
            init_scale: DEFAULT_INIT_SCALE,
            output_dir: PathBuf::from("runs"),
            mdp_states: 5,
            mdp_actions: 3,
        };
        cfg.learner.lambda = cfg.derived_lambda();
        cfg.learner.q_clip = Some(cfg.derived_q_clip());
        cfg
    }

    /// `sqrt(d_eff / T)` with `d_eff = R * N` and `T` the step budget.
    pub fn derived_lambda(&self) -> f64 {
        let n_modes = self.discretization.tensor_dims().len();
        let d_eff = (self.rank * n_modes) as f64;
        let total_steps = (self.episodes * self.max_steps) as f64;
        (d_eff / total_steps).sqrt()
    }

    /// `2 * R_max / (1 - gamma)`.
    pub fn derived_q_clip(&self) -> f64 {
        let r_max = match self.environment {
            EnvId::Pendulum => crate::envs::Pendulum::max_step_cost(),
            EnvId::Cartpole => 1.0,
            EnvId::Synthetic => 1.0,
        };
        2.0 * r_max / (1.0 - self.learner.gamma)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episodes must be >= 1".into()));
        }
        if self.seeds == 0 {
            return Err(HarnessError::Config("seeds must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(HarnessError::Config("max_steps must be >= 1".into()));
        }
        if self.rank == 0 {
            return Err(HarnessError::Config("rank must be >= 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(HarnessError::Config(format!(
                "init_scale must be finite and >= 0, got {}",
                self.init_scale
            )));
        }
        if self.mdp_states == 0 || self.mdp_actions == 0 {
            return Err(HarnessError::Config("mdp shape must be nonzero".into()));
        }
        self.learner
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.policy
            .validate()
            .map_err(HarnessError::Config)?;
        let expected_state_dims = match self.environment {
            EnvId::Pendulum => 2,
            EnvId::Cartpole => 4,
            EnvId::Synthetic => 1,
        };
        if self.environment != EnvId::Synthetic
            && self.discretization.n_state_dims() != expected_state_dims
        {
            return Err(HarnessError::Config(format!(
                "{} needs {expected_state_dims} state dimensions, spec has {}",
                self.environment.as_str(),
                self.discretization.n_state_dims()
            )));
        }
        Ok(())
    }

    /// Parses a TOML document, starting from the environment's defaults and
    /// applying only the keys present in the file.
    pub fn from_toml_str(text: &str) -> Result<RunConfig, HarnessError> {
        let file: FileConfig = toml::from_str(text)
            .map_err(|e| HarnessError::Config(format!("config parse error: {e}")))?;
        let env = EnvId::parse(&file.environment)?;
        let mut cfg = RunConfig::defaults_for(env);

        if let Some(kind) = &file.experiment {
            cfg.experiment = ExperimentKind::parse(kind)?;
        }
        if let Some(v) = file.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = file.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = file.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = file.master_seed {
            cfg.master_seed = v;
        }
        if let Some(v) = file.rank {
            cfg.rank = v;
        }
        if let Some(v) = file.init_scale {
            cfg.init_scale = v;
        }
        if let Some(v) = &file.output_dir {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = file.mdp_states {
            cfg.mdp_states = v;
        }
        if let Some(v) = file.mdp_actions {
            cfg.mdp_actions = v;
        }

        if let Some(disc) = &file.discretization {
            let parse_dims = |triples: &[[f64; 3]]| -> Result<Vec<DimSpec>, HarnessError> {
                triples
                    .iter()
                    .map(|t| {
                        if t[2].fract() != 0.0 || t[2] < 2.0 {
                            return Err(HarnessError::Config(format!(
                                "bin count must be an integer >= 2, got {}",
                                t[2]
                            )));
                        }
                        Ok(DimSpec::new(t[0], t[1], t[2] as usize))
                    })
                    .collect()
            };
            let state = match &disc.state {
                Some(t) => parse_dims(t)?,
                None => cfg.discretization.state.clone(),
            };
            let action = match &disc.action {
                Some(t) => parse_dims(t)?,
                None => cfg.discretization.action.clone(),
            };
            cfg.discretization = DiscretizationSpec::new(state, action)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }

        if let Some(l) = &file.learner {
            if let Some(v) = l.eps_pen {
                cfg.learner.eps_pen = v;
            }
            if let Some(v) = l.alpha0 {
                cfg.learner.alpha0 = v;
            }
            if let Some(v) = l.kappa {
                cfg.learner.kappa = v;
            }
            if let Some(v) = l.gamma {
                cfg.learner.gamma = v;
            }
            if let Some(v) = l.tau {
                cfg.learner.tau = v;
            }
            if let Some(v) = l.max_inner {
                cfg.learner.max_inner = v;
            }
        }

        if let Some(p) = &file.policy {
            if let Some(kind) = &p.kind {
                cfg.policy.kind = match kind.as_str() {
                    "euge" => PolicyKind::Euge,
                    "ucb" => PolicyKind::Ucb,
                    "epsilon_greedy" => PolicyKind::EpsilonGreedy,
                    "greedy" => PolicyKind::Greedy,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "unknown policy kind '{other}'"
                        )))
                    }
                };
            }
            if let Some(v) = p.c {
                cfg.policy.c = v;
            }
            if let Some(v) = p.eps0 {
                cfg.policy.eps0 = v;
            }
            if let Some(v) = p.eps_decay {
                cfg.policy.eps_decay = v;
            }
        }

        // derived defaults recompute against the possibly-overridden shape,
        // then explicit values win
        cfg.learner.lambda = cfg.derived_lambda();
        cfg.learner.q_clip = Some(cfg.derived_q_clip());
        if let Some(l) = &file.learner {
            if let Some(v) = l.lambda {
                cfg.learner.lambda = v;
            }
            if let Some(v) = l.q_clip {
                cfg.learner.q_clip = if v == 0.0 { None } else { Some(v) };
            }
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<RunConfig, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    environment: String,
    experiment: Option<String>,
    episodes: Option<usize>,
    max_steps: Option<usize>,
    seeds: Option<usize>,
    master_seed: Option<u64>,
    rank: Option<usize>,
    init_scale: Option<f64>,
    output_dir: Option<String>,
    mdp_states: Option<usize>,
    mdp_actions: Option<usize>,
    discretization: Option<FileDiscretization>,
    learner: Option<FileLearner>,
    policy: Option<FilePolicy>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDiscretization {
    /// Per-dimension `[min, max, bins]` triples.
    state: Option<Vec<[f64; 3]>>,
    action: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLearner {
    lambda: Option<f64>,
    eps_pen: Option<f64>,
    alpha0: Option<f64>,
    kappa: Option<f64>,
    gamma: Option<f64>,
    tau: Option<f64>,
    max_inner: Option<usize>,
    /// 0 disables the clamp.
    q_clip: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePolicy {
    kind: Option<String>,
    c: Option<f64>,
    eps0: Option<f64>,
    eps_decay: Option<f64>,
}
