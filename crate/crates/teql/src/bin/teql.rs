//! Command-line front end: train one cell, run an experiment grid, run the
//! synthetic-MDP regret study, or re-aggregate existing result CSVs.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use teql::harness::{
    cell_seed, expand_variants, reaggregate_report, run_experiment, run_training,
    write_rewards_csv, EnvId, ExperimentKind, RunConfig,
};

#[derive(Parser)]
#[command(name = "teql", version, about = "Tensor-factorized Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment when no config file is given.
    #[arg(long, default_value = "cartpole")]
    env: String,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of seeds (overrides the config).
    #[arg(long)]
    seeds: Option<usize>,
    /// Episodes per seed (overrides the config).
    #[arg(long)]
    episodes: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    master_seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)
                .with_context(|| format!("loading {}", path.display()))?,
            None => RunConfig::defaults_for(EnvId::parse(&self.env)?),
        };
        if let Some(v) = self.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.master_seed {
            cfg.master_seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a single (variant, seed) cell and write its reward CSV.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Seed index of the cell.
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
        /// Experiment variant to train; the raw config when omitted.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run the configured experiment grid across all variants and seeds.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write the manifest without executing any training step.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the synthetic-MDP regret experiment.
    Regret {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        dry_run: bool,
    },
    /// Recompute aggregate and threshold CSVs from an experiment directory.
    Report {
        /// Directory holding rewards_*.csv and manifest.json.
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed_index,
            variant,
        } => {
            let cfg = config.load()?;
            let (id, cell) = match variant {
                Some(wanted) => {
                    let variants = expand_variants(&cfg)?;
                    let found = variants
                        .into_iter()
                        .find(|v| v.id == wanted)
                        .with_context(|| format!("experiment has no variant '{wanted}'"))?;
                    (found.id, found.cell)
                }
                None => ("train".to_string(), cfg.cell()),
            };
            let seed = cell_seed(cfg.master_seed, &id, seed_index);
            let run = run_training(&cell, seed)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join(format!("rewards_{id}_{seed_index}.csv"));
            write_rewards_csv(&path, &run.rewards, &run.smoothed)?;
            println!(
                "{id} seed {seed_index}: {} episodes, {} steps, {} visited pairs -> {}",
                run.rewards.len(),
                run.steps_executed,
                run.visited_pairs,
                path.display()
            );
            if let Some(d) = &run.diverged {
                bail!("seed diverged at episode {}: {}", d.episode, d.message);
            }
            Ok(())
        }
        Command::Experiment {
            config,
            workers,
            dry_run,
        } => {
            let cfg = config.load()?;
            let out_dir = cfg.output_dir.clone();
            let outcome = run_experiment(&cfg, &out_dir, workers, dry_run)?;
            for v in &outcome.variants {
                let m = v.median_thresholds;
                println!(
                    "{}: median episodes to 80/90/95%: {} / {} / {}",
                    v.id,
                    m[0].map_or("never".into(), |e| e.to_string()),
                    m[1].map_or("never".into(), |e| e.to_string()),
                    m[2].map_or("never".into(), |e| e.to_string()),
                );
            }
            println!("results in {}", outcome.out_dir.display());
            if outcome.any_diverged() {
                bail!("one or more cells diverged; see manifest.json");
            }
            Ok(())
        }
        Command::Regret {
            config,
            workers,
            dry_run,
        } => {
            let mut cfg = config.load()?;
            cfg.experiment = ExperimentKind::Regret;
            if config.config.is_none() && config.env == "cartpole" {
                // regret runs on the synthetic MDP unless told otherwise
                cfg = RunConfig {
                    experiment: ExperimentKind::Regret,
                    seeds: cfg.seeds,
                    episodes: cfg.episodes,
                    master_seed: cfg.master_seed,
                    output_dir: cfg.output_dir,
                    ..RunConfig::defaults_for(EnvId::Synthetic)
                };
            }
            let out_dir = cfg.output_dir.clone();
            let outcome = run_experiment(&cfg, &out_dir, workers, dry_run)?;
            if let Some(halves) = &outcome.manifest.regret_halves {
                for (seed, h) in halves.iter().enumerate() {
                    println!(
                        "seed {seed}: mean step regret {:.4} -> {:.4}",
                        h[0], h[1]
                    );
                }
            }
            println!("results in {}", outcome.out_dir.display());
            Ok(())
        }
        Command::Report { dir } => {
            for line in reaggregate_report(&dir)? {
                println!("{line}");
            }
            Ok(())
        }
    }
}
