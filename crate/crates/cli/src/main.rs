use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use urban_drqn::harness::{self, load_policy, Policy, RunConfig};

#[derive(Parser)]
#[command(name = "urban-drqn", version, about = "Train and evaluate a recurrent Q-learning driver among pedestrians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pedestrian speed range in m/s instead of km/h
    #[arg(long)]
    walking_speed: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh agent
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        /// Environment steps per gradient update
        #[arg(long)]
        train_every: Option<u64>,
    },
    /// Evaluate a checkpoint or the rule baseline on held-out seeds
    Eval {
        #[command(flatten)]
        common: Common,
        /// `rule` or a checkpoint path
        #[arg(long)]
        policy: String,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write the grid layers of every step as PGM images
        #[arg(long)]
        dump_grids: bool,
    },
    /// Evaluate a checkpoint and the rule baseline on the same seeds
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: String,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Finite-difference check of the full network's gradients
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, starting at --seed
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Corrupt the analytic gradient at this parameter index
        #[arg(long)]
        fault: Option<usize>,
    },
    /// Print the default configuration as TOML
    Config,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if common.walking_speed {
        cfg.scenario.pedestrians.speed_unit = urban_drqn::sim::SpeedUnit::Mps;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, episodes, train_every } => {
            let mut cfg = load(&common)?;
            if let Some(e) = episodes {
                cfg.train.episodes = e;
            }
            if let Some(t) = train_every {
                cfg.train.train_every = t;
            }
            let report = harness::train(&cfg)?;
            println!(
                "trained {} episodes ({} env steps, {} updates) in {:.1} s; checkpoint {}",
                report.episodes.len(),
                report.env_steps,
                report.updates,
                report.elapsed_s,
                report.checkpoint.display()
            );
        }
        Command::Eval { common, policy, episodes, dump_grids } => {
            let mut cfg = load(&common)?;
            if let Some(e) = episodes {
                cfg.eval_episodes = e;
            }
            cfg.dump_grids |= dump_grids;
            let policy = load_policy(&policy)?;
            let m = harness::evaluate(&cfg, &policy, Some(&cfg.out_dir))?;
            println!(
                "{}: {} episodes, collision-free {:.1}%, avg speed {:.2} km/h, avg distance {:.2} m",
                m.policy, m.episodes, m.collision_free_pct, m.avg_speed_kmh, m.avg_distance_m
            );
        }
        Command::Compare { common, policy, episodes } => {
            let mut cfg = load(&common)?;
            if let Some(e) = episodes {
                cfg.eval_episodes = e;
            }
            let agent = load_policy(&policy)?;
            if matches!(agent, Policy::Rule) {
                bail!("compare needs a checkpoint for --policy");
            }
            let report = harness::compare(&cfg, &agent, Some(&cfg.out_dir))?;
            print!("{}", report.table());
        }
        Command::Gradcheck { common, seeds, fault } => {
            let cfg = load(&common)?;
            let mut failed = 0;
            for seed in cfg.seed..cfg.seed + seeds {
                let t = Instant::now();
                let o = harness::gradcheck_network(&cfg.gradcheck, seed, fault)?;
                println!(
                    "seed {seed}: max rel error {:.3e} at param {} (layer {}), {} probes, {:.1} s: {}",
                    o.report.max_rel_error,
                    o.report.worst_index,
                    o.worst_layer,
                    o.report.checked,
                    t.elapsed().as_secs_f64(),
                    if o.passed { "ok" } else { "FAIL" }
                );
                failed += usize::from(!o.passed);
            }
            if failed > 0 {
                bail!("{failed} of {seeds} seeds failed the gradient check");
            }
        }
        Command::Config => print!("{}", RunConfig::default().to_toml()?),
    }
    Ok(())
}
