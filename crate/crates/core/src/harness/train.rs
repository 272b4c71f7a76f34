use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{io_err, HarnessError, RunConfig};
use crate::agent::{Agent, EpisodeSummary, TrainError};
use crate::env::DrivingEnv;
use crate::seeding::{self, scenario_seeds, substream};
use crate::sim::StaticMap;
use crate::units::mps_to_kmh;

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeSummary>,
    pub checkpoint: PathBuf,
    pub env_steps: u64,
    pub updates: u64,
    pub elapsed_s: f64,
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    episode: usize,
    seed: u64,
    steps: usize,
    reward: f64,
    mean_speed_kmh: f64,
    distance_m: f64,
    terminal: &'a str,
    epsilon: f64,
    updates: u64,
    mean_loss: Option<f64>,
}

/// Trains a fresh agent. Writes `config.toml`, `metrics.csv` (one row per
/// episode, flushed as it goes), periodic `checkpoint_epNNNN.bin` files and
/// a final `checkpoint.bin` into the output directory.
pub fn train(cfg: &RunConfig) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    cfg.prepare_out_dir()?;
    let started = Instant::now();
    let scenario = Arc::new(cfg.scenario.clone());
    let map = Arc::new(StaticMap::build(&scenario.map));
    let mut init_rng = substream(cfg.seed, seeding::INIT);
    let mut agent = Agent::new(
        cfg.train.clone(),
        cfg.seed,
        &mut init_rng,
        substream(cfg.seed, seeding::EXPLORE),
        substream(cfg.seed, seeding::REPLAY),
    )?;
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let mut metrics = csv::Writer::from_path(&metrics_path)?;
    let seeds = scenario_seeds(cfg.seed, seeding::TRAIN_SCENARIOS, cfg.train.episodes);
    let mut summaries = Vec::with_capacity(seeds.len());
    for (episode, &seed) in seeds.iter().enumerate() {
        let mut env = DrivingEnv::new(scenario.clone(), map.clone(), seed, cfg.pid, cfg.reward)?;
        let summary = match agent.train_episode(&mut env, episode, seed, |_| {}) {
            Ok(s) => s,
            Err(TrainError::NonFiniteLoss { loss, update, windows }) => {
                let path = cfg.out_dir.join("nan_batch.json");
                let dump = serde_json::json!({
                    "episode": episode,
                    "update": update,
                    "loss": loss.to_string(),
                    "windows": windows,
                    "episode_seeds": windows.iter().map(|w| agent.memory.get(w.episode).seed).collect::<Vec<_>>(),
                });
                std::fs::write(&path, serde_json::to_vec_pretty(&dump)?).map_err(io_err(&path))?;
                log::error!("non-finite loss at update {update}; batch written to {}", path.display());
                return Err(TrainError::NonFiniteLoss { loss, update, windows }.into());
            }
            Err(e) => return Err(e.into()),
        };
        metrics.serialize(MetricsRow {
            episode: summary.episode,
            seed: summary.seed,
            steps: summary.steps,
            reward: summary.total_reward,
            mean_speed_kmh: mps_to_kmh(summary.mean_speed),
            distance_m: summary.distance,
            terminal: summary.cause.name(),
            epsilon: summary.epsilon,
            updates: summary.updates,
            mean_loss: summary.mean_loss,
        })?;
        metrics.flush().map_err(io_err(&metrics_path))?;
        log::info!(
            "episode {episode}: {} steps, reward {:.2}, {}, eps {:.3}, {} updates",
            summary.steps,
            summary.total_reward,
            summary.cause.name(),
            summary.epsilon,
            summary.updates
        );
        summaries.push(summary);
        if (episode + 1) % cfg.checkpoint_every == 0 && episode + 1 < seeds.len() {
            save(&agent, cfg.out_dir.join(format!("checkpoint_ep{:04}.bin", episode + 1)))?;
        }
    }
    let checkpoint = cfg.out_dir.join("checkpoint.bin");
    save(&agent, checkpoint.clone())?;
    Ok(TrainReport {
        episodes: summaries,
        checkpoint,
        env_steps: agent.env_steps,
        updates: agent.updates,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

fn save(agent: &Agent, path: PathBuf) -> Result<(), HarnessError> {
    let file = File::create(&path).map_err(io_err(&path))?;
    agent.write_checkpoint(BufWriter::new(file))?;
    Ok(())
}
