use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError, RunConfig};
use crate::action::{argmax, Action};
use crate::agent::{qnet_architecture, qnet_forward, terminal_cause, TerminalCause};
use crate::baseline::RuleDriver;
use crate::env::{DrivingEnv, StepRecord};
use crate::nn::{checkpoint, Network};
use crate::seeding::{self, scenario_seeds};
use crate::sim::{EpisodeStatus, StaticMap};
use crate::units::mps_to_kmh;

/// What drives the car during evaluation.
#[derive(Debug, Clone)]
pub enum Policy {
    Rule,
    /// Greedy with respect to the network's Q-values.
    Agent(Box<Network<f32>>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Rule => "rule",
            Policy::Agent(_) => "agent",
        }
    }
}

/// `"rule"` or a path to a training checkpoint (its main network is used).
pub fn load_policy(spec: &str) -> Result<Policy, HarnessError> {
    if spec == "rule" {
        return Ok(Policy::Rule);
    }
    let path = Path::new(spec);
    let file = File::open(path).map_err(io_err(path))?;
    let ck = checkpoint::read(std::io::BufReader::new(file))?;
    if ck.header.architecture != qnet_architecture() {
        return Err(HarnessError::Config(format!("{spec}: checkpoint architecture is not the Q-network")));
    }
    let net = ck
        .network("main")
        .ok_or_else(|| HarnessError::Config(format!("{spec}: no \"main\" section")))??;
    Ok(Policy::Agent(Box::new(net)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub seed: u64,
    pub steps: u32,
    pub terminal: TerminalCause,
    pub mean_speed_kmh: f64,
    pub distance_m: f64,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub policy: String,
    pub episodes: usize,
    pub collision_free_pct: f64,
    /// Mean over episodes of each episode's mean speed.
    pub avg_speed_kmh: f64,
    pub avg_distance_m: f64,
    pub rows: Vec<EpisodeRow>,
}

impl EvalMetrics {
    pub fn from_rows(policy: &str, rows: Vec<EpisodeRow>) -> Self {
        let n = rows.len();
        let mean = |f: &dyn Fn(&EpisodeRow) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let free = rows.iter().filter(|r| r.terminal != TerminalCause::Collision).count();
        Self {
            policy: policy.to_string(),
            episodes: n,
            collision_free_pct: if n == 0 { 0.0 } else { 100.0 * free as f64 / n as f64 },
            avg_speed_kmh: mean(&|r| r.mean_speed_kmh),
            avg_distance_m: mean(&|r| r.distance_m),
            rows,
        }
    }
}

/// One line of `trace_<episode>.csv`. Speeds are m/s; `pedestrians` is a
/// JSON array of `[x, y]` positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u32,
    pub time: f64,
    pub s: f64,
    pub speed: f64,
    pub desired: f64,
    pub accel_cmd: f64,
    pub throttle: f64,
    pub brake: f64,
    pub action: String,
    pub reward: f64,
    pub reward_case: String,
    pub min_ttc: Option<f64>,
    pub pedestrians: String,
}

impl TraceRow {
    fn from_record(r: &StepRecord) -> Self {
        Self {
            step: r.step,
            time: r.time,
            s: r.s,
            speed: r.speed,
            desired: r.desired,
            accel_cmd: r.accel_cmd,
            throttle: r.throttle,
            brake: r.brake,
            action: r.action.clone(),
            reward: r.reward,
            reward_case: r.reward_case.name().to_string(),
            min_ttc: r.min_ttc,
            pedestrians: serde_json::to_string(&r.pedestrians).unwrap_or_default(),
        }
    }
}

struct EpisodeOutput<'a> {
    trace: Option<PathBuf>,
    grids: Option<&'a Path>,
}

fn run_episode(
    policy: &Policy,
    cfg: &RunConfig,
    env: &mut DrivingEnv,
    episode: usize,
    seed: u64,
    out: EpisodeOutput<'_>,
) -> Result<EpisodeRow, HarnessError> {
    let mut trace = match &out.trace {
        Some(p) => Some(csv::Writer::from_path(p)?),
        None => None,
    };
    let mut rule = RuleDriver::new(cfg.rule, cfg.pid);
    let mut hidden = match policy {
        Policy::Agent(net) => Some(net.zero_state(1)),
        Policy::Rule => None,
    };
    let mut total_reward = 0.0;
    while env.status() == EpisodeStatus::Running {
        if let Some(dir) = out.grids {
            let prefix = format!("ep{episode:03}_t{:04}", env.world.step);
            env.observe().0.dump_pgm(dir, &prefix).map_err(io_err(dir))?;
        }
        let outcome = match policy {
            Policy::Rule => {
                let (decision, tick) = rule.act(&env.world);
                let label = match decision {
                    crate::baseline::RuleDecision::Cruise => "cruise",
                    crate::baseline::RuleDecision::EmergencyBrake => "emergency-brake",
                };
                env.step_control(tick, label)?
            }
            Policy::Agent(net) => {
                let (obs, aux) = env.observe();
                let h = hidden.as_ref().expect("agent state");
                let (q, next) = qnet_forward(net, &obs, aux, h)?;
                hidden = Some(next);
                env.step_action(Action::from_index(argmax(&q)).expect("four Q-values"))?
            }
        };
        total_reward += outcome.reward;
        if let Some(w) = trace.as_mut() {
            w.serialize(TraceRow::from_record(&outcome.record))?;
        }
    }
    if let (Some(w), Some(p)) = (trace.as_mut(), &out.trace) {
        w.flush().map_err(io_err(p))?;
    }
    Ok(EpisodeRow {
        episode,
        seed,
        steps: env.world.step,
        terminal: terminal_cause(env.status()).expect("episode ended"),
        mean_speed_kmh: mps_to_kmh(env.mean_speed()),
        distance_m: env.distance(),
        total_reward,
    })
}

/// Runs `cfg.eval_episodes` held-out episodes. With an output directory it
/// writes `summary.json`, `episodes.csv` and, if enabled, traces and grids.
pub fn evaluate(cfg: &RunConfig, policy: &Policy, out_dir: Option<&Path>) -> Result<EvalMetrics, HarnessError> {
    cfg.validate()?;
    let scenario = Arc::new(cfg.scenario.clone());
    let map = Arc::new(StaticMap::build(&scenario.map));
    let grids_dir = out_dir.filter(|_| cfg.dump_grids).map(|d| d.join("grids"));
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    if let Some(g) = &grids_dir {
        std::fs::create_dir_all(g).map_err(io_err(g))?;
    }
    let seeds = scenario_seeds(cfg.seed, seeding::EVAL_SCENARIOS, cfg.eval_episodes);
    let mut rows = Vec::with_capacity(seeds.len());
    for (episode, &seed) in seeds.iter().enumerate() {
        let mut env = DrivingEnv::new(scenario.clone(), map.clone(), seed, cfg.pid, cfg.reward)?;
        let out = EpisodeOutput {
            trace: out_dir.filter(|_| cfg.traces).map(|d| d.join(format!("trace_{episode}.csv"))),
            grids: grids_dir.as_deref(),
        };
        let row = run_episode(policy, cfg, &mut env, episode, seed, out)?;
        log::info!(
            "{} episode {episode}: {} after {} steps, {:.1} m",
            policy.name(),
            row.terminal.name(),
            row.steps,
            row.distance_m
        );
        rows.push(row);
    }
    let metrics = EvalMetrics::from_rows(policy.name(), rows);
    if let Some(d) = out_dir {
        let path = d.join("summary.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&metrics)?).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_path(d.join("episodes.csv"))?;
        for r in &metrics.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(d))?;
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub episode: usize,
    pub seed: u64,
    pub rule_terminal: TerminalCause,
    pub agent_terminal: TerminalCause,
    pub rule_distance_m: f64,
    pub agent_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rule: EvalMetrics,
    pub agent: EvalMetrics,
    pub paired: Vec<PairedRow>,
}

impl CompareReport {
    pub fn agent_at_least_as_safe(&self) -> bool {
        self.agent.collision_free_pct >= self.rule.collision_free_pct
    }

    pub fn agent_at_least_as_far(&self) -> bool {
        self.agent.avg_distance_m >= self.rule.avg_distance_m
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<8}{:>18}{:>16}{:>16}\n", "policy", "collision-free %", "avg speed km/h", "avg distance m");
        for m in [&self.rule, &self.agent] {
            s += &format!(
                "{:<8}{:>18.1}{:>16.2}{:>16.2}\n",
                m.policy, m.collision_free_pct, m.avg_speed_kmh, m.avg_distance_m
            );
        }
        s
    }
}

/// Evaluates the rule baseline and `agent` on the same held-out seeds.
pub fn compare(cfg: &RunConfig, agent: &Policy, out_dir: Option<&Path>) -> Result<CompareReport, HarnessError> {
    let sub = |name: &str| out_dir.map(|d| d.join(name));
    let rule = evaluate(cfg, &Policy::Rule, sub("rule").as_deref())?;
    let agent = evaluate(cfg, agent, sub("agent").as_deref())?;
    let paired = rule
        .rows
        .iter()
        .zip(&agent.rows)
        .map(|(r, a)| PairedRow {
            episode: r.episode,
            seed: r.seed,
            rule_terminal: r.terminal,
            agent_terminal: a.terminal,
            rule_distance_m: r.distance_m,
            agent_distance_m: a.distance_m,
        })
        .collect();
    let report = CompareReport { rule, agent, paired };
    if let Some(d) = out_dir {
        let path = d.join("compare.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_path(d.join("compare.csv"))?;
        for r in &report.paired {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(d))?;
    }
    Ok(report)
}
