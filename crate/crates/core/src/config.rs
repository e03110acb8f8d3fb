//! `key = value` run configuration. Lines starting with `#` are comments.
//! Every key has a default; rendering a resolved config and parsing it back
//! yields the same values.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::controllers::RuleParams;
use crate::error::{config_err, Result};
use crate::flow::FlowName;
use crate::imitation::ImitationConfig;
use crate::nn::ConvMode;
use crate::rl::RlConfig;
use crate::topology::NetworkConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub episode_s: f64,
    /// Seconds over which the flow preset values are counted.
    pub flow_period_s: f64,
    pub low_speed_kmh: f64,
    pub flow: FlowName,
    pub conv: ConvMode,
    pub seed: u64,
    pub rule: RuleParams,
    pub imitation: ImitationConfig,
    /// Explicit accuracy threshold; otherwise chosen from the grid size.
    pub xi: Option<f64>,
    pub rl: RlConfig,
    /// Explicit RL episode count; otherwise chosen from the grid size.
    pub rl_episodes: Option<usize>,
    pub eval_episodes: usize,
    /// Greedy evaluation episodes run after every training episode.
    pub probe_episodes: usize,
    /// Write a per-step metrics CSV during training and evaluation.
    pub step_log: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            episode_s: 4000.0,
            flow_period_s: crate::sim::DEFAULT_FLOW_PERIOD_S,
            low_speed_kmh: crate::sim::LOW_SPEED_KMH,
            flow: FlowName::Low,
            conv: ConvMode::Channels,
            seed: 0,
            rule: RuleParams::default(),
            imitation: ImitationConfig::default(),
            xi: None,
            rl: RlConfig::default(),
            rl_episodes: None,
            eval_episodes: 5,
            probe_episodes: 0,
            step_log: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("bad value '{value}' for {key}")))
}

/// Parses `RxC`, e.g. `2x3`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| config_err(format!("grid '{s}' is not of the form RxC")))?;
    let r: usize = parse("grid", r.trim())?;
    let c: usize = parse("grid", c.trim())?;
    if r == 0 || c == 0 {
        return Err(config_err(format!("grid '{s}' has no intersections")));
    }
    Ok((r, c))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid" => {
                let (r, c) = parse_grid(v)?;
                self.network.rows = r;
                self.network.cols = c;
            }
            "grid.rows" => self.network.rows = parse(key, v)?,
            "grid.cols" => self.network.cols = parse(key, v)?,
            "lane.length_m" => self.network.lane_length_m = parse(key, v)?,
            "lane.cell_m" => self.network.cell_m = parse(key, v)?,
            "lane.per_approach" => self.network.lanes_per_approach = parse(key, v)?,
            "sim.max_speed_kmh" => self.network.max_speed_kmh = parse(key, v)?,
            "sim.amber_steps" => self.network.amber_steps = parse(key, v)?,
            "sim.step_s" => self.network.step_s = parse(key, v)?,
            "sim.episode_s" => self.episode_s = parse(key, v)?,
            "sim.low_speed_kmh" => self.low_speed_kmh = parse(key, v)?,
            "flow.name" => self.flow = v.parse()?,
            "flow.period_s" => self.flow_period_s = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "rule.beta" => self.rule.beta = parse(key, v)?,
            "imitation.c" => self.imitation.c = parse(key, v)?,
            "imitation.m" => self.imitation.iterations = parse(key, v)?,
            "imitation.batch" => self.imitation.batch = parse(key, v)?,
            "imitation.lr" => self.imitation.lr = parse(key, v)?,
            "imitation.max_rounds" => self.imitation.max_rounds = parse(key, v)?,
            "imitation.xi" => self.xi = if v == "auto" { None } else { Some(parse(key, v)?) },
            "pool.capacity" => self.imitation.pool_capacity = parse(key, v)?,
            "rl.gamma" => self.rl.gamma = parse(key, v)?,
            "rl.alpha1" => self.rl.alpha1 = parse(key, v)?,
            "rl.alpha2" => self.rl.alpha2 = parse(key, v)?,
            "rl.eps_clip" => self.rl.eps_clip = parse(key, v)?,
            "rl.n_max" => self.rl.n_max = parse(key, v)?,
            "rl.epochs" => self.rl.epochs = parse(key, v)?,
            "rl.episodes" => {
                self.rl_episodes = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "train.lr" => self.rl.lr = parse(key, v)?,
            "net.conv" => self.conv = v.parse()?,
            "eval.episodes" => self.eval_episodes = parse(key, v)?,
            "train.probe_episodes" => self.probe_episodes = parse(key, v)?,
            "log.steps" => self.step_log = parse(key, v)?,
            _ => return Err(config_err(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if !(self.flow_period_s > 0.0) {
            return Err(config_err("flow.period_s must be positive"));
        }
        if !(self.episode_s >= self.network.step_s) {
            return Err(config_err("sim.episode_s must cover at least one step"));
        }
        self.rule.validate()?;
        self.imitation.validate()?;
        self.rl.validate()?;
        if let Some(xi) = self.xi {
            if !(0.0..=1.0).contains(&xi) {
                return Err(config_err("imitation.xi must lie in [0, 1]"));
            }
        }
        if self.eval_episodes == 0 {
            return Err(config_err("eval.episodes must be positive"));
        }
        Ok(())
    }

    pub fn single_intersection(&self) -> bool {
        self.network.intersections() == 1
    }

    /// 0.9 for an isolated intersection, 0.7 for networks.
    pub fn resolved_xi(&self) -> f64 {
        self.xi
            .unwrap_or(if self.single_intersection() { 0.9 } else { 0.7 })
    }

    /// 30 for an isolated intersection, 200 for networks.
    pub fn resolved_rl_episodes(&self) -> usize {
        self.rl_episodes
            .unwrap_or(if self.single_intersection() { 30 } else { 200 })
    }

    /// Every key with its resolved value, parseable by [`RunConfig::apply_str`].
    pub fn render(&self) -> String {
        let n = &self.network;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("grid.rows", n.rows.to_string());
        kv("grid.cols", n.cols.to_string());
        kv("lane.length_m", n.lane_length_m.to_string());
        kv("lane.cell_m", n.cell_m.to_string());
        kv("lane.per_approach", n.lanes_per_approach.to_string());
        kv("sim.max_speed_kmh", n.max_speed_kmh.to_string());
        kv("sim.amber_steps", n.amber_steps.to_string());
        kv("sim.step_s", n.step_s.to_string());
        kv("sim.episode_s", self.episode_s.to_string());
        kv("sim.low_speed_kmh", self.low_speed_kmh.to_string());
        kv("flow.name", self.flow.to_string());
        kv("flow.period_s", self.flow_period_s.to_string());
        kv("net.conv", self.conv.to_string());
        kv("seed", self.seed.to_string());
        kv("rule.beta", self.rule.beta.to_string());
        kv("imitation.c", self.imitation.c.to_string());
        kv("imitation.m", self.imitation.iterations.to_string());
        kv("imitation.batch", self.imitation.batch.to_string());
        kv("imitation.lr", self.imitation.lr.to_string());
        kv("imitation.max_rounds", self.imitation.max_rounds.to_string());
        kv("imitation.xi", self.resolved_xi().to_string());
        kv("pool.capacity", self.imitation.pool_capacity.to_string());
        kv("rl.gamma", self.rl.gamma.to_string());
        kv("rl.alpha1", self.rl.alpha1.to_string());
        kv("rl.alpha2", self.rl.alpha2.to_string());
        kv("rl.eps_clip", self.rl.eps_clip.to_string());
        kv("rl.n_max", self.rl.n_max.to_string());
        kv("rl.epochs", self.rl.epochs.to_string());
        kv("rl.episodes", self.resolved_rl_episodes().to_string());
        kv("train.lr", self.rl.lr.to_string());
        kv("eval.episodes", self.eval_episodes.to_string());
        kv("train.probe_episodes", self.probe_episodes.to_string());
        kv("log.steps", self.step_log.to_string());
        s
    }
}
