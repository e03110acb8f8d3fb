//! Experiment orchestration: co-training, baseline runs, evaluation reports
//! and the files they leave behind.
//!
//! Every random decision draws from a generator seeded by [`derive_seed`]
//! with its own stream tag, so a stage can be rerun or resumed without
//! replaying the stages before it.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::controllers::{Controller, FixedTime, RuleController};
use crate::encode::{encode_phase, encode_state};
use crate::error::{config_err, Error, Result};
use crate::flow::FlowProgram;
use crate::imitation::{dagger_round, Actor, RoundReport, TrajectoryPool};
use crate::nn::{load_checkpoint, save_checkpoint, Adam, NetShape, Network as PolicyNet};
use crate::rl::{rl_episode, RlEpisodeReport};
use crate::sim::{EpisodeConfig, MetricRow, Simulation, StepReport};
use crate::topology::{Network, PHASES};

pub const CSV_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.gsrl";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const IMITATION_CSV: &str = "imitation.csv";
pub const RL_CSV: &str = "rl.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Fixed20,
    Fixed40,
    Rule,
    IlOnly,
    Dr,
    Dri,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::Fixed20,
        ControllerKind::Fixed40,
        ControllerKind::Rule,
        ControllerKind::IlOnly,
        ControllerKind::Dr,
        ControllerKind::Dri,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Fixed20 => "fixed20",
            ControllerKind::Fixed40 => "fixed40",
            ControllerKind::Rule => "rule",
            ControllerKind::IlOnly => "il-only",
            ControllerKind::Dr => "dr",
            ControllerKind::Dri => "dri",
        }
    }

    /// True for controllers backed by a trained network.
    pub fn is_learned(self) -> bool {
        matches!(self, ControllerKind::IlOnly | ControllerKind::Dr | ControllerKind::Dri)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown controller '{s}'")))
    }
}

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const IMITATION: u64 = 2;
    pub const RL: u64 = 3;
    pub const ENV_IMITATION: u64 = 4;
    pub const ENV_RL: u64 = 5;
    pub const EVAL: u64 = 6;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ stream) ^ index)
}

fn rng_for(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// A validated configuration with its network built once.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: RunConfig,
    net: Arc<Network>,
}

impl Experiment {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let net = Arc::new(Network::build(cfg.network.clone())?);
        Ok(Self { cfg, net })
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            episode_s: self.cfg.episode_s,
            flow_period_s: self.cfg.flow_period_s,
            flow: FlowProgram::preset(self.cfg.flow),
            low_speed_kmh: self.cfg.low_speed_kmh,
        }
    }

    pub fn simulation(&self, seed: u64) -> Result<Simulation> {
        Simulation::new(self.net.clone(), self.episode_config(), seed)
    }

    pub fn net_shape(&self) -> Result<NetShape> {
        NetShape::new(
            self.net.intersections(),
            self.net.lanes_per_slice(),
            self.net.cells(),
            PHASES,
        )
        .map(|sh| sh.with_conv(self.cfg.conv))
    }

    pub fn init_policy(&self) -> Result<PolicyNet<f32>> {
        Ok(PolicyNet::init(self.net_shape()?, &mut rng_for(self.cfg.seed, stream::INIT, 0)))
    }

    /// Environment seed of evaluation episode `k`.
    pub fn eval_seed(&self, k: usize) -> u64 {
        derive_seed(self.cfg.seed, stream::EVAL, k as u64)
    }
}

/// Greedy policy: switch where the network's probability exceeds 0.5.
pub struct PolicyController {
    pub net: PolicyNet<f32>,
    pub label: String,
}

impl Controller for PolicyController {
    fn decide(&mut self, sim: &Simulation, _report: &StepReport) -> Result<Vec<bool>> {
        let out = self.net.forward(&encode_state(sim), &encode_phase(sim))?;
        Ok(out.probs.iter().map(|&p| p > 0.5).collect())
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// CSV file whose first line is a `# gsrl <kind> v<N>` comment.
pub struct CsvLog {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvLog {
    pub fn create(path: &Path, kind: &str, header: &[&str]) -> Result<Self> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "# gsrl {kind} v{CSV_VERSION}")?;
        let mut inner = csv::Writer::from_writer(f);
        inner.write_record(header).map_err(csv_err)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Reads the data rows of a file written by [`CsvLog`].
pub fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    rdr.records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()).map_err(csv_err))
        .collect()
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_manifest(out: &Path, command: &str, controller: Option<ControllerKind>, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
    let mut s = format!(
        "# gsrl manifest v{CSV_VERSION}\n# code_version = {}\n# command = {command}\n",
        env!("CARGO_PKG_VERSION")
    );
    if let Some(c) = controller {
        s.push_str(&format!("# controller = {c}\n"));
    }
    for (k, v) in extra {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s.push_str(&cfg.render());
    fs::write(out.join(MANIFEST_FILE), s)?;
    Ok(())
}

/// Runs one full episode under `ctrl`, optionally logging every step.
pub fn run_episode(sim: &mut Simulation, ctrl: &mut dyn Controller, mut steps: Option<&mut CsvLog>) -> Result<MetricRow> {
    let mut report = sim.observe();
    while !sim.done() {
        let action = ctrl.decide(sim, &report)?;
        report = sim.step(&action)?;
        if let Some(log) = steps.as_deref_mut() {
            let s = sim.state();
            let mut row = vec![
                report.step.to_string(),
                f(report.queue_m),
                report.total_low_speed().to_string(),
                s.inserted.to_string(),
                s.exited.to_string(),
            ];
            row.extend(sim.phases().iter().map(|p| match p.green() {
                Some(g) => g.to_string(),
                None => "amber".to_string(),
            }));
            log.row(row)?;
        }
    }
    Ok(sim.metrics_snapshot())
}

fn step_log(out: &Path, name: &str, intersections: usize) -> Result<CsvLog> {
    let mut header = vec!["step".to_string(), "queue_m".into(), "low_speed".into(), "inserted".into(), "exited".into()];
    header.extend((0..intersections).map(|i| format!("phase_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    CsvLog::create(&out.join(name), "steps", &header)
}

/// Mean queue of the greedy policy over the first `train.probe_episodes`
/// evaluation seeds; `None` when probing is off.
pub fn probe_queue(exp: &Experiment, net: &PolicyNet<f32>) -> Result<Option<f64>> {
    let n = exp.cfg.probe_episodes;
    if n == 0 {
        return Ok(None);
    }
    let mut ctrl = PolicyController {
        net: net.clone(),
        label: "probe".into(),
    };
    Ok(Some(evaluate_controller(exp, &mut ctrl, n, None)?.queue.mean))
}

#[derive(Debug, Clone)]
pub struct ImitationOutcome {
    pub net: PolicyNet<f32>,
    pub rounds: Vec<RoundReport>,
    /// Greedy-policy queue after each round, when probing is enabled.
    pub probes: Vec<Option<f64>>,
    /// Whether a round beat the accuracy threshold.
    pub reached: bool,
}

/// Stage 1: DAgger rounds until the thresholded accuracy exceeds xi or the
/// round limit is hit. Writes `imitation.csv` when `out` is given.
pub fn run_imitation(exp: &Experiment, out: Option<&Path>) -> Result<ImitationOutcome> {
    let cfg = &exp.cfg;
    let xi = cfg.resolved_xi();
    let mut net = exp.init_policy()?;
    let mut pool = TrajectoryPool::new(cfg.imitation.pool_capacity);
    let mut rng = rng_for(cfg.seed, stream::IMITATION, 0);
    let mut log = match out {
        Some(dir) => Some(CsvLog::create(
            &dir.join(IMITATION_CSV),
            "imitation",
            &["round", "imitation_loss", "acc", "sampled_acc", "mean_queue_m", "awt_s", "probe_queue_m"],
        )?),
        None => None,
    };
    let mut rounds = Vec::new();
    let mut probes = Vec::new();
    let mut reached = false;
    for round in 0..cfg.imitation.max_rounds {
        let mut sim = exp.simulation(derive_seed(cfg.seed, stream::ENV_IMITATION, round as u64))?;
        let rep = dagger_round(&mut sim, &mut net, &mut pool, &cfg.rule, &cfg.imitation, Actor::Learner, &mut rng)?;
        let probe = probe_queue(exp, &net)?;
        if let Some(log) = log.as_mut() {
            log.row([
                (round + 1).to_string(),
                f(rep.loss),
                f(rep.acc),
                f(rep.sampled_acc),
                f(rep.metrics.mean_queue_m),
                f(rep.metrics.awt_s),
                probe.map(f).unwrap_or_default(),
            ])?;
        }
        probes.push(probe);
        let done = rep.acc > xi;
        rounds.push(rep);
        if done {
            reached = true;
            break;
        }
    }
    Ok(ImitationOutcome {
        net,
        rounds,
        probes,
        reached,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: PolicyNet<f32>,
    /// Imitation rounds preceding the first RL episode.
    pub stage_boundary: usize,
    pub imitation: Vec<RoundReport>,
    pub rl: Vec<RlEpisodeReport>,
    /// Greedy-policy queue after every training episode, imitation rounds
    /// first; `None` when probing is disabled.
    pub probes: Vec<Option<f64>>,
}

impl TrainOutcome {
    /// Mean queue of every training episode in order, imitation rounds first.
    pub fn queue_curve(&self) -> Vec<f64> {
        self.imitation
            .iter()
            .map(|r| r.metrics.mean_queue_m)
            .chain(self.rl.iter().map(|r| r.metrics.mean_queue_m))
            .collect()
    }
}

/// Where stage 2 starts from.
pub enum Start {
    Fresh,
    Imitate,
    /// Checkpoint written by an earlier `imitate` run; its directory may hold
    /// the matching `imitation.csv`.
    Resume(PathBuf),
}

fn resolve_checkpoint(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

/// `imitate`: stage 1 only.
pub fn imitate(exp: &Experiment, out: &Path) -> Result<ImitationOutcome> {
    fs::create_dir_all(out)?;
    let outcome = run_imitation(exp, Some(out))?;
    save_checkpoint(&outcome.net, &out.join(CHECKPOINT_FILE))?;
    write_manifest(
        out,
        "imitate",
        Some(ControllerKind::IlOnly),
        &exp.cfg,
        &[
            ("stage_boundary", outcome.rounds.len().to_string()),
            ("threshold_reached", outcome.reached.to_string()),
        ],
    )?;
    Ok(outcome)
}

/// `train`: co-training (dri), RL from scratch (dr) or imitation only (il-only).
pub fn train(exp: &Experiment, kind: ControllerKind, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    let cfg = &exp.cfg;
    fs::create_dir_all(out)?;
    let start = match (kind, resume) {
        (ControllerKind::Dri, Some(p)) => Start::Resume(p.to_path_buf()),
        (ControllerKind::Dri, None) | (ControllerKind::IlOnly, None) => Start::Imitate,
        (ControllerKind::Dr, None) => Start::Fresh,
        (ControllerKind::Dr | ControllerKind::IlOnly, Some(_)) => {
            return Err(config_err("--resume only applies to the dri controller"))
        }
        (other, _) => return Err(config_err(format!("controller '{other}' is not trainable"))),
    };
    let (mut net, imitation, mut probes) = match start {
        Start::Fresh => (exp.init_policy()?, Vec::new(), Vec::new()),
        Start::Imitate => {
            let o = run_imitation(exp, Some(out))?;
            (o.net, o.rounds, o.probes)
        }
        Start::Resume(path) => {
            let ckpt = resolve_checkpoint(&path);
            if !ckpt.exists() {
                return Err(config_err(format!("checkpoint {} not found", ckpt.display())));
            }
            let net = load_checkpoint(&ckpt)?;
            if net.shape() != exp.net_shape()? {
                return Err(config_err("checkpoint shape does not match the configured network"));
            }
            let prior = ckpt.parent().map(|d| d.join(IMITATION_CSV));
            let mut rounds = Vec::new();
            let mut probes = Vec::new();
            if let Some(csv) = prior.filter(|p| p.exists()) {
                if csv != out.join(IMITATION_CSV) {
                    fs::copy(&csv, out.join(IMITATION_CSV))?;
                }
                for row in read_csv(&csv)? {
                    let (round, probe) = round_from_row(&row, exp)?;
                    rounds.push(round);
                    probes.push(probe);
                }
            }
            (net, rounds, probes)
        }
    };
    let boundary = imitation.len();
    save_checkpoint(&net, &out.join(CHECKPOINT_FILE))?;

    let episodes = if kind == ControllerKind::IlOnly {
        0
    } else {
        cfg.resolved_rl_episodes()
    };
    let mut rl = Vec::with_capacity(episodes);
    if episodes > 0 {
        let mut log = CsvLog::create(
            &out.join(RL_CSV),
            "rl",
            &["episode", "global_episode", "mean_queue_m", "cumulative_reward", "entropy", "value_loss", "acc_vs_expert", "awt_s", "probe_queue_m"],
        )?;
        let mut opt = Adam::new(cfg.rl.lr);
        for e in 0..episodes {
            let mut sim = exp.simulation(derive_seed(cfg.seed, stream::ENV_RL, e as u64))?;
            let mut rng = rng_for(cfg.seed, stream::RL, e as u64);
            let rep = rl_episode(&mut sim, &mut net, &mut opt, &cfg.rl, &cfg.rule, &mut rng)?;
            let probe = probe_queue(exp, &net)?;
            log.row([
                (e + 1).to_string(),
                (boundary + e + 1).to_string(),
                f(rep.metrics.mean_queue_m),
                f(rep.cumulative_reward),
                f(rep.mean_entropy),
                f(rep.mean_value_loss),
                f(rep.acc_vs_expert),
                f(rep.metrics.awt_s),
                probe.map(f).unwrap_or_default(),
            ])?;
            probes.push(probe);
            save_checkpoint(&net, &out.join(CHECKPOINT_FILE))?;
            rl.push(rep);
        }
    }
    write_manifest(
        out,
        "train",
        Some(kind),
        cfg,
        &[("stage_boundary", boundary.to_string()), ("rl_episodes", episodes.to_string())],
    )?;
    Ok(TrainOutcome {
        net,
        stage_boundary: boundary,
        imitation,
        rl,
        probes,
    })
}

/// Rebuilds the logged part of a round report from an `imitation.csv` row.
fn round_from_row(row: &[String], exp: &Experiment) -> Result<(RoundReport, Option<f64>)> {
    let num = |i: usize| -> Result<f64> {
        row.get(i)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| config_err("malformed imitation.csv"))
    };
    let mut metrics = exp.simulation(0)?.metrics_snapshot();
    metrics.mean_queue_m = num(4)?;
    metrics.awt_s = num(5)?;
    let probe = row.get(6).and_then(|v| v.parse().ok());
    let round = RoundReport {
        loss: num(1)?,
        acc: num(2)?,
        sampled_acc: num(3)?,
        metrics,
    };
    Ok((round, probe))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, sd }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub controller: String,
    pub flow: String,
    pub episodes: Vec<MetricRow>,
    pub queue: Stat,
    pub awt: Stat,
    pub afc: Stat,
    /// Per phase, averaged over intersections that completed that phase.
    pub phase_durations: [Stat; PHASES],
}

/// Mean green duration of each phase over the intersections where it
/// completed at least once.
pub fn mean_phase_durations(m: &MetricRow) -> [f64; PHASES] {
    let mut out = [0.0; PHASES];
    for (p, slot) in out.iter_mut().enumerate() {
        let seen: Vec<f64> = m.phase_durations.iter().map(|d| d[p]).filter(|&d| d > 0.0).collect();
        *slot = Stat::of(&seen).mean;
    }
    out
}

impl EvalReport {
    fn from_rows(controller: String, flow: String, episodes: Vec<MetricRow>) -> Self {
        let col = |g: &dyn Fn(&MetricRow) -> f64| Stat::of(&episodes.iter().map(g).collect::<Vec<_>>());
        let durations: Vec<[f64; PHASES]> = episodes.iter().map(mean_phase_durations).collect();
        let mut phase_durations = [Stat::default(); PHASES];
        for (p, s) in phase_durations.iter_mut().enumerate() {
            *s = Stat::of(&durations.iter().map(|d| d[p]).collect::<Vec<_>>());
        }
        Self {
            queue: col(&|m| m.mean_queue_m),
            awt: col(&|m| m.awt_s),
            afc: col(&|m| m.afc),
            phase_durations,
            controller,
            flow,
            episodes,
        }
    }

    /// Aligned text table with one summary row.
    pub fn table(&self) -> String {
        let mut header = vec![
            "controller".to_string(),
            "flow".into(),
            "QL (m)".into(),
            "AWT (s)".into(),
            "AFC".into(),
        ];
        header.extend((0..PHASES).map(|p| format!("phase {p} (s)")));
        let mut row = vec![
            self.controller.clone(),
            self.flow.clone(),
            self.queue.to_string(),
            self.awt.to_string(),
            self.afc.to_string(),
        ];
        row.extend(self.phase_durations.iter().map(|s| s.to_string()));
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        format!("{}\n{}\n", line(&header), line(&row))
    }
}

/// Resolves the controller for evaluation.
pub fn make_controller(exp: &Experiment, kind: ControllerKind, checkpoint: Option<&Path>) -> Result<Box<dyn Controller>> {
    Ok(match kind {
        ControllerKind::Fixed20 => Box::new(FixedTime::new(20.0)?),
        ControllerKind::Fixed40 => Box::new(FixedTime::new(40.0)?),
        ControllerKind::Rule => Box::new(RuleController { params: exp.cfg.rule }),
        learned => {
            let path = checkpoint
                .map(resolve_checkpoint)
                .ok_or_else(|| config_err(format!("controller '{learned}' needs --checkpoint")))?;
            if !path.exists() {
                return Err(config_err(format!("checkpoint {} not found", path.display())));
            }
            let net = load_checkpoint(&path)?;
            if net.shape() != exp.net_shape()? {
                return Err(config_err("checkpoint shape does not match the configured network"));
            }
            Box::new(PolicyController {
                net,
                label: learned.to_string(),
            })
        }
    })
}

/// Runs `episodes` evaluation episodes with seeds from the evaluation stream.
pub fn evaluate_controller(exp: &Experiment, ctrl: &mut dyn Controller, episodes: usize, mut steps: Option<&mut CsvLog>) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut sim = exp.simulation(exp.eval_seed(k))?;
        rows.push(run_episode(&mut sim, ctrl, steps.as_deref_mut())?);
    }
    Ok(EvalReport::from_rows(ctrl.name(), exp.cfg.flow.to_string(), rows))
}

/// `evaluate` and `simulate`: per-episode CSV, summary CSV and text table.
pub fn evaluate(exp: &Experiment, kind: ControllerKind, checkpoint: Option<&Path>, out: &Path, command: &str) -> Result<EvalReport> {
    fs::create_dir_all(out)?;
    let mut ctrl = make_controller(exp, kind, checkpoint)?;
    let mut steps = if exp.cfg.step_log {
        Some(step_log(out, &format!("{command}_steps.csv"), exp.network().intersections())?)
    } else {
        None
    };
    let report = evaluate_controller(exp, ctrl.as_mut(), exp.cfg.eval_episodes, steps.as_mut())?;

    let mut per_episode = CsvLog::create(
        &out.join(format!("{command}.csv")),
        command,
        &["episode", "env_seed", "mean_queue_m", "awt_s", "afc", "phase0_s", "phase1_s", "phase2_s", "phase3_s", "inserted", "exited"],
    )?;
    for (k, m) in report.episodes.iter().enumerate() {
        let d = mean_phase_durations(m);
        let mut row = vec![(k + 1).to_string(), exp.eval_seed(k).to_string(), f(m.mean_queue_m), f(m.awt_s), f(m.afc)];
        row.extend(d.iter().map(|&v| f(v)));
        row.push(m.inserted.to_string());
        row.push(m.exited.to_string());
        per_episode.row(row)?;
    }
    let mut summary = CsvLog::create(
        &out.join(format!("{command}_summary.csv")),
        "summary",
        &[
            "controller", "flow", "episodes", "queue_mean", "queue_sd", "awt_mean", "awt_sd", "afc_mean", "afc_sd",
            "phase0_mean", "phase1_mean", "phase2_mean", "phase3_mean",
        ],
    )?;
    let mut row = vec![
        report.controller.clone(),
        report.flow.clone(),
        report.episodes.len().to_string(),
        f(report.queue.mean),
        f(report.queue.sd),
        f(report.awt.mean),
        f(report.awt.sd),
        f(report.afc.mean),
        f(report.afc.sd),
    ];
    row.extend(report.phase_durations.iter().map(|s| f(s.mean)));
    summary.row(row)?;
    fs::write(out.join(format!("{command}.txt")), report.table())?;
    write_manifest(out, command, Some(kind), &exp.cfg, &[])?;
    Ok(report)
}

/// Human-readable summary of a checkpoint file.
pub fn describe_checkpoint(path: &Path) -> Result<String> {
    let net = load_checkpoint(&resolve_checkpoint(path))?;
    let sh = net.shape();
    let mut s = format!(
        "input: I={} J={} K={} M={}\nconv: {}\nparameters: {}\n",
        sh.intersections,
        sh.lanes,
        sh.cells,
        sh.phases,
        sh.conv,
        net.params.scalar_count()
    );
    for p in net.params.iter() {
        let norm = p.value.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        s.push_str(&format!("  {:<14} {:?}  l2={:.6}\n", p.name, p.dims, norm));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_names_round_trip() {
        for c in ControllerKind::ALL {
            assert_eq!(c.as_str().parse::<ControllerKind>().unwrap(), c);
        }
        assert!("fixed30".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn seed_streams_differ() {
        let a = derive_seed(7, stream::ENV_RL, 0);
        assert_ne!(a, derive_seed(7, stream::ENV_IMITATION, 0));
        assert_ne!(a, derive_seed(7, stream::ENV_RL, 1));
        assert_ne!(a, derive_seed(8, stream::ENV_RL, 0));
        assert_eq!(a, derive_seed(7, stream::ENV_RL, 0));
    }

    #[test]
    fn stat_mean_and_sd() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 1.0).abs() < 1e-12);
        assert_eq!(Stat::of(&[4.0]).sd, 0.0);
    }
}
