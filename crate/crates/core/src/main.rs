use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gsrl::config::{parse_grid, RunConfig};
use gsrl::harness::{self, ControllerKind, Experiment};
use gsrl::Error;

#[derive(Parser)]
#[command(name = "gsrl", version, about = "Grid traffic-signal control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a baseline controller (fixed20, fixed40, rule).
    Simulate(Common),
    /// Imitation pre-training only.
    Imitate(Common),
    /// Co-training (dri), RL from scratch (dr) or imitation only (il-only).
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint or output directory of an earlier `imitate` run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a baseline or a trained checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the shape and parameter arrays of a checkpoint.
    InspectCheckpoint {
        path: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    flow: Option<String>,
    /// Grid size as RxC, e.g. 2x2.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    controller: Option<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// RL episodes for `train`, evaluation episodes otherwise.
    #[arg(long)]
    episodes: Option<usize>,
}

enum EpisodeUse {
    Rl,
    Eval,
    Ignored,
}

impl Common {
    fn experiment(&self, episodes: EpisodeUse) -> gsrl::Result<Experiment> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(g) = &self.grid {
            let (r, c) = parse_grid(g)?;
            cfg.network.rows = r;
            cfg.network.cols = c;
        }
        if let Some(f) = &self.flow {
            cfg.flow = f.parse()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        match (episodes, self.episodes) {
            (EpisodeUse::Rl, Some(n)) => cfg.rl_episodes = Some(n),
            (EpisodeUse::Eval, Some(n)) => cfg.eval_episodes = n,
            _ => {}
        }
        Experiment::new(cfg)
    }

    fn controller(&self, default: ControllerKind) -> gsrl::Result<ControllerKind> {
        self.controller.as_deref().map_or(Ok(default), str::parse)
    }
}

fn run(cli: Cli) -> gsrl::Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let kind = c.controller(ControllerKind::Rule)?;
            if kind.is_learned() {
                return Err(Error::Config(format!("simulate runs baselines only, got '{kind}'")));
            }
            let exp = c.experiment(EpisodeUse::Eval)?;
            let report = harness::evaluate(&exp, kind, None, &c.out, "simulate")?;
            print!("{}", report.table());
        }
        Command::Imitate(c) => {
            if let Some(k) = c.controller.as_deref() {
                if k.parse::<ControllerKind>()? != ControllerKind::IlOnly {
                    return Err(Error::Config("imitate trains the il-only controller".into()));
                }
            }
            let exp = c.experiment(EpisodeUse::Ignored)?;
            let o = harness::imitate(&exp, &c.out)?;
            let last = o.rounds.last().map_or(0.0, |r| r.acc);
            println!(
                "imitation: {} rounds, final acc {last:.4}, threshold {}",
                o.rounds.len(),
                if o.reached { "reached" } else { "not reached" }
            );
        }
        Command::Train { common, resume } => {
            let kind = common.controller(ControllerKind::Dri)?;
            let exp = common.experiment(EpisodeUse::Rl)?;
            let o = harness::train(&exp, kind, &common.out, resume.as_deref())?;
            println!(
                "trained {kind}: {} imitation rounds, {} rl episodes, checkpoint in {}",
                o.stage_boundary,
                o.rl.len(),
                common.out.display()
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let kind = common.controller(ControllerKind::Rule)?;
            let exp = common.experiment(EpisodeUse::Eval)?;
            let report = harness::evaluate(&exp, kind, checkpoint.as_deref(), &common.out, "evaluate")?;
            print!("{}", report.table());
        }
        Command::InspectCheckpoint { path } => {
            if !path.exists() {
                return Err(Error::Config(format!("{} not found", path.display())));
            }
            print!("{}", harness::describe_checkpoint(&path)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
