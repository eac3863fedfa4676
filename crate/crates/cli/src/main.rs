mod commands;
mod protocol;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mazeslam_core::OdomMode;

#[derive(Debug, Parser)]
#[command(name = "mazeslam", version, about = "2-D maze simulator, particle-filter SLAM, localization and navigation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drive the simulator with a command script or the commands of a log.
    Simulate {
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, conflicts_with = "teleop_from_log")]
        script: Option<PathBuf>,
        /// Re-issue the `cmd` records of an earlier log.
        #[arg(long)]
        teleop_from_log: Option<PathBuf>,
    },
    /// Build a map and trajectory from a sensor log.
    Slam {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        mode: Option<OdomMode>,
    },
    /// Track a sensor log against a known map.
    Localize {
        /// Map .pgm or .yaml.
        #[arg(long, required_unless_present = "world", conflicts_with = "world")]
        map: Option<PathBuf>,
        /// Localize against the rasterized world instead of a map file.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        mode: Option<OdomMode>,
    },
    /// Plan and drive to a goal in the simulator.
    Navigate {
        #[arg(long)]
        world: Option<PathBuf>,
        /// Goal position as x,y in meters.
        #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
        goal: (f64, f64),
        /// Final heading in radians.
        #[arg(long, allow_hyphen_values = true)]
        heading: Option<f64>,
        /// Plan on this map instead of the rasterized world.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Score trajectories and maps against ground truth.
    Eval {
        /// Estimated trajectory CSV.
        #[arg(long, requires = "truth")]
        traj: Option<PathBuf>,
        /// Ground truth as trajectory CSV or sensor log.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, conflicts_with = "world")]
        truth_map: Option<PathBuf>,
        /// Rasterize this world as the reference map.
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Run a live session over WebSocket.
    Serve {
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        mode: Option<OdomMode>,
        /// Stop after this many simulator ticks.
        #[arg(long)]
        ticks: Option<u64>,
    },
}

fn parse_xy(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y: {e}"))?;
    if x.is_finite() && y.is_finite() {
        Ok((x, y))
    } else {
        Err("coordinates must be finite".into())
    }
}

/// Exit status of a failed command.
#[derive(Debug)]
pub enum Failure {
    /// Arguments that parse but cannot be used together.
    Usage(anyhow::Error),
    /// A file given on the command line could not be used.
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

pub fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

pub fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let g = &cli.global;
    let result = match cli.cmd {
        Command::Simulate {
            world,
            script,
            teleop_from_log,
        } => commands::simulate(g, world, script, teleop_from_log),
        Command::Slam { log, mode } => commands::slam(g, &log, mode),
        Command::Localize { map, world, log, mode } => commands::localize(g, map, world, &log, mode),
        Command::Navigate {
            world,
            goal,
            heading,
            map,
        } => commands::navigate(g, world, goal, heading, map),
        Command::Eval {
            traj,
            truth,
            map,
            truth_map,
            world,
        } => commands::eval(g, traj, truth, map, truth_map, world),
        Command::Serve { world, port, mode, ticks } => serve::run(g, world, port, mode, ticks),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Input(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
