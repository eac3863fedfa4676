//! Offline subcommands. Every run writes its effective `config.json` into the
//! output directory before anything else.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mazeslam_core::eval::{pose_errors, EvalError};
use mazeslam_core::grid::rasterize_world;
use mazeslam_core::log::{ground_truth, read_log_file, read_trajectory_file, write_log, write_trajectory};
use mazeslam_core::nav::{navigate as drive_to, PlanError, SimNav};
use mazeslam_core::pipeline::MappingError;
use mazeslam_core::sim::{replay_commands, run_script};
use mazeslam_core::{
    ate_rmse, heading_rmse, load_map, map_compare, run_localization, run_mapping, save_map, CommandScript, Goal,
    OccupancyGrid, OdomMode, Point2, Record, RunConfig, Simulator, Stamped, WorldModel,
};
use serde_json::json;

use crate::{input, runtime, usage, Failure, Global};

type Result<T> = std::result::Result<T, Failure>;

/// Loads the config, applies command-line overrides and records it in the
/// output directory.
pub fn setup(g: &Global, world: Option<PathBuf>, mode: Option<OdomMode>) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p).map_err(input)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if world.is_some() {
        cfg.world = world;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    fs::create_dir_all(&g.out)
        .with_context(|| format!("creating {}", g.out.display()))
        .map_err(runtime)?;
    write_text(&g.out.join("config.json"), &cfg.to_json())?;
    Ok(cfg)
}

pub fn load_world(cfg: &RunConfig) -> Result<WorldModel> {
    let path = cfg.world.as_ref().ok_or_else(|| usage("no world given (--world or config \"world\")"))?;
    WorldModel::load(path)
        .with_context(|| format!("world {}", path.display()))
        .map_err(input)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let run = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        f(&mut w)?;
        w.flush()
    };
    run().with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    write_with(path, |w| write_log(w, records))
}

fn read_log(path: &Path) -> Result<Vec<Record>> {
    read_log_file(path)
        .with_context(|| format!("log {}", path.display()))
        .map_err(input)
}

/// Ground truth from a trajectory CSV or the `gt` records of a sensor log.
fn read_truth(path: &Path) -> Result<Vec<Stamped>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(ground_truth(&read_log(path)?))
    } else {
        read_trajectory_file(path)
            .with_context(|| format!("trajectory {}", path.display()))
            .map_err(input)
    }
}

fn read_map(path: &Path) -> Result<OccupancyGrid> {
    load_map(path)
        .with_context(|| format!("map {}", path.display()))
        .map_err(input)
}

pub fn simulate(g: &Global, world: Option<PathBuf>, script: Option<PathBuf>, from_log: Option<PathBuf>) -> Result<()> {
    let cfg = setup(g, world, None)?;
    let world = load_world(&cfg)?;
    let mut sim = Simulator::new(world, cfg.sim, cfg.seed).map_err(|e| input(anyhow!(e)))?;
    let (records, missed, collisions) = match (script, from_log) {
        (Some(p), None) => {
            let script = CommandScript::load(&p).map_err(|e| input(anyhow!(e)))?;
            let run = run_script(&mut sim, &script, &cfg.driver);
            (run.records, run.missed, run.collisions)
        }
        (None, Some(p)) => {
            let log = read_log(&p)?;
            (replay_commands(&mut sim, &log), 0, 0)
        }
        _ => return Err(usage("simulate needs --script or --teleop-from-log")),
    };
    write_records(&g.out.join("log.jsonl"), &records)?;
    write_with(&g.out.join("truth.csv"), |w| write_trajectory(w, &ground_truth(&records)))?;
    let st = sim.state();
    println!(
        "simulated {:.2} s ({} steps), {} records, final pose ({:.3}, {:.3}, {:.3}), missed waypoints {missed}, collision steps {collisions}",
        st.clock, st.step_index, records.len(), st.true_pose.x, st.true_pose.y, st.true_pose.theta()
    );
    Ok(())
}

pub fn slam(g: &Global, log: &Path, mode: Option<OdomMode>) -> Result<()> {
    let cfg = setup(g, None, mode)?;
    let records = read_log(log)?;
    let run = run_mapping(&records, cfg.mode, &cfg.fusion, &cfg.slam, cfg.seed).map_err(|e| match e {
        MappingError::NoScans => input(anyhow!("log {}: {e}", log.display())),
        MappingError::Grid(_) => runtime(e),
    })?;
    save_map(&run.map, g.out.join("map")).map_err(runtime)?;
    write_with(&g.out.join("trajectory.csv"), |w| write_trajectory(w, &run.trajectory))?;
    print!(
        "mode {}: {} scans, {} updates, {} resamples",
        cfg.mode, run.frames, run.updates, run.resamples
    );
    let truth = ground_truth(&records);
    if let Ok(ate) = ate_rmse(&run.trajectory, &truth, cfg.eval.max_dt) {
        print!(", ate {:.4} m", ate.rmse_m);
    }
    println!();
    Ok(())
}

pub fn localize(g: &Global, map: Option<PathBuf>, world: Option<PathBuf>, log: &Path, mode: Option<OdomMode>) -> Result<()> {
    let from_world = world.is_some();
    let cfg = setup(g, world, mode)?;
    let grid = match &map {
        Some(p) if !from_world => read_map(p)?,
        _ => rasterize_world(&load_world(&cfg)?, cfg.slam.resolution),
    };
    let records = read_log(log)?;
    let run = run_localization(&records, grid, cfg.mode, &cfg.fusion, &cfg.mcl, cfg.seed).map_err(input)?;
    if run.estimates.is_empty() {
        return Err(input(anyhow!("log {}: log contains no scans", log.display())));
    }
    let traj = run.trajectory();
    write_with(&g.out.join("estimate.csv"), |w| write_trajectory(w, &traj))?;
    let truth = ground_truth(&records);
    print!("{} updates, {} resets", run.estimates.len(), run.resets);
    if truth.is_empty() {
        println!(", no ground truth in log");
        return Ok(());
    }
    let errs = pose_errors(&traj, &truth, cfg.eval.max_dt).map_err(input)?;
    write_errors(&g.out.join("error.csv"), &errs)?;
    if let Some(last) = errs.last() {
        println!(
            ", final error {:.4} m / {:.2} deg",
            last.position,
            last.heading.abs().to_degrees()
        );
    } else {
        println!();
    }
    Ok(())
}

fn write_errors(path: &Path, errs: &[mazeslam_core::eval::PoseError]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t,pos_err_m,heading_err_rad")?;
        for e in errs {
            writeln!(w, "{},{},{}", e.t, e.position, e.heading)?;
        }
        Ok(())
    })
}

pub fn navigate(
    g: &Global,
    world: Option<PathBuf>,
    goal: (f64, f64),
    heading: Option<f64>,
    map: Option<PathBuf>,
) -> Result<()> {
    let cfg = setup(g, world, None)?;
    let world = load_world(&cfg)?;
    let grid = match &map {
        Some(p) => read_map(p)?,
        None => rasterize_world(&world, cfg.slam.resolution),
    };
    let sim = Simulator::new(world, cfg.sim, cfg.seed).map_err(|e| input(anyhow!(e)))?;
    let mut src = SimNav::new(sim);
    let goal = Goal {
        position: Point2::new(goal.0, goal.1),
        heading,
    };
    let report = drive_to(&mut src, &grid, goal, &cfg.nav).map_err(|e| match e {
        PlanError::GoalOutside | PlanError::GoalBlocked => usage(format!("goal: {e}")),
        _ => runtime(e),
    })?;
    write_with(&g.out.join("trajectory.csv"), |w| write_trajectory(w, &report.trajectory))?;
    write_with(&g.out.join("plan.csv"), |w| {
        writeln!(w, "x,y")?;
        for p in report.plan.iter().flat_map(|p| &p.waypoints) {
            writeln!(w, "{},{}", p.x, p.y)?;
        }
        Ok(())
    })?;
    write_records(&g.out.join("log.jsonl"), &src.records)?;
    let plan_length = report.plan.as_ref().map(|p| p.total_cost);
    let summary = json!({
        "outcome": report.outcome.as_str(),
        "goal": [goal.position.x, goal.position.y],
        "heading": heading,
        "plan_length_m": plan_length,
        "traveled_m": report.traveled,
        "replans": report.replans,
        "duration_s": report.trajectory.last().map(|s| s.t),
    });
    write_text(&g.out.join("nav.json"), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    println!(
        "{}: traveled {:.3} m, plan {}, {} replans",
        report.outcome.as_str(),
        report.traveled,
        plan_length.map_or("none".to_string(), |l| format!("{l:.3} m")),
        report.replans
    );
    match report.outcome {
        mazeslam_core::NavOutcome::Reached => Ok(()),
        o => Err(runtime(anyhow!("navigation ended with {}", o.as_str()))),
    }
}

pub fn eval(
    g: &Global,
    traj: Option<PathBuf>,
    truth: Option<PathBuf>,
    map: Option<PathBuf>,
    truth_map: Option<PathBuf>,
    world: Option<PathBuf>,
) -> Result<()> {
    if traj.is_none() && map.is_none() {
        return Err(usage("eval needs --traj/--truth or --map"));
    }
    if map.is_some() && truth_map.is_none() && world.is_none() {
        return Err(usage("--map needs --truth-map or --world"));
    }
    let cfg = setup(g, world, None)?;
    let mut report = String::new();
    let mut doc = serde_json::Map::new();
    if let (Some(traj), Some(truth)) = (&traj, &truth) {
        let est = read_truth(traj)?;
        let gt = read_truth(truth)?;
        let max_dt = cfg.eval.max_dt;
        let bad_pairing = |e: EvalError| input(anyhow!("{} vs {}: {e}", traj.display(), truth.display()));
        let ate = ate_rmse(&est, &gt, max_dt).map_err(bad_pairing)?;
        let hrmse = heading_rmse(&est, &gt, max_dt).map_err(bad_pairing)?;
        let errs = pose_errors(&est, &gt, max_dt).map_err(bad_pairing)?;
        write_errors(&g.out.join("errors.csv"), &errs)?;
        report += &format!(
            "trajectory {}\n  pairs {} (unpaired {})\n  ate rmse {:.6} m\n  ate mean {:.6} m\n  ate max {:.6} m\n  heading rmse {:.6} rad\n",
            traj.display(),
            ate.n_pairs,
            ate.n_unpaired,
            ate.rmse_m,
            ate.mean_m,
            ate.max_m,
            hrmse
        );
        doc.insert("ate".into(), serde_json::to_value(ate).expect("json"));
        doc.insert("heading_rmse_rad".into(), json!(hrmse));
    }
    if let Some(map) = &map {
        let est = read_map(map)?;
        let reference = match &truth_map {
            Some(p) => read_map(p)?,
            None => rasterize_world(&load_world(&cfg)?, est.resolution()),
        };
        let score = map_compare(&est, &reference).map_err(|e| input(anyhow!("map {}: {e}", map.display())))?;
        report += &format!(
            "map {}\n  occupied iou {:.4}\n  occupied precision {:.4}\n  occupied recall {:.4}\n  agreement {:.4}\n  compared cells {}\n",
            map.display(),
            score.occ_iou,
            score.occ_precision,
            score.occ_recall,
            score.agreement,
            score.compared_cells
        );
        doc.insert("map".into(), serde_json::to_value(score).expect("json"));
    }
    write_text(&g.out.join("report.txt"), &report)?;
    write_text(
        &g.out.join("eval.json"),
        &(serde_json::to_string_pretty(&doc).expect("json") + "\n"),
    )?;
    print!("{report}");
    Ok(())
}
