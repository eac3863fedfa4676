mod common;

use common::*;

const SHORT: &str = r#"{"segments": [{"v": 0.3, "w": 0.0, "duration": 6.0}, {"v": 0.0, "w": 1.0, "duration": 3.2}, {"v": 0.3, "w": 0.0, "duration": 3.0}]}"#;
const MAZE_SHORT: &str = r#"{"segments": [{"waypoints": [[0.425, 1.225], [1.225, 1.225], [1.225, 2.825], [2.825, 2.825]]}]}"#;

fn simulate_corridor(dir: &std::path::Path, seed: &str) -> std::path::PathBuf {
    let script = write(&dir.join("script.json"), SHORT);
    let out = dir.join("sim");
    ok(&["simulate", "--world", s(&corridor()), "--script", s(&script), "--seed", seed, "--out", s(&out)]);
    out
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["slam", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["slam"]).status.code(), Some(1));
    assert_eq!(run(&["slam", "--log", "x", "--mode", "wheels"]).status.code(), Some(1));
    assert_eq!(run(&["navigate", "--goal", "1"]).status.code(), Some(1));
    // Parses, but no world is known.
    let out = dir.path().join("o");
    assert_eq!(run(&["navigate", "--goal", "1,1", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--world", s(&maze()), "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--out", s(&out)]).status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_two_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let log = write(
        &dir.path().join("bad.jsonl"),
        "{\"t\": 0.0, \"type\": \"imu\", \"gyro_z\": 0.0}\n{\"t\": 0.1, \"type\": \"sonar\"}\n",
    );
    let r = run(&["slam", "--log", s(&log), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&r.stderr));

    let back = write(
        &dir.path().join("back.jsonl"),
        "{\"t\": 1.0, \"type\": \"imu\", \"gyro_z\": 0.0}\n{\"t\": 0.5, \"type\": \"imu\", \"gyro_z\": 0.0}\n",
    );
    let r = run(&["slam", "--log", s(&back), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"));

    let no_scans = write(&dir.path().join("imu.jsonl"), "{\"t\": 0.0, \"type\": \"imu\", \"gyro_z\": 0.0}\n");
    assert_eq!(run(&["slam", "--log", s(&no_scans), "--out", s(&out)]).status.code(), Some(2));

    let cfg = write(&dir.path().join("cfg.json"), "{\n  \"seed\": 1,\n  \"slam\": {\"particle\": 3}\n}\n");
    let r = run(&["slam", "--log", s(&log), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 3"));

    assert_eq!(run(&["slam", "--log", "/no/such/log.jsonl", "--out", s(&out)]).status.code(), Some(2));
    let traj = write(&dir.path().join("t.csv"), "t,x,y,theta\n0,0,0,0\n1,zero,0,0\n");
    let r = run(&["eval", "--traj", s(&traj), "--truth", s(&traj), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 3"));
}

#[test]
fn runtime_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    // The output directory is a file.
    let blocker = write(&dir.path().join("file"), "");
    let sim = simulate_corridor(dir.path(), "1");
    let r = run(&["slam", "--log", s(&sim.join("log.jsonl")), "--out", s(&blocker.join("sub"))]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn every_run_embeds_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_corridor(dir.path(), "9");
    let cfg = json(&sim.join("config.json"));
    assert_eq!(cfg["seed"], 9);
    assert!(cfg["world"].as_str().unwrap().ends_with("corridor.json"));
    let out = dir.path().join("slam");
    ok(&["slam", "--log", s(&sim.join("log.jsonl")), "--mode", "encoderless", "--out", s(&out)]);
    let cfg = json(&out.join("config.json"));
    assert_eq!(cfg["mode"], "encoderless");
    // The embedded config is accepted back as input.
    let again = dir.path().join("again");
    ok(&["slam", "--log", s(&sim.join("log.jsonl")), "--config", s(&out.join("config.json")), "--out", s(&again)]);
    assert_eq!(std::fs::read(out.join("map.pgm")).unwrap(), std::fs::read(again.join("map.pgm")).unwrap());
}

#[test]
fn simulate_and_slam_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let sim = simulate_corridor(d, "42");
        ok(&["slam", "--log", s(&sim.join("log.jsonl")), "--out", s(&d.join("slam"))]);
    }
    for f in ["sim/log.jsonl", "sim/truth.csv", "slam/map.pgm", "slam/map.yaml", "slam/trajectory.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let other = tempfile::tempdir().unwrap();
    let sim = simulate_corridor(other.path(), "43");
    assert_ne!(std::fs::read(sim.join("log.jsonl")).unwrap(), std::fs::read(a.path().join("sim/log.jsonl")).unwrap());
}

#[test]
fn teleop_from_log_reproduces_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_corridor(dir.path(), "5");
    let out = dir.path().join("replay");
    ok(&["simulate", "--world", s(&corridor()), "--teleop-from-log", s(&sim.join("log.jsonl")), "--seed", "5", "--out", s(&out)]);
    assert_eq!(std::fs::read(sim.join("log.jsonl")).unwrap(), std::fs::read(out.join("log.jsonl")).unwrap());
}

#[test]
fn eval_of_identical_trajectories_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_corridor(dir.path(), "2");
    let out = dir.path().join("eval");
    let truth = sim.join("truth.csv");
    let report = ok(&["eval", "--traj", s(&truth), "--truth", s(&truth), "--out", s(&out)]);
    assert!(report.contains("ate rmse 0.000000 m"), "{report}");
    assert_eq!(json(&out.join("eval.json"))["ate"]["rmse_m"], 0.0);
    let rows = csv_rows(&out.join("errors.csv"));
    assert_eq!(rows.len(), csv_rows(&truth).len());
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0));
    assert!(std::fs::read_to_string(out.join("errors.csv")).unwrap().starts_with("t,pos_err_m,heading_err_rad\n"));
    // A sensor log works as ground truth too.
    ok(&["eval", "--traj", s(&truth), "--truth", s(&sim.join("log.jsonl")), "--out", s(&out)]);
    assert_eq!(json(&out.join("eval.json"))["ate"]["rmse_m"], 0.0);
}

#[test]
fn eval_of_a_map_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(&dir.path().join("maze.json"), MAZE_SHORT);
    let sim = dir.path().join("sim");
    ok(&["simulate", "--world", s(&maze()), "--script", s(&script), "--out", s(&sim)]);
    let slam = dir.path().join("slam");
    ok(&["slam", "--log", s(&sim.join("log.jsonl")), "--mode", "gt-odom", "--out", s(&slam)]);
    let out = dir.path().join("eval");
    let map = slam.join("map.pgm");
    ok(&["eval", "--map", s(&map), "--truth-map", s(&slam.join("map.yaml")), "--out", s(&out)]);
    let m = &json(&out.join("eval.json"))["map"];
    assert_eq!((m["occ_iou"].as_f64(), m["agreement"].as_f64()), (Some(1.0), Some(1.0)));
    ok(&["eval", "--map", s(&map), "--world", s(&maze()), "--out", s(&out)]);
    // The short drive sees a corner of the maze, so score what it saw.
    let m = &json(&out.join("eval.json"))["map"];
    assert!(m["occ_precision"].as_f64().unwrap() > 0.95 && m["agreement"].as_f64().unwrap() > 0.95, "{m}");
}

#[test]
fn localize_writes_estimate_and_error_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_corridor(dir.path(), "4");
    let cfg = write(
        &dir.path().join("mcl.json"),
        r#"{"mcl": {"n_particles": 200, "init": {"gaussian": {"mean": [0.525, 0.425, 0.0], "sigmas": [0.05, 0.05, 0.05]}}}}"#,
    );
    let out = dir.path().join("loc");
    ok(&["localize", "--world", s(&corridor()), "--log", s(&sim.join("log.jsonl")), "--config", s(&cfg), "--out", s(&out)]);
    let est = std::fs::read_to_string(out.join("estimate.csv")).unwrap();
    assert!(est.starts_with("t,x,y,theta\n"));
    let errs = csv_rows(&out.join("error.csv"));
    assert_eq!(errs.len(), est.lines().count() - 1);
    assert!(errs.iter().all(|r| r[2].abs() < 0.1));

    // Against a saved map file as well.
    let slam = dir.path().join("slam");
    ok(&["slam", "--log", s(&sim.join("log.jsonl")), "--mode", "gt-odom", "--out", s(&slam)]);
    ok(&["localize", "--map", s(&slam.join("map.pgm")), "--log", s(&sim.join("log.jsonl")), "--config", s(&cfg), "--out", s(&out)]);
}

/// A square room with a closed box around (3, 3).
const BOXED: &str = r#"{"bounds": [0, 0, 4, 4], "spawn": [1, 1, 0], "segments": [
    [0.025, 0.025, 3.975, 0.025], [3.975, 0.025, 3.975, 3.975], [3.975, 3.975, 0.025, 3.975], [0.025, 3.975, 0.025, 0.025],
    [2.5, 2.5, 3.5, 2.5], [3.5, 2.5, 3.5, 3.5], [3.5, 3.5, 2.5, 3.5], [2.5, 3.5, 2.5, 2.5]]}"#;

#[test]
fn navigate_reports_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nav");
    let stdout = ok(&["navigate", "--world", s(&corridor()), "--goal", "5.5,0.425", "--out", s(&out)]);
    assert!(stdout.starts_with("reached"));
    let nav = json(&out.join("nav.json"));
    assert_eq!(nav["outcome"], "reached");
    let traj = csv_rows(&out.join("trajectory.csv"));
    let last = traj.last().unwrap();
    assert!((last[1] - 5.5).abs() < 0.15 && (last[2] - 0.425).abs() < 0.15);
    assert!(std::fs::read_to_string(out.join("plan.csv")).unwrap().starts_with("x,y\n"));
    assert!(out.join("log.jsonl").exists());

    let boxed = write(&dir.path().join("boxed.json"), BOXED);
    let r = run(&["navigate", "--world", s(&boxed), "--goal", "3,3", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(json(&out.join("nav.json"))["outcome"], "no_path");
    // Inside a wall, and off the map entirely.
    let r = run(&["navigate", "--world", s(&boxed), "--goal", "2.5,3", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let r = run(&["navigate", "--world", s(&corridor()), "--goal", "50,50", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
}
