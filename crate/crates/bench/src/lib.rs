//! Shared inputs for the benchmarks.

use mazeslam_core::{LidarScan, Pose2, SimConfig, Simulator, Twist2, WorldModel};

pub fn maze() -> WorldModel {
    WorldModel::from_json(include_str!("../../../worlds/maze.json")).expect("bundled maze parses")
}

/// Noiseless scans with their true poses while turning in place at the spawn.
pub fn drive(steps: usize) -> Vec<(LidarScan, Pose2)> {
    let mut sim = Simulator::new(maze(), SimConfig::noiseless(), 7).expect("noiseless config is valid");
    let mut out = Vec::new();
    for _ in 0..steps {
        for rec in sim.step(Twist2::new(0.0, 0.5)) {
            if let Some(scan) = rec.as_scan() {
                out.push((scan, sim.state().true_pose));
            }
        }
    }
    out
}
