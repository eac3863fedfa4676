//! Deterministic maze-world simulator for a differential-drive robot.

mod kinematics;
mod script;
mod sensors;
mod world;

pub use kinematics::{step_exact, wheels_to_twist, RobotParams};
pub use sensors::{
    simulate_lidar, ImuConfig, ImuModel, ImuSample, LidarConfig, LidarScan, OdomNoise,
};
pub use script::{replay_commands, run_script, waypoint_command, CommandScript, DriverConfig, ScriptRun, ScriptSegment};
pub use world::{raycast_world, Bounds, Segment, WorldError, WorldModel};

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, Twist2};
use crate::log::Record;
use crate::rng::{gaussian, stream, RngStream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Fixed step, seconds.
    pub dt: f64,
    /// A scan is taken every `scan_every` steps.
    pub scan_every: u64,
    pub robot: RobotParams,
    pub lidar: LidarConfig,
    pub imu: ImuConfig,
    pub odom: OdomNoise,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            scan_every: 2,
            robot: RobotParams::default(),
            lidar: LidarConfig::default(),
            imu: ImuConfig::default(),
            odom: OdomNoise::default(),
        }
    }
}

impl SimConfig {
    /// Defaults with every noise source switched off.
    pub fn noiseless() -> Self {
        let mut c = Self::default();
        c.lidar.sigma_range = 0.0;
        c.imu = ImuConfig {
            sigma_gyro: 0.0,
            sigma_bias_walk: 0.0,
        };
        c.odom = OdomNoise {
            sigma_v: 0.0,
            sigma_w: 0.0,
        };
        c
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("sim dt must be positive".into());
        }
        if self.scan_every == 0 {
            return Err("scan_every must be at least 1".into());
        }
        self.robot.validate()?;
        self.lidar.validate()
    }
}

/// Ground truth of the simulated robot.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub clock: f64,
    pub step_index: u64,
    pub true_pose: Pose2,
    pub commanded: Twist2,
    /// Twist actually executed during the last step.
    pub executed: Twist2,
    pub collision: bool,
}

/// Externally stepped simulator. Each sensor draws from its own random stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    world: WorldModel,
    cfg: SimConfig,
    state: SimState,
    imu: ImuModel,
    lidar_rng: RngStream,
    imu_rng: RngStream,
    odom_rng: RngStream,
}

impl Simulator {
    pub fn new(world: WorldModel, cfg: SimConfig, seed: u64) -> Result<Self, String> {
        cfg.validate()?;
        world
            .validate_for(&cfg.robot)
            .map_err(|e| e.to_string())?;
        let state = SimState {
            clock: 0.0,
            step_index: 0,
            true_pose: world.spawn,
            commanded: Twist2::ZERO,
            executed: Twist2::ZERO,
            collision: false,
        };
        Ok(Self {
            world,
            cfg,
            state,
            imu: ImuModel::new(cfg.imu),
            lidar_rng: stream(seed, Stream::Lidar),
            imu_rng: stream(seed, Stream::Imu),
            odom_rng: stream(seed, Stream::WheelOdom),
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn imu_bias(&self) -> f64 {
        self.imu.bias
    }

    /// Records describing the starting instant: ground truth and a first scan.
    pub fn initial_records(&mut self) -> Vec<Record> {
        let t = self.state.clock;
        let pose = self.state.true_pose;
        let scan = simulate_lidar(&self.world, &pose, &self.cfg.lidar, t, &mut self.lidar_rng);
        vec![Record::gt(t, &pose), Record::scan(&scan)]
    }

    /// Advances one fixed step under `cmd` and returns the emitted records.
    pub fn step(&mut self, cmd: Twist2) -> Vec<Record> {
        let dt = self.cfg.dt;
        let robot = self.cfg.robot;
        let cmd = cmd.clamped(robot.max_v, robot.max_w);
        let t0 = self.state.clock;
        let pose = self.state.true_pose;

        let (executed, collision) = self.admissible_twist(&pose, cmd);
        let next = step_exact(&pose, executed, dt);

        self.state.step_index += 1;
        // Derived from the step count so the clock cannot drift.
        let t1 = self.state.step_index as f64 * dt;
        self.state.clock = t1;
        self.state.true_pose = next;
        self.state.commanded = cmd;
        self.state.executed = executed;
        self.state.collision = collision;

        let odom = Twist2::new(
            executed.v + gaussian(&mut self.odom_rng, self.cfg.odom.sigma_v),
            executed.w + gaussian(&mut self.odom_rng, self.cfg.odom.sigma_w),
        );
        let imu = self.imu.sample(executed.w, dt, t0, &mut self.imu_rng);

        let mut out = vec![
            Record::cmd(t0, cmd),
            Record::odom(t0, odom),
            Record::imu(t0, imu.gyro_z),
            Record::gt(t1, &next),
        ];
        if self.state.step_index % self.cfg.scan_every == 0 {
            let scan = simulate_lidar(&self.world, &next, &self.cfg.lidar, t1, &mut self.lidar_rng);
            out.push(Record::scan(&scan));
        }
        out
    }

    /// Largest fraction of `cmd` that keeps the body disc clear of every wall.
    /// Motion toward a wall stops at contact; there is no sliding.
    fn admissible_twist(&self, pose: &Pose2, cmd: Twist2) -> (Twist2, bool) {
        let r = self.cfg.robot.body_radius;
        let dt = self.cfg.dt;
        let clear = |s: f64| {
            let p = step_exact(pose, cmd.scaled(s), dt);
            self.world.clearance(p.position()) >= r
        };
        if clear(1.0) {
            return (cmd, false);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            if clear(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (cmd.scaled(lo), true)
    }
}
