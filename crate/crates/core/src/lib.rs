//! Occupancy-grid SLAM workbench for a simulated differential-drive robot.
//!
//! The crate covers the whole experiment loop: a deterministic maze simulator,
//! log-odds occupancy grids, EKF odometry fusion (with or without wheel
//! encoders), Rao-Blackwellized particle-filter SLAM, Monte Carlo localization,
//! grid navigation, and metrics against ground truth.

pub mod config;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod log;
pub mod mcl;
pub mod nav;
pub mod pipeline;
pub mod rng;
pub mod slam;
pub mod sim;

pub use config::RunConfig;
pub use eval::{ate_rmse, heading_rmse, map_compare, AteReport, MapScore};
pub use fusion::{FusionConfig, OdomMode};
pub use geometry::{wrap_angle, Cov3, Point2, Pose2, Twist2};
pub use grid::{load_map, save_map, Cell, CellClass, OccupancyGrid};
pub use log::{Record, RecordData, Stamped, Trajectory};
pub use mcl::{MclConfig, PoseEstimate};
pub use nav::{Goal, NavConfig, NavOutcome};
pub use pipeline::{run_localization, run_mapping, MappingPipeline};
pub use sim::{CommandScript, LidarScan, SimConfig, Simulator, WorldModel};
pub use slam::SlamConfig;
