//! Log-to-map pipeline: odometry front end feeding gated SLAM updates. The
//! offline `slam` command and the live server share it, so a recorded session
//! replays to the same map.

use crate::fusion::{run_fusion, FrontEnd, FusionConfig, OdomFrame, OdomMode};
use crate::geometry::Pose2;
use crate::grid::{GridError, OccupancyGrid};
use crate::log::{Record, Stamped, Trajectory};
use crate::mcl::{KnownMap, Mcl, MclConfig, MclError, PoseEstimate};
use crate::slam::{OdomDelta, Slam, SlamConfig, SlamStep};

#[derive(Debug, Clone)]
pub struct MappingPipeline {
    front: FrontEnd,
    slam_cfg: SlamConfig,
    seed: u64,
    slam: Option<Slam>,
    /// Odometry pose at the last SLAM update.
    last_odom: Pose2,
    frames: usize,
}

impl MappingPipeline {
    pub fn new(mode: OdomMode, fusion: FusionConfig, slam: SlamConfig, seed: u64, start: Pose2, t0: f64) -> Self {
        Self {
            front: FrontEnd::new(mode, fusion, start, t0),
            slam_cfg: slam,
            seed,
            slam: None,
            last_odom: start,
            frames: 0,
        }
    }

    pub fn mode(&self) -> OdomMode {
        self.front.mode()
    }

    pub fn front_end(&self) -> &FrontEnd {
        &self.front
    }

    pub fn slam(&self) -> Option<&Slam> {
        self.slam.as_ref()
    }

    /// Scans seen so far.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Feeds one record. Returns the update summary when it triggered SLAM.
    pub fn push(&mut self, rec: &Record) -> Result<Option<SlamStep>, GridError> {
        match self.front.push(rec) {
            Some(frame) => self.frame(frame),
            None => Ok(None),
        }
    }

    fn frame(&mut self, frame: OdomFrame) -> Result<Option<SlamStep>, GridError> {
        self.frames += 1;
        let Some(slam) = self.slam.as_mut() else {
            self.slam = Some(Slam::new(self.slam_cfg, self.seed, frame.odom, &frame.scan)?);
            self.last_odom = frame.odom;
            return Ok(None);
        };
        let delta = OdomDelta::from_poses(&self.last_odom, &frame.odom);
        if !self.slam_cfg.should_update(&delta) {
            return Ok(None);
        }
        self.last_odom = frame.odom;
        Ok(Some(slam.process_scan(&delta, &frame.scan)))
    }

    /// Best particle's pose, or the odometry estimate before the first scan.
    pub fn pose(&self) -> Pose2 {
        match &self.slam {
            Some(s) => s.best().pose,
            None => self.front.state().pose(),
        }
    }

    pub fn map(&self) -> Option<&OccupancyGrid> {
        self.slam.as_ref().map(|s| &s.best().map)
    }

    pub fn trajectory(&self) -> Trajectory {
        self.slam.as_ref().map(|s| s.best().trajectory.clone()).unwrap_or_default()
    }
}

/// Result of mapping a whole log.
#[derive(Debug, Clone)]
pub struct MappingRun {
    pub map: OccupancyGrid,
    /// Best particle's trajectory at its update stamps.
    pub trajectory: Trajectory,
    pub updates: u64,
    pub resamples: usize,
    pub frames: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("log contains no scans")]
    NoScans,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Maps a whole log, starting from its first ground-truth pose.
pub fn run_mapping(
    records: &[Record],
    mode: OdomMode,
    fusion: &FusionConfig,
    slam: &SlamConfig,
    seed: u64,
) -> Result<MappingRun, MappingError> {
    let (start, t0) = crate::fusion::initial_pose(records);
    let mut p = MappingPipeline::new(mode, *fusion, *slam, seed, start, t0);
    for r in records {
        p.push(r)?;
    }
    let s = p.slam.as_ref().ok_or(MappingError::NoScans)?;
    Ok(MappingRun {
        map: s.best().map.clone(),
        trajectory: s.best().trajectory.clone(),
        updates: s.updates(),
        resamples: s.resamples(),
        frames: p.frames,
    })
}

/// Monte Carlo localization over a whole log, one update per scan.
#[derive(Debug, Clone)]
pub struct LocalizationRun {
    pub estimates: Vec<PoseEstimate>,
    pub resets: usize,
}

impl LocalizationRun {
    pub fn trajectory(&self) -> Trajectory {
        self.estimates
            .iter()
            .map(|e| Stamped {
                t: e.stamp,
                pose: e.mean,
            })
            .collect()
    }
}

/// Localizes a log against a known map. Odometry comes from the front end in
/// `mode`; the particle set is drawn from `mcl.init` before the first scan.
pub fn run_localization(
    records: &[Record],
    map: OccupancyGrid,
    mode: OdomMode,
    fusion: &FusionConfig,
    mcl: &MclConfig,
    seed: u64,
) -> Result<LocalizationRun, MclError> {
    let known = KnownMap::new(map, mcl.field_max_dist);
    let mut filter = Mcl::new(*mcl, known, seed)?;
    let run = run_fusion(records, mode, fusion);
    let mut estimates = Vec::with_capacity(run.frames.len());
    let mut last: Option<Pose2> = None;
    for f in &run.frames {
        let delta = last.map_or(OdomDelta::ZERO, |l| OdomDelta::from_poses(&l, &f.odom));
        last = Some(f.odom);
        estimates.push(filter.update(&delta, &f.scan).estimate);
    }
    Ok(LocalizationRun {
        estimates,
        resets: filter.resets(),
    })
}
