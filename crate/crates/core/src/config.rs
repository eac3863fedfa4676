//! One JSON document holding every tunable of a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fusion::{FusionConfig, OdomMode};
use crate::mcl::MclConfig;
use crate::nav::NavConfig;
use crate::sim::{DriverConfig, SimConfig};
use crate::slam::SlamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Largest stamp gap for pairing an estimate with ground truth, seconds.
    pub max_dt: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_dt: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub port: u16,
    /// Simulator ticks per second.
    pub sim_rate: f64,
    pub state_rate: f64,
    pub map_rate: f64,
    /// Teleop commands older than this fall back to zero, seconds.
    pub deadman: f64,
    pub max_scan_beams: usize,
    pub max_particles: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            port: 8765,
            sim_rate: 20.0,
            state_rate: 10.0,
            map_rate: 1.0,
            deadman: 0.5,
            max_scan_beams: 90,
            max_particles: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// World file; relative paths resolve against the working directory.
    pub world: Option<PathBuf>,
    pub mode: OdomMode,
    pub sim: SimConfig,
    pub driver: DriverConfig,
    pub fusion: FusionConfig,
    pub slam: SlamConfig,
    pub mcl: MclConfig,
    pub nav: NavConfig,
    pub eval: EvalConfig,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            world: None,
            mode: OdomMode::WithEncoders,
            sim: SimConfig::default(),
            driver: DriverConfig::default(),
            fusion: FusionConfig::default(),
            slam: SlamConfig::default(),
            mcl: MclConfig::default(),
            nav: NavConfig::default(),
            eval: EvalConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), String> {
        self.sim.validate()?;
        self.fusion.validate()?;
        self.slam.validate()?;
        self.mcl.validate()?;
        self.nav.validate()?;
        if !(self.eval.max_dt >= 0.0) {
            return Err("eval.max_dt must be nonnegative".into());
        }
        let s = &self.serve;
        if !(s.sim_rate > 0.0 && s.state_rate > 0.0 && s.map_rate > 0.0 && s.deadman > 0.0) {
            return Err("serve rates must be positive".into());
        }
        Ok(())
    }
}
