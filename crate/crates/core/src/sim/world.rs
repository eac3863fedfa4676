use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Pose2};
use crate::sim::RobotParams;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read world file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed world file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("segment {0} has zero length")]
    DegenerateSegment(usize),
    #[error("bounds are empty")]
    EmptyBounds,
    #[error("spawn pose lies outside the world bounds")]
    SpawnOutside,
    #[error("spawn pose is within {clearance:.3} m of a wall, body radius is {radius:.3} m")]
    SpawnInCollision { clearance: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = Point2::new(self.a.x + t * dx, self.a.y + t * dy);
        p.distance(&q)
    }

    /// Distance along the ray `origin + t·(cos a, sin a)` to this segment, if it is hit
    /// at some t > 0. Rays parallel to the segment never hit.
    pub fn ray_hit(&self, origin: Point2, dir: (f64, f64)) -> Option<f64> {
        let (ex, ey) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let denom = dir.0 * ey - dir.1 * ex;
        if denom.abs() < 1e-15 {
            return None;
        }
        let (wx, wy) = (self.a.x - origin.x, self.a.y - origin.y);
        let t = (wx * ey - wy * ex) / denom;
        let u = (wx * dir.1 - wy * dir.0) / denom;
        if t > 0.0 && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

/// A maze: straight wall segments inside an axis-aligned rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub segments: Vec<Segment>,
    pub bounds: Bounds,
    pub spawn: Pose2,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    bounds: [f64; 4],
    spawn: [f64; 3],
    segments: Vec<[f64; 4]>,
}

impl WorldModel {
    pub fn new(segments: Vec<Segment>, bounds: Bounds, spawn: Pose2) -> Result<Self, WorldError> {
        if let Some(i) = segments.iter().position(|s| s.length() <= 0.0) {
            return Err(WorldError::DegenerateSegment(i));
        }
        if !(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin) {
            return Err(WorldError::EmptyBounds);
        }
        if !bounds.contains(spawn.position()) {
            return Err(WorldError::SpawnOutside);
        }
        Ok(Self {
            segments,
            bounds,
            spawn,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let f: WorldFile = serde_json::from_str(text)?;
        let [xmin, ymin, xmax, ymax] = f.bounds;
        let segments = f
            .segments
            .iter()
            .map(|s| Segment::new(Point2::new(s[0], s[1]), Point2::new(s[2], s[3])))
            .collect();
        Self::new(
            segments,
            Bounds {
                xmin,
                ymin,
                xmax,
                ymax,
            },
            Pose2::from(f.spawn),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let b = &self.bounds;
        let f = WorldFile {
            bounds: [b.xmin, b.ymin, b.xmax, b.ymax],
            spawn: self.spawn.into(),
            segments: self
                .segments
                .iter()
                .map(|s| [s.a.x, s.a.y, s.b.x, s.b.y])
                .collect(),
        };
        serde_json::to_string_pretty(&f).expect("world serializes")
    }

    /// Checks the spawn clearance against a robot body.
    pub fn validate_for(&self, robot: &RobotParams) -> Result<(), WorldError> {
        let clearance = self.clearance(self.spawn.position());
        if clearance < robot.body_radius {
            return Err(WorldError::SpawnInCollision {
                clearance,
                radius: robot.body_radius,
            });
        }
        Ok(())
    }

    /// Distance from `p` to the nearest wall; infinite in an empty world.
    pub fn clearance(&self, p: Point2) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest wall hit along a ray, or `None` when nothing lies within `max_range`.
    pub fn raycast(&self, origin: Point2, angle: f64, max_range: f64) -> Option<f64> {
        let dir = (angle.cos(), angle.sin());
        self.segments
            .iter()
            .filter_map(|s| s.ray_hit(origin, dir))
            .filter(|&t| t <= max_range)
            .min_by(f64::total_cmp)
    }
}

/// Free-function form of [`WorldModel::raycast`].
pub fn raycast_world(world: &WorldModel, origin: Point2, angle: f64, max_range: f64) -> Option<f64> {
    world.raycast(origin, angle, max_range)
}
