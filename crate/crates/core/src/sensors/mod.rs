//! Predicted sensor functions for the planar lidar and the depth camera.
//!
//! Both predictors are deterministic: the same mesh, pose and
//! configuration always produce a bit-identical observation.

mod depth;
mod lidar;

pub use depth::{mask_from_depth, predict_depth, render_depth, DepthImage, Mask};
pub use lidar::{predict_lidar, scan_mesh, LidarConfig, LidarScan, SCAN_CELLS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, Pose, StablePoseCatalog};
use crate::geometry::{CameraModel, GeometryError, TriangleMesh};

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("unknown stable pose {0:?}")]
    UnknownStablePose(String),
    #[error("invalid sensor configuration {id:?}: {reason}")]
    InvalidConfig { id: String, reason: String },
    #[error("no predicted observation for pose {pose_id:?} and config {config_id:?}")]
    Missing { pose_id: String, config_id: String },
    #[error("noise standard deviation must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<BeliefError> for SensorError {
    fn from(e: BeliefError) -> Self {
        match e {
            BeliefError::UnknownStablePose(c) => SensorError::UnknownStablePose(c),
            other => SensorError::InvalidConfig {
                id: String::new(),
                reason: other.to_string(),
            },
        }
    }
}

/// Camera sensing setup: intrinsics plus camera-to-world placement.
pub type CameraConfig = CameraModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorSetup {
    Lidar(LidarConfig),
    Camera(CameraConfig),
}

impl SensorSetup {
    pub fn kind(&self) -> SensorKind {
        match self {
            SensorSetup::Lidar(_) => SensorKind::Lidar,
            SensorSetup::Camera(_) => SensorKind::Camera,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Lidar,
    Camera,
}

/// A candidate helper configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub id: String,
    #[serde(flatten)]
    pub setup: SensorSetup,
}

impl SensorConfig {
    pub fn lidar(id: impl Into<String>, config: LidarConfig) -> Self {
        Self {
            id: id.into(),
            setup: SensorSetup::Lidar(config),
        }
    }

    pub fn camera(id: impl Into<String>, camera: CameraConfig) -> Self {
        Self {
            id: id.into(),
            setup: SensorSetup::Camera(camera),
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let invalid = |reason: String| SensorError::InvalidConfig {
            id: self.id.clone(),
            reason,
        };
        match &self.setup {
            SensorSetup::Lidar(l) => l.validate().map_err(invalid),
            SensorSetup::Camera(c) => c.intrinsics.validate().map_err(|e| invalid(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    Lidar(LidarScan),
    Depth(DepthImage),
}

impl Observation {
    pub fn kind(&self) -> SensorKind {
        match self {
            Observation::Lidar(_) => SensorKind::Lidar,
            Observation::Depth(_) => SensorKind::Camera,
        }
    }

    /// Flat view of the raw cell values (ranges or row-major depths).
    pub fn values(&self) -> &[f64] {
        match self {
            Observation::Lidar(s) => &s.ranges,
            Observation::Depth(d) => d.values(),
        }
    }

    /// `(rows, cols)` of the underlying array.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Observation::Lidar(s) => (1, s.ranges.len()),
            Observation::Depth(d) => (d.height(), d.width()),
        }
    }

    /// Writes the observation as CSV: `bearing_deg,range` rows for scans,
    /// one row of depths per image row otherwise.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        match self {
            Observation::Lidar(s) => {
                w.write_record(["bearing_deg", "range"])?;
                for (deg, r) in s.ranges.iter().enumerate() {
                    w.write_record([deg.to_string(), r.to_string()])?;
                }
            }
            Observation::Depth(d) => {
                for row in d.values().chunks(d.width()) {
                    w.write_record(row.iter().map(|v| v.to_string()))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The predicted sensor function `f̂(pose, config)`.
pub trait ObservationPredictor: Sync {
    fn predict(&self, pose: &Pose, config: &SensorConfig) -> Result<Observation, SensorError>;
}

/// Ray-casts or rasterizes a known mesh placed at each hypothesized pose.
#[derive(Debug, Clone)]
pub struct MeshPredictor {
    pub mesh: TriangleMesh,
    pub catalog: StablePoseCatalog,
}

impl MeshPredictor {
    pub fn new(mesh: TriangleMesh, catalog: StablePoseCatalog) -> Self {
        Self { mesh, catalog }
    }
}

impl ObservationPredictor for MeshPredictor {
    fn predict(&self, pose: &Pose, config: &SensorConfig) -> Result<Observation, SensorError> {
        match &config.setup {
            SensorSetup::Lidar(l) => predict_lidar(&self.mesh, &self.catalog, pose, l).map(Observation::Lidar),
            SensorSetup::Camera(c) => predict_depth(&self.mesh, &self.catalog, pose, c).map(Observation::Depth),
        }
    }
}

/// Adds zero-mean Gaussian noise to every measured cell. Lidar
/// no-return cells and depth background pixels are left untouched;
/// results are clamped to the valid range.
pub fn with_gaussian_noise(obs: &Observation, std_dev: f64, seed: u64) -> Result<Observation, SensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    with_gaussian_noise_rng(obs, std_dev, &mut rng)
}

pub fn with_gaussian_noise_rng<R: rand::Rng + ?Sized>(
    obs: &Observation,
    std_dev: f64,
    rng: &mut R,
) -> Result<Observation, SensorError> {
    if !(std_dev >= 0.0 && std_dev.is_finite()) {
        return Err(SensorError::BadNoise(std_dev));
    }
    let normal = Normal::new(0.0, std_dev).map_err(|_| SensorError::BadNoise(std_dev))?;
    Ok(match obs {
        Observation::Lidar(s) => {
            let ranges = s
                .ranges
                .iter()
                .map(|&r| {
                    if r >= s.max_range {
                        r
                    } else {
                        (r + normal.sample(rng)).clamp(0.0, s.max_range)
                    }
                })
                .collect();
            Observation::Lidar(LidarScan {
                ranges,
                max_range: s.max_range,
            })
        }
        Observation::Depth(d) => {
            let values = d
                .values()
                .iter()
                .map(|&z| if z > 0.0 { (z + normal.sample(rng)).max(0.0) } else { z })
                .collect();
            Observation::Depth(DepthImage::from_values(d.width(), d.height(), values).expect("same shape"))
        }
    })
}
