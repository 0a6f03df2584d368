use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::SensorError;
use crate::belief::{Pose, StablePoseCatalog};
use crate::geometry::{place_mesh, ray_mesh_nearest_hit, Ray, TriangleMesh};

/// One cell per degree of bearing.
pub const SCAN_CELLS: usize = 360;

/// Planar lidar. Cell `k` of a scan holds the range along bearing `k`
/// degrees counter-clockwise from the sensor heading `yaw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarConfig {
    /// Sensor position on the sensing plane (m).
    pub position: [f64; 2],
    /// Height of the sensing plane above the support surface (m).
    pub height: f64,
    /// Heading (rad).
    pub yaw: f64,
    /// Field of view centered on the heading (deg).
    pub fov_deg: f64,
    pub max_range: f64,
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err("max_range must be positive".into());
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return Err("fov_deg must be in (0, 360]".into());
        }
        if !(self.position.iter().all(|c| c.is_finite()) && self.height.is_finite() && self.yaw.is_finite()) {
            return Err("position, height and yaw must be finite".into());
        }
        Ok(())
    }

    /// Whether bearing cell `k` lies inside the field of view.
    pub fn in_fov(&self, k: usize) -> bool {
        let offset = if k <= 180 { k as f64 } else { k as f64 - 360.0 };
        offset.abs() <= self.fov_deg / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarScan {
    /// Exactly [`SCAN_CELLS`] ranges; `max_range` marks no return.
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

/// Scans an already placed mesh.
pub fn scan_mesh(mesh: &TriangleMesh, config: &LidarConfig) -> LidarScan {
    let origin = Point3::new(config.position[0], config.position[1], config.height);
    let ranges = (0..SCAN_CELLS)
        .map(|k| {
            if !config.in_fov(k) {
                return config.max_range;
            }
            let bearing = config.yaw + (k as f64).to_radians();
            let ray = Ray::new(origin, Vector3::new(bearing.cos(), bearing.sin(), 0.0))
                .expect("unit planar direction");
            match ray_mesh_nearest_hit(&ray, mesh) {
                Some(t) if t < config.max_range => t,
                _ => config.max_range,
            }
        })
        .collect();
    LidarScan {
        ranges,
        max_range: config.max_range,
    }
}

pub fn predict_lidar(
    mesh: &TriangleMesh,
    catalog: &StablePoseCatalog,
    pose: &Pose,
    config: &LidarConfig,
) -> Result<LidarScan, SensorError> {
    let placement = catalog.resolve(pose)?;
    Ok(scan_mesh(&place_mesh(mesh, &placement), config))
}
