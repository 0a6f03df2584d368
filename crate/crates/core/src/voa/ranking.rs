use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::sensors::{CameraConfig, SensorConfig, SensorSetup};

/// Parameters of the camera-placement heuristic
/// `H = (1 - D / d_max) + V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRankingParams {
    pub point_of_interest: [f64; 3],
    /// Distance (m) at which the proximity term reaches zero.
    pub d_max: f64,
    /// Pixel deviation from the image center at which the visibility
    /// term reaches zero.
    pub r_ref: f64,
}

impl CameraRankingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(format!("d_max must be > 0, got {}", self.d_max));
        }
        if !(self.r_ref > 0.0 && self.r_ref.is_finite()) {
            return Err(format!("r_ref must be > 0, got {}", self.r_ref));
        }
        if self.point_of_interest.iter().any(|v| !v.is_finite()) {
            return Err("point_of_interest must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCamera {
    pub config_id: String,
    pub score: f64,
    pub distance: f64,
    /// Pixel distance of the projected point from the image center;
    /// absent when the point is behind the camera.
    pub deviation: Option<f64>,
}

/// `H = (1 - D / d_max) + V` with `V = 1 - min(deviation / r_ref, 1)`,
/// and `V = 0` when there is no projection.
pub fn camera_heuristic(distance: f64, deviation: Option<f64>, params: &CameraRankingParams) -> f64 {
    let visibility = match deviation {
        Some(dev) => 1.0 - (dev / params.r_ref).min(1.0),
        None => 0.0,
    };
    (1.0 - distance / params.d_max) + visibility
}

fn score_camera(id: &str, camera: &CameraConfig, params: &CameraRankingParams) -> RankedCamera {
    let poi = Point3::from(params.point_of_interest);
    let distance = (camera.center() - poi).norm();
    let deviation = camera.project_unbounded(&poi).map(|p| {
        let (cr, cc) = (camera.intrinsics.height as f64 / 2.0, camera.intrinsics.width as f64 / 2.0);
        ((p.row - cr).powi(2) + (p.col - cc).powi(2)).sqrt()
    });
    RankedCamera {
        config_id: id.to_string(),
        score: camera_heuristic(distance, deviation, params),
        distance,
        deviation,
    }
}

/// Camera configs sorted by descending heuristic score, ties by id.
/// Non-camera configs are skipped.
pub fn rank_camera_configs(candidates: &[SensorConfig], params: &CameraRankingParams) -> Vec<RankedCamera> {
    let mut ranked: Vec<RankedCamera> = candidates
        .iter()
        .filter_map(|c| match &c.setup {
            SensorSetup::Camera(cam) => Some(score_camera(&c.id, cam, params)),
            SensorSetup::Lidar(_) => None,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.config_id.cmp(&b.config_id)));
    ranked
}
