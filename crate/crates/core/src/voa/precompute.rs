use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VoaError;
use crate::belief::Pose;
use crate::sensors::{Observation, ObservationPredictor, SensorConfig, SensorError};
use crate::similarity::{similarity_matrix, SimilarityMatrix, SimilarityMetric};

const CACHE_VERSION: u32 = 1;

/// Predicted observations for every (pose, config) pair, computed once.
///
/// Optionally also holds one similarity matrix per config over the pose
/// order it was built with. The cache stands in for the predictor, so
/// VOA computed through it is identical to the uncached result.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedObservations {
    observations: BTreeMap<(String, String), Observation>,
    pose_order: Vec<String>,
    matrices: BTreeMap<String, SimilarityMatrix>,
    metric: Option<SimilarityMetric>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheFile {
    version: u32,
    entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheEntry {
    pose_id: String,
    config_id: String,
    observation: Observation,
}

/// Calls the predictor exactly once per (pose, config) pair. With a
/// metric, also builds each config's similarity matrix over `poses`.
pub fn precompute(
    poses: &[Pose],
    configs: &[SensorConfig],
    predictor: &dyn ObservationPredictor,
    metric: Option<&SimilarityMetric>,
) -> Result<PrecomputedObservations, VoaError> {
    let mut cache = PrecomputedObservations {
        pose_order: poses.iter().map(|p| p.id.clone()).collect(),
        ..Default::default()
    };
    for config in configs {
        let mut column = Vec::with_capacity(poses.len());
        for pose in poses {
            let obs = predictor.predict(pose, config).map_err(|source| VoaError::Prediction {
                config_id: config.id.clone(),
                pose_id: pose.id.clone(),
                source,
            })?;
            column.push((pose.id.clone(), obs));
        }
        if let Some(m) = metric {
            let s = similarity_matrix(m, &column).map_err(|source| VoaError::Similarity {
                config_id: config.id.clone(),
                source,
            })?;
            cache.matrices.insert(config.id.clone(), s);
        }
        for (pose_id, obs) in column {
            cache.observations.insert((pose_id, config.id.clone()), obs);
        }
    }
    cache.metric = metric.cloned();
    Ok(cache)
}

impl PrecomputedObservations {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, pose_id: &str, config_id: &str) -> Option<&Observation> {
        self.observations.get(&(pose_id.to_string(), config_id.to_string()))
    }

    /// Similarity matrix for `config_id`, if one was built with `metric`
    /// over exactly `poses` in this order.
    pub fn matrix_for(&self, config_id: &str, metric: &SimilarityMetric, poses: &[Pose]) -> Option<&SimilarityMatrix> {
        if self.metric.as_ref() != Some(metric) || self.pose_order.len() != poses.len() {
            return None;
        }
        if self.pose_order.iter().zip(poses).any(|(a, p)| *a != p.id) {
            return None;
        }
        self.matrices.get(config_id)
    }

    pub fn similarity_matrix(&self, config_id: &str) -> Option<&SimilarityMatrix> {
        self.matrices.get(config_id)
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let file = CacheFile {
            version: CACHE_VERSION,
            entries: self
                .observations
                .iter()
                .map(|((pose_id, config_id), observation)| CacheEntry {
                    pose_id: pose_id.clone(),
                    config_id: config_id.clone(),
                    observation: observation.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file)
    }

    /// Restores observations only; similarity matrices are rebuilt on
    /// demand via [`precompute`] or [`PrecomputedObservations::with_similarity`].
    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: CacheFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.version != CACHE_VERSION {
            return Err(format!("unsupported cache version {} (expected {CACHE_VERSION})", file.version));
        }
        let mut observations = BTreeMap::new();
        for e in file.entries {
            let key = (e.pose_id, e.config_id);
            if observations.contains_key(&key) {
                return Err(format!("duplicate cache entry for pose {:?}, config {:?}", key.0, key.1));
            }
            observations.insert(key, e.observation);
        }
        Ok(Self {
            observations,
            ..Default::default()
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = self.to_json().map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Builds per-config similarity matrices over `poses` from the stored
    /// observations.
    pub fn with_similarity(mut self, poses: &[Pose], metric: &SimilarityMetric) -> Result<Self, VoaError> {
        let configs: std::collections::BTreeSet<String> =
            self.observations.keys().map(|(_, c)| c.clone()).collect();
        let mut matrices = BTreeMap::new();
        for config_id in configs {
            let column = poses
                .iter()
                .map(|p| {
                    self.get(&p.id, &config_id).cloned().map(|o| (p.id.clone(), o)).ok_or_else(|| {
                        VoaError::Prediction {
                            config_id: config_id.clone(),
                            pose_id: p.id.clone(),
                            source: SensorError::Missing {
                                pose_id: p.id.clone(),
                                config_id: config_id.clone(),
                            },
                        }
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let s = similarity_matrix(metric, &column).map_err(|source| VoaError::Similarity {
                config_id: config_id.clone(),
                source,
            })?;
            matrices.insert(config_id, s);
        }
        self.matrices = matrices;
        self.pose_order = poses.iter().map(|p| p.id.clone()).collect();
        self.metric = Some(metric.clone());
        Ok(self)
    }
}

impl ObservationPredictor for PrecomputedObservations {
    fn predict(&self, pose: &Pose, config: &SensorConfig) -> Result<Observation, SensorError> {
        self.get(&pose.id, &config.id).cloned().ok_or_else(|| SensorError::Missing {
            pose_id: pose.id.clone(),
            config_id: config.id.clone(),
        })
    }
}
