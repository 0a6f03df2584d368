//! Value of Assistance: the expected gain in grasp success an actor gets
//! from one observation taken by the helper at a given sensor
//! configuration.
//!
//! For helper belief `b_h`, actor belief `b_a` and deterministic predicted
//! observations `ô(p) = f̂(p, c)`:
//!
//! ```text
//! VOA(c) = Σ_p b_h(p) [ γ(g_max(τ(b_a, ô(p))), p) − γ(g_max(b_a), p) ]
//! ```
//!
//! With a shared belief this is the simplified single-belief form. Each
//! configuration is evaluated with a fixed pose order, so results do not
//! depend on how configurations are scheduled across threads.

mod precompute;
mod ranking;

pub use precompute::{precompute, PrecomputedObservations};
pub use ranking::{camera_heuristic, rank_camera_configs, CameraRankingParams, RankedCamera};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Belief, BeliefError};
use crate::grasp::{GraspError, GraspScoreTable, ScoreMatrix};
use crate::sensors::{with_gaussian_noise_rng, Observation, ObservationPredictor, SensorConfig, SensorError, SensorKind};
use crate::similarity::{similarity, SimilarityError, SimilarityMetric};

#[derive(Debug, Error)]
pub enum VoaError {
    #[error("config {config_id:?}, pose {pose_id:?}: belief update failed: {source}")]
    Update {
        config_id: String,
        pose_id: String,
        #[source]
        source: Box<BeliefError>,
    },
    #[error("config {config_id:?}, pose {pose_id:?}: {source}")]
    Prediction {
        config_id: String,
        pose_id: String,
        #[source]
        source: SensorError,
    },
    #[error("config {config_id:?}: {source}")]
    Similarity {
        config_id: String,
        #[source]
        source: SimilarityError,
    },
    #[error("actor and helper beliefs must cover the same poses in the same order (mismatch at index {0})")]
    PoseSetMismatch(usize),
    #[error("grasp scores cover {scores} poses, beliefs cover {poses}")]
    ScoreShape { scores: usize, poses: usize },
    #[error("sensor configuration set is empty")]
    NoConfigs,
    #[error("sensor configuration set mixes lidar and camera configs (first differing id {0:?})")]
    MixedSensors(String),
    #[error("duplicate sensor config id {0:?}")]
    DuplicateConfig(String),
    #[error("noise model: {0}")]
    Noise(String),
    #[error(transparent)]
    Grasp(#[from] GraspError),
}

/// How sampled poses are matched to rows of a grasp-score table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKey {
    /// Row keyed by the pose's stable-pose category.
    #[default]
    Category,
    /// Row keyed by the pose id itself.
    PoseId,
}

/// Monte-Carlo observation noise for the general (stochastic) VOA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationNoise {
    pub std_dev: f64,
    /// Observations drawn per pose.
    pub samples: usize,
    pub seed: u64,
}

/// Homogeneous, non-empty list of candidate helper configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfigSet {
    configs: Vec<SensorConfig>,
}

impl SensorConfigSet {
    pub fn new(configs: Vec<SensorConfig>) -> Result<Self, VoaError> {
        let first = configs.first().ok_or(VoaError::NoConfigs)?;
        let kind = first.setup.kind();
        let mut ids = std::collections::HashSet::new();
        for c in &configs {
            if c.setup.kind() != kind {
                return Err(VoaError::MixedSensors(c.id.clone()));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(VoaError::DuplicateConfig(c.id.clone()));
            }
        }
        Ok(Self { configs })
    }

    pub fn configs(&self) -> &[SensorConfig] {
        &self.configs
    }

    pub fn kind(&self) -> SensorKind {
        self.configs[0].setup.kind()
    }

    pub fn get(&self, id: &str) -> Option<&SensorConfig> {
        self.configs.iter().find(|c| c.id == id)
    }
}

/// Everything `compute_voa` needs besides the configuration.
pub struct VoaInputs<'a> {
    actor: &'a Belief,
    helper: &'a Belief,
    scores: ScoreMatrix,
    metric: &'a SimilarityMetric,
    predictor: &'a dyn ObservationPredictor,
    noise: Option<ObservationNoise>,
}

impl<'a> VoaInputs<'a> {
    pub fn new(
        actor: &'a Belief,
        helper: &'a Belief,
        table: &GraspScoreTable,
        key: ScoreKey,
        metric: &'a SimilarityMetric,
        predictor: &'a dyn ObservationPredictor,
    ) -> Result<Self, VoaError> {
        let scores = match key {
            ScoreKey::Category => table.align_by_category(actor.poses())?,
            ScoreKey::PoseId => table.align(actor.poses())?,
        };
        Self::with_scores(actor, helper, scores, metric, predictor)
    }

    /// `scores` must already be aligned with the beliefs' pose order.
    pub fn with_scores(
        actor: &'a Belief,
        helper: &'a Belief,
        scores: ScoreMatrix,
        metric: &'a SimilarityMetric,
        predictor: &'a dyn ObservationPredictor,
    ) -> Result<Self, VoaError> {
        if actor.len() != helper.len() {
            return Err(VoaError::PoseSetMismatch(actor.len().min(helper.len())));
        }
        if let Some(i) = actor.poses().iter().zip(helper.poses()).position(|(a, h)| a.id != h.id) {
            return Err(VoaError::PoseSetMismatch(i));
        }
        if scores.pose_count() != actor.len() {
            return Err(VoaError::ScoreShape {
                scores: scores.pose_count(),
                poses: actor.len(),
            });
        }
        metric.validate().map_err(|source| VoaError::Similarity {
            config_id: String::new(),
            source,
        })?;
        Ok(Self {
            actor,
            helper,
            scores,
            metric,
            predictor,
            noise: None,
        })
    }

    /// Switches to the Monte-Carlo estimate of the general VOA.
    pub fn with_noise(mut self, noise: ObservationNoise) -> Result<Self, VoaError> {
        if !(noise.std_dev >= 0.0 && noise.std_dev.is_finite()) {
            return Err(VoaError::Noise(format!("std_dev must be >= 0, got {}", noise.std_dev)));
        }
        if noise.samples == 0 {
            return Err(VoaError::Noise("samples must be at least 1".into()));
        }
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn scores(&self) -> &ScoreMatrix {
        &self.scores
    }

    pub fn actor(&self) -> &Belief {
        self.actor
    }

    pub fn helper(&self) -> &Belief {
        self.helper
    }

    /// Grasp the actor picks without help, and its expected score under
    /// the helper's belief.
    pub fn baseline(&self) -> (usize, f64) {
        let (g, _) = self.scores.maximal(self.actor.weights());
        (g, self.scores.expected(g, self.helper.weights()))
    }
}

/// Post-help outcome for one hypothesized true pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseOutcome {
    pub pose_id: String,
    /// Grasp the actor would switch to after the predicted observation;
    /// absent for poses the helper gives zero weight.
    pub grasp_id: Option<String>,
    /// `γ(grasp, pose)` for that grasp (averaged over noise samples).
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigAssessment {
    pub config_id: String,
    pub voa: f64,
    pub per_pose: Vec<PoseOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoaResult {
    pub baseline_grasp: String,
    pub baseline_score: f64,
    pub configs: Vec<ConfigAssessment>,
    pub selected: String,
}

impl VoaResult {
    pub fn voa_of(&self, config_id: &str) -> Option<f64> {
        self.configs.iter().find(|c| c.config_id == config_id).map(|c| c.voa)
    }
}

pub fn compute_voa(
    inputs: &VoaInputs<'_>,
    config: &SensorConfig,
    cache: Option<&PrecomputedObservations>,
) -> Result<f64, VoaError> {
    assess_config(inputs, config, cache).map(|a| a.voa)
}

/// Full per-pose breakdown behind [`compute_voa`].
pub fn assess_config(
    inputs: &VoaInputs<'_>,
    config: &SensorConfig,
    cache: Option<&PrecomputedObservations>,
) -> Result<ConfigAssessment, VoaError> {
    let poses = inputs.actor.poses();
    let (g0, _) = inputs.scores.maximal(inputs.actor.weights());
    let matrix = match (cache, inputs.noise) {
        (Some(c), None) => c.matrix_for(&config.id, inputs.metric, poses),
        _ => None,
    };
    let source: &dyn ObservationPredictor = match cache {
        Some(c) => c,
        None => inputs.predictor,
    };
    let predict = |i: usize| -> Result<Observation, VoaError> {
        source.predict(&poses[i], config).map_err(|source| VoaError::Prediction {
            config_id: config.id.clone(),
            pose_id: poses[i].id.clone(),
            source,
        })
    };
    // Cached predictions are computed once; the cold path re-predicts
    // inside every update, as the plain algorithm does.
    let cached_obs: Option<Vec<Observation>> = match (cache, matrix) {
        (Some(_), None) => Some((0..poses.len()).map(predict).collect::<Result<_, _>>()?),
        _ => None,
    };

    let likelihoods_for = |observed: &Observation| -> Result<Vec<f64>, VoaError> {
        (0..poses.len())
            .map(|j| {
                let predicted = match &cached_obs {
                    Some(all) => all[j].clone(),
                    None => predict(j)?,
                };
                similarity(inputs.metric, &predicted, observed).map_err(|source| VoaError::Similarity {
                    config_id: config.id.clone(),
                    source,
                })
            })
            .collect()
    };
    let chosen_score = |i: usize, likelihoods: &[f64]| -> Result<(usize, f64), VoaError> {
        let posterior = inputs.actor.reweight(likelihoods).map_err(|source| VoaError::Update {
            config_id: config.id.clone(),
            pose_id: poses[i].id.clone(),
            source: Box::new(source),
        })?;
        let (g, _) = inputs.scores.maximal(posterior.weights());
        Ok((g, inputs.scores.score(g, i)))
    };

    let mut noise_rng = inputs.noise.map(|n| {
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        rng.set_stream(stable_hash(&config.id));
        rng
    });

    let mut voa = 0.0;
    let mut per_pose = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let w = inputs.helper.weights()[i];
        if w == 0.0 {
            per_pose.push(PoseOutcome {
                pose_id: pose.id.clone(),
                grasp_id: None,
                score: None,
            });
            continue;
        }
        let (grasp, score) = match (&matrix, inputs.noise, noise_rng.as_mut()) {
            (Some(s), _, _) => chosen_score(i, s.row(i))?,
            (None, Some(noise), Some(rng)) => {
                let clean = match &cached_obs {
                    Some(all) => all[i].clone(),
                    None => predict(i)?,
                };
                let mut total = 0.0;
                let mut last = 0;
                for _ in 0..noise.samples {
                    let observed = with_gaussian_noise_rng(&clean, noise.std_dev, rng).map_err(|source| {
                        VoaError::Prediction {
                            config_id: config.id.clone(),
                            pose_id: pose.id.clone(),
                            source,
                        }
                    })?;
                    let (g, s) = chosen_score(i, &likelihoods_for(&observed)?)?;
                    total += s;
                    last = g;
                }
                (last, total / noise.samples as f64)
            }
            _ => {
                let observed = match &cached_obs {
                    Some(all) => all[i].clone(),
                    None => predict(i)?,
                };
                chosen_score(i, &likelihoods_for(&observed)?)?
            }
        };
        voa += w * (score - inputs.scores.score(g0, i));
        per_pose.push(PoseOutcome {
            pose_id: pose.id.clone(),
            grasp_id: Some(inputs.scores.grasp_ids()[grasp].clone()),
            score: Some(score),
        });
    }
    Ok(ConfigAssessment {
        config_id: config.id.clone(),
        voa,
        per_pose,
    })
}

/// Evaluates every configuration and picks the one with maximal VOA
/// (exact ties go to the lexicographically smallest config id).
pub fn select_config(
    inputs: &VoaInputs<'_>,
    configs: &SensorConfigSet,
    cache: Option<&PrecomputedObservations>,
) -> Result<VoaResult, VoaError> {
    let assessed = configs
        .configs()
        .par_iter()
        .map(|c| assess_config(inputs, c, cache))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (k, a) in assessed.iter().enumerate().skip(1) {
        let b = &assessed[best];
        if a.voa > b.voa || (a.voa == b.voa && a.config_id < b.config_id) {
            best = k;
        }
    }
    let (g0, baseline_score) = inputs.baseline();
    Ok(VoaResult {
        baseline_grasp: inputs.scores.grasp_ids()[g0].clone(),
        baseline_score,
        selected: assessed[best].config_id.clone(),
        configs: assessed,
    })
}

/// FNV-1a, used to give each config its own noise stream.
fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
