//! Pose hypotheses, the post-drop initial belief, and Bayesian reweighting.

pub mod von_mises;

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidPlacement;
use crate::sensors::{Observation, ObservationPredictor, SensorConfig, SensorError};
use crate::similarity::{similarity, SimilarityError, SimilarityMetric};

/// Tolerance on `sum(weights) == 1` for beliefs built from caller weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("unknown stable pose {0:?}")]
    UnknownStablePose(String),
    #[error("invalid initial belief model: {0}")]
    InvalidModel(String),
    #[error("belief has {poses} poses but {weights} weights")]
    LengthMismatch { poses: usize, weights: usize },
    #[error("weight for pose {pose_id:?} is {weight}, expected a finite non-negative value")]
    BadWeight { pose_id: String, weight: f64 },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("belief has no poses")]
    Empty,
    #[error("duplicate pose id {0:?}")]
    DuplicatePose(String),
    #[error("observation inconsistent with belief support")]
    InconsistentObservation,
    #[error("predicting observation for pose {pose_id:?}: {source}")]
    Prediction {
        pose_id: String,
        #[source]
        source: SensorError,
    },
    #[error("scoring pose {pose_id:?}: {source}")]
    Similarity {
        pose_id: String,
        #[source]
        source: SimilarityError,
    },
}

/// A stable-pose hypothesis: contact category plus planar placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub id: String,
    pub category: String,
    /// Yaw about the world z axis, radians in `(-pi, pi]`.
    pub theta: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StablePose {
    pub category: String,
    /// Brings the mesh into this resting configuration at zero yaw and
    /// zero planar offset.
    pub placement: RigidPlacement,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StablePoseCatalog {
    entries: Vec<StablePose>,
}

impl StablePoseCatalog {
    pub fn new(entries: Vec<StablePose>) -> Result<Self, BeliefError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.category.as_str()) {
                return Err(BeliefError::InvalidModel(format!(
                    "stable pose category {:?} declared twice",
                    e.category
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.category.as_str())
    }

    pub fn get(&self, category: &str) -> Option<&RigidPlacement> {
        self.entries.iter().find(|e| e.category == category).map(|e| &e.placement)
    }

    /// Catalog placement for the category, then yaw about world z, then
    /// the planar translation.
    pub fn resolve(&self, pose: &Pose) -> Result<RigidPlacement, BeliefError> {
        let base = self
            .get(&pose.category)
            .ok_or_else(|| BeliefError::UnknownStablePose(pose.category.clone()))?;
        let yawed = RigidPlacement::from_yaw(pose.theta).compose(base);
        Ok(RigidPlacement::from_translation(Vector3::new(pose.x, pose.y, 0.0)).compose(&yawed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryPrior {
    pub category: String,
    pub probability: f64,
}

/// `P(C) * vonMises(theta; mu_theta, kappa) * N((x, y); mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBeliefModel {
    pub category_prior: Vec<CategoryPrior>,
    pub mu_theta: f64,
    pub kappa: f64,
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl InitialBeliefModel {
    pub fn validate(&self) -> Result<(), BeliefError> {
        let bad = |m: &str| Err(BeliefError::InvalidModel(m.to_string()));
        if self.category_prior.is_empty() {
            return bad("category_prior is empty");
        }
        let mut seen = HashSet::new();
        for c in &self.category_prior {
            if !(c.probability >= 0.0 && c.probability.is_finite()) {
                return bad(&format!("category_prior[{}] probability must be in [0, 1]", c.category));
            }
            if !seen.insert(c.category.as_str()) {
                return bad(&format!("category_prior lists {:?} twice", c.category));
            }
        }
        let total: f64 = self.category_prior.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return bad(&format!("category_prior sums to {total}, expected 1"));
        }
        if !self.mu_theta.is_finite() {
            return bad("mu_theta must be finite");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be finite and >= 0");
        }
        if !self.mean.iter().all(|m| m.is_finite()) {
            return bad("mean must be finite");
        }
        let [[a, b], [c, d]] = self.covariance;
        if b != c {
            return bad("covariance must be symmetric");
        }
        if !(a > 0.0 && a * d - b * c > 0.0) || !a.is_finite() || !d.is_finite() {
            return bad("covariance must be positive definite");
        }
        Ok(())
    }

    pub fn category_probability(&self, category: &str) -> f64 {
        self.category_prior
            .iter()
            .find(|c| c.category == category)
            .map_or(0.0, |c| c.probability)
    }

    /// Natural log of the joint density; `-inf` for categories with no mass.
    pub fn ln_density(&self, pose: &Pose) -> f64 {
        let pc = self.category_probability(&pose.category);
        if pc == 0.0 {
            return f64::NEG_INFINITY;
        }
        pc.ln() + von_mises::ln_density(pose.theta, self.mu_theta, self.kappa) + self.ln_planar_density(pose.x, pose.y)
    }

    fn ln_planar_density(&self, x: f64, y: f64) -> f64 {
        let [[a, b], [_, d]] = self.covariance;
        let det = a * d - b * b;
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        let maha = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * maha
    }

    /// Lower Cholesky factor of the planar covariance.
    fn cholesky(&self) -> [[f64; 2]; 2] {
        let [[a, b], [_, d]] = self.covariance;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (d - l21 * l21).sqrt();
        [[l11, 0.0], [l21, l22]]
    }
}

pub fn initial_density(model: &InitialBeliefModel, pose: &Pose) -> f64 {
    model.ln_density(pose).exp()
}

/// A probability distribution over a finite set of pose hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    poses: Vec<Pose>,
    weights: Vec<f64>,
}

impl Belief {
    /// Weights must already sum to one (within [`WEIGHT_SUM_TOL`]).
    pub fn new(poses: Vec<Pose>, weights: Vec<f64>) -> Result<Self, BeliefError> {
        Self::check_shape(&poses, &weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(BeliefError::NotNormalized(total));
        }
        Ok(Self { poses, weights })
    }

    pub fn from_unnormalized(poses: Vec<Pose>, raw: Vec<f64>) -> Result<Self, BeliefError> {
        Self::check_shape(&poses, &raw)?;
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(BeliefError::NotNormalized(total));
        }
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(Self { poses, weights })
    }

    pub fn uniform(poses: Vec<Pose>) -> Result<Self, BeliefError> {
        let n = poses.len();
        Self::from_unnormalized(poses, vec![1.0; n])
    }

    fn check_shape(poses: &[Pose], weights: &[f64]) -> Result<(), BeliefError> {
        if poses.is_empty() {
            return Err(BeliefError::Empty);
        }
        if poses.len() != weights.len() {
            return Err(BeliefError::LengthMismatch {
                poses: poses.len(),
                weights: weights.len(),
            });
        }
        let mut ids = HashSet::new();
        for (p, &w) in poses.iter().zip(weights) {
            if !ids.insert(p.id.as_str()) {
                return Err(BeliefError::DuplicatePose(p.id.clone()));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(BeliefError::BadWeight {
                    pose_id: p.id.clone(),
                    weight: w,
                });
            }
        }
        Ok(())
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn index_of(&self, pose_id: &str) -> Option<usize> {
        self.poses.iter().position(|p| p.id == pose_id)
    }

    /// Same poses, all mass on `index`.
    pub fn delta(&self, index: usize) -> Belief {
        let mut weights = vec![0.0; self.len()];
        weights[index] = 1.0;
        Belief {
            poses: self.poses.clone(),
            weights,
        }
    }

    /// `b'(p) ∝ likelihood(p) * b(p)`.
    ///
    /// A likelihood that is identical for every pose carries no
    /// information and returns the prior unchanged.
    pub fn reweight(&self, likelihoods: &[f64]) -> Result<Belief, BeliefError> {
        if likelihoods.len() != self.len() {
            return Err(BeliefError::LengthMismatch {
                poses: self.len(),
                weights: likelihoods.len(),
            });
        }
        for (p, &l) in self.poses.iter().zip(likelihoods) {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(BeliefError::BadWeight {
                    pose_id: p.id.clone(),
                    weight: l,
                });
            }
        }
        if likelihoods.iter().all(|&l| l == likelihoods[0]) {
            if likelihoods[0] > 0.0 {
                return Ok(self.clone());
            }
            return Err(BeliefError::InconsistentObservation);
        }
        let raw: Vec<f64> = self.weights.iter().zip(likelihoods).map(|(w, l)| w * l).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(BeliefError::InconsistentObservation);
        }
        Ok(Belief {
            poses: self.poses.clone(),
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn to_records(&self) -> Vec<BeliefRecord> {
        self.poses
            .iter()
            .zip(&self.weights)
            .map(|(p, &weight)| BeliefRecord {
                pose_id: p.id.clone(),
                category: p.category.clone(),
                theta: p.theta,
                x: p.x,
                y: p.y,
                weight,
            })
            .collect()
    }

    pub fn from_records(records: Vec<BeliefRecord>) -> Result<Self, BeliefError> {
        let (poses, weights) = records
            .into_iter()
            .map(|r| {
                (
                    Pose {
                        id: r.pose_id,
                        category: r.category,
                        theta: r.theta,
                        x: r.x,
                        y: r.y,
                    },
                    r.weight,
                )
            })
            .unzip();
        Self::new(poses, weights)
    }
}

/// One entry of the JSON belief serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefRecord {
    pub pose_id: String,
    pub category: String,
    pub theta: f64,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

/// Draws `n` poses from `model`. Weights are the normalized initial
/// densities of the drawn poses. Pose ids are `p0 .. p{n-1}`.
pub fn sample_pose_set<R: Rng + ?Sized>(
    model: &InitialBeliefModel,
    n: usize,
    rng: &mut R,
) -> Result<Belief, BeliefError> {
    model.validate()?;
    if n == 0 {
        return Err(BeliefError::Empty);
    }
    let categories = WeightedIndex::new(model.category_prior.iter().map(|c| c.probability))
        .map_err(|e| BeliefError::InvalidModel(format!("category_prior: {e}")))?;
    let chol = model.cholesky();
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        let c = &model.category_prior[categories.sample(rng)].category;
        let theta = von_mises::sample(model.mu_theta, model.kappa, rng);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        poses.push(Pose {
            id: format!("p{i}"),
            category: c.clone(),
            theta,
            x: model.mean[0] + chol[0][0] * z0,
            y: model.mean[1] + chol[1][0] * z0 + chol[1][1] * z1,
        });
    }
    let ln_d: Vec<f64> = poses.iter().map(|p| model.ln_density(p)).collect();
    let peak = ln_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw = ln_d.iter().map(|l| (l - peak).exp()).collect();
    Belief::from_unnormalized(poses, raw)
}

/// Posterior after receiving `observed` from `config`:
/// `b'(p) ∝ ω(f̂(p, config), observed) · b(p)`.
pub fn belief_update(
    belief: &Belief,
    observed: &Observation,
    config: &SensorConfig,
    metric: &SimilarityMetric,
    predictor: &dyn ObservationPredictor,
) -> Result<Belief, BeliefError> {
    let likelihoods = belief
        .poses()
        .iter()
        .map(|pose| {
            let predicted = predictor.predict(pose, config).map_err(|source| BeliefError::Prediction {
                pose_id: pose.id.clone(),
                source,
            })?;
            similarity(metric, &predicted, observed).map_err(|source| BeliefError::Similarity {
                pose_id: pose.id.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    belief.reweight(&likelihoods)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(kappa: f64) -> InitialBeliefModel {
        InitialBeliefModel {
            category_prior: vec![
                CategoryPrior { category: "flat".into(), probability: 0.6 },
                CategoryPrior { category: "side".into(), probability: 0.4 },
            ],
            mu_theta: 0.7,
            kappa,
            mean: [0.1, -0.2],
            covariance: [[0.01, 0.002], [0.002, 0.02]],
        }
    }

    fn pose(id: &str) -> Pose {
        Pose { id: id.into(), category: "flat".into(), theta: 0.0, x: 0.0, y: 0.0 }
    }

    #[test]
    fn uniform_angle_when_kappa_zero() {
        let m = model(0.0);
        let at = |t: f64| initial_density(&m, &Pose { theta: t, ..pose("a") });
        assert!((at(0.0) / at(2.5) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mode_is_maximal() {
        let m = model(3.0);
        let mode = Pose { id: "m".into(), category: "flat".into(), theta: 0.7, x: 0.1, y: -0.2 };
        let d0 = initial_density(&m, &mode);
        for (dt, dx, dy) in [(0.1, 0.0, 0.0), (0.0, 0.01, 0.0), (0.0, 0.0, -0.01), (-2.0, 0.05, 0.05)] {
            let p = Pose { theta: mode.theta + dt, x: mode.x + dx, y: mode.y + dy, ..mode.clone() };
            assert!(initial_density(&m, &p) < d0);
        }
    }

    #[test]
    fn planar_density_matches_closed_form() {
        let m = model(1.0);
        let p = Pose { id: "q".into(), category: "side".into(), theta: 0.2, x: 0.15, y: -0.1 };
        let (dx, dy) = (0.05, 0.1);
        let (a, b, d) = (0.01f64, 0.002f64, 0.02f64);
        let det = a * d - b * b;
        let maha = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        let gauss = (-0.5 * maha).exp() / (2.0 * PI * det.sqrt());
        let expected = 0.4 * von_mises::density(0.2, 0.7, 1.0) * gauss;
        assert!((initial_density(&m, &p) / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_validation_names_field() {
        let mut m = model(1.0);
        m.covariance = [[1.0, 2.0], [2.0, 1.0]];
        assert!(m.validate().unwrap_err().to_string().contains("covariance"));
        let mut m = model(1.0);
        m.category_prior[0].probability = 0.9;
        assert!(m.validate().unwrap_err().to_string().contains("category_prior"));
    }

    #[test]
    fn single_sample_has_unit_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_pose_set(&model(1.0), 1, &mut rng).unwrap();
        assert_eq!(b.weights(), &[1.0]);
        assert_eq!(b.poses()[0].id, "p0");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_pose_set(&model(2.0), 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_pose_set(&model(2.0), 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let s: f64 = a.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_angles_concentrate() {
        let b = sample_pose_set(&model(1e6), 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(b.poses().iter().all(|p| (p.theta - 0.7).abs() < 1e-2));
    }

    #[test]
    fn circular_mean_of_samples() {
        let m = InitialBeliefModel { kappa: 1.0, ..model(1.0) };
        let b = sample_pose_set(&m, 100_000, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let (s, c) = b
            .poses()
            .iter()
            .fold((0.0, 0.0), |(s, c), p| (s + p.theta.sin(), c + p.theta.cos()));
        let mean = s.atan2(c);
        assert!((mean - 0.7).abs() < 0.02, "circular mean {mean}");
    }

    #[test]
    fn resolve_applies_catalog_then_yaw_then_translation() {
        let catalog = StablePoseCatalog::new(vec![StablePose {
            category: "flat".into(),
            placement: RigidPlacement::from_translation(Vector3::new(1.0, 0.0, 0.5)),
        }])
        .unwrap();
        let p = Pose { id: "a".into(), category: "flat".into(), theta: PI / 2.0, x: 2.0, y: 3.0 };
        let placed = catalog.resolve(&p).unwrap();
        let origin = placed.apply(&nalgebra::Point3::origin());
        assert!((origin - nalgebra::Point3::new(2.0, 4.0, 0.5)).norm() < 1e-12);
        let unknown = Pose { category: "nope".into(), ..p };
        assert_eq!(catalog.resolve(&unknown).unwrap_err().to_string(), "unknown stable pose \"nope\"");
    }

    #[test]
    fn reweight_hand_computed() {
        let poses = (0..4).map(|i| pose(&format!("p{i}"))).collect();
        let b = Belief::new(poses, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let out = b.reweight(&[1.0, e1, e1, e2]).unwrap();
        let raw = [0.4, 0.3 * e1, 0.2 * e1, 0.1 * e2];
        let z: f64 = raw.iter().sum();
        for (w, r) in out.weights().iter().zip(raw) {
            assert!((w - r / z).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_likelihood_is_identity() {
        let b = Belief::new(vec![pose("a"), pose("b"), pose("c")], vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(b.reweight(&[0.37; 3]).unwrap(), b);
    }

    #[test]
    fn all_zero_likelihood_is_an_error() {
        let b = Belief::uniform(vec![pose("a"), pose("b")]).unwrap();
        assert!(matches!(b.reweight(&[0.0, 0.0]), Err(BeliefError::InconsistentObservation)));
        let skewed = Belief::new(vec![pose("a"), pose("b")], vec![1.0, 0.0]).unwrap();
        assert!(matches!(skewed.reweight(&[0.0, 1.0]), Err(BeliefError::InconsistentObservation)));
    }

    #[test]
    fn belief_validation() {
        assert!(matches!(Belief::new(vec![], vec![]), Err(BeliefError::Empty)));
        assert!(matches!(
            Belief::new(vec![pose("a"), pose("a")], vec![0.5, 0.5]),
            Err(BeliefError::DuplicatePose(_))
        ));
        assert!(matches!(
            Belief::new(vec![pose("a"), pose("b")], vec![0.5, 0.6]),
            Err(BeliefError::NotNormalized(_))
        ));
    }

    #[test]
    fn records_round_trip_through_json() {
        let b = Belief::new(vec![pose("a"), pose("b")], vec![0.25, 0.75]).unwrap();
        let text = serde_json::to_string(&b.to_records()).unwrap();
        let back: Vec<BeliefRecord> = serde_json::from_str(&text).unwrap();
        assert_eq!(Belief::from_records(back).unwrap(), b);
    }
}
