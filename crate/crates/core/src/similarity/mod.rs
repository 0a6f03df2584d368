//! Observation similarity scores ω(a, b) ∈ [0, 1].
//!
//! Every metric is exactly symmetric: each one is computed from
//! quantities that are symmetric under IEEE arithmetic (absolute
//! differences, commutative products), never from an ordered pair.

mod matrix;
mod moments;
mod ssim;

pub use matrix::{similarity_matrix, SimilarityMatrix};
pub use moments::{hu_moments, moment_shape_distance};
pub use ssim::structure_similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::{mask_from_depth, Observation, SensorKind};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("cannot compare {left:?} observation with {right:?} observation")]
    KindMismatch { left: SensorKind, right: SensorKind },
    #[error("observation shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("metric {metric} requires depth images")]
    RequiresDepth { metric: &'static str },
    #[error("invalid metric parameter {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

/// The six belief-update similarity functions (τ1–τ6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "MetricRepr")]
pub enum SimilarityMetric {
    /// τ1: 1 when every cell agrees within `margin`, else 0.
    MarginDeterministic { margin: f64 },
    /// τ2: `exp(-‖a - b‖₂)`.
    ExpNegNorm,
    /// τ3: `exp(-‖a - b‖² / 2σ²)`, an isotropic Gaussian without its
    /// normalizing constant.
    GaussianLikelihood {
        sigma: f64,
    },
    /// τ4: windowed SSIM structure term on depth images.
    WindowedSsimStructure {
        window: usize,
        stride: usize,
        c2: f64,
        /// Depth normalization divisor; the larger maximum of the two
        /// images when absent.
        depth_range: Option<f64>,
    },
    /// τ5: IoU of the object masks.
    MaskIou,
    /// τ6: `exp(-d)` with `d` the log-Hu-moment distance of the masks.
    MomentShapeMatch,
}

/// Deserialization mirror of [`SimilarityMetric`]. Parameterless metrics
/// are empty struct variants here so unknown keys are rejected for them
/// too.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum MetricRepr {
    MarginDeterministic {
        margin: f64,
    },
    ExpNegNorm {},
    GaussianLikelihood {
        #[serde(default = "one")]
        sigma: f64,
    },
    WindowedSsimStructure {
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default = "default_window")]
        stride: usize,
        #[serde(default = "default_c2")]
        c2: f64,
        #[serde(default)]
        depth_range: Option<f64>,
    },
    MaskIou {},
    MomentShapeMatch {},
}

impl From<MetricRepr> for SimilarityMetric {
    fn from(r: MetricRepr) -> Self {
        match r {
            MetricRepr::MarginDeterministic { margin } => Self::MarginDeterministic { margin },
            MetricRepr::ExpNegNorm {} => Self::ExpNegNorm,
            MetricRepr::GaussianLikelihood { sigma } => Self::GaussianLikelihood { sigma },
            MetricRepr::WindowedSsimStructure { window, stride, c2, depth_range } => Self::WindowedSsimStructure {
                window,
                stride,
                c2,
                depth_range,
            },
            MetricRepr::MaskIou {} => Self::MaskIou,
            MetricRepr::MomentShapeMatch {} => Self::MomentShapeMatch,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_window() -> usize {
    8
}

fn default_c2() -> f64 {
    1e-4
}

impl SimilarityMetric {
    /// τ4 with the default 8x8 windows, stride 8 and c₂ = 1e-4.
    pub fn ssim_structure() -> Self {
        SimilarityMetric::WindowedSsimStructure {
            window: default_window(),
            stride: default_window(),
            c2: default_c2(),
            depth_range: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimilarityMetric::MarginDeterministic { .. } => "margin_deterministic",
            SimilarityMetric::ExpNegNorm => "exp_neg_norm",
            SimilarityMetric::GaussianLikelihood { .. } => "gaussian_likelihood",
            SimilarityMetric::WindowedSsimStructure { .. } => "windowed_ssim_structure",
            SimilarityMetric::MaskIou => "mask_iou",
            SimilarityMetric::MomentShapeMatch => "moment_shape_match",
        }
    }

    /// Whether this metric only accepts depth images.
    pub fn requires_depth(&self) -> bool {
        matches!(
            self,
            SimilarityMetric::WindowedSsimStructure { .. } | SimilarityMetric::MaskIou | SimilarityMetric::MomentShapeMatch
        )
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        let invalid = |field, reason: &str| {
            Err(SimilarityError::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        match *self {
            SimilarityMetric::MarginDeterministic { margin } if !(margin > 0.0 && margin.is_finite()) => {
                invalid("margin", "must be positive")
            }
            SimilarityMetric::GaussianLikelihood { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                invalid("sigma", "must be positive")
            }
            SimilarityMetric::WindowedSsimStructure { window, stride, c2, depth_range } => {
                if window < 2 {
                    return invalid("window", "must be at least 2");
                }
                if stride == 0 {
                    return invalid("stride", "must be at least 1");
                }
                if !(c2 > 0.0 && c2.is_finite()) {
                    return invalid("c2", "must be positive");
                }
                if let Some(r) = depth_range {
                    if !(r > 0.0 && r.is_finite()) {
                        return invalid("depth_range", "must be positive");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn check_compatible(a: &Observation, b: &Observation) -> Result<(), SimilarityError> {
    if a.kind() != b.kind() {
        return Err(SimilarityError::KindMismatch {
            left: a.kind(),
            right: b.kind(),
        });
    }
    if a.shape() != b.shape() {
        return Err(SimilarityError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs().powi(2)).sum()
}

pub fn similarity(metric: &SimilarityMetric, a: &Observation, b: &Observation) -> Result<f64, SimilarityError> {
    metric.validate()?;
    check_compatible(a, b)?;
    let (va, vb) = (a.values(), b.values());
    let depth_pair = || match (a, b) {
        (Observation::Depth(x), Observation::Depth(y)) => Ok((x, y)),
        _ => Err(SimilarityError::RequiresDepth { metric: metric.name() }),
    };
    let score = match *metric {
        SimilarityMetric::MarginDeterministic { margin } => {
            let within = va.iter().zip(vb).all(|(x, y)| (x - y).abs() <= margin);
            if within {
                1.0
            } else {
                0.0
            }
        }
        SimilarityMetric::ExpNegNorm => (-squared_distance(va, vb).sqrt()).exp(),
        SimilarityMetric::GaussianLikelihood { sigma } => (-squared_distance(va, vb) / (2.0 * sigma * sigma)).exp(),
        SimilarityMetric::WindowedSsimStructure { window, stride, c2, depth_range } => {
            let (x, y) = depth_pair()?;
            structure_similarity(x, y, window, stride, c2, depth_range)
        }
        SimilarityMetric::MaskIou => {
            let (x, y) = depth_pair()?;
            mask_iou(&mask_from_depth(x), &mask_from_depth(y))
        }
        SimilarityMetric::MomentShapeMatch => {
            let (x, y) = depth_pair()?;
            match moment_shape_distance(&mask_from_depth(x), &mask_from_depth(y)) {
                Some(d) => (-d).exp(),
                None => 0.0,
            }
        }
    };
    Ok(score.clamp(0.0, 1.0))
}

/// `|A ∩ B| / |A ∪ B|`, 1 when both masks are empty.
pub fn mask_iou(a: &crate::sensors::Mask, b: &crate::sensors::Mask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
