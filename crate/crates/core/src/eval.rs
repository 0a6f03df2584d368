//! Intervention-quality measures comparing grasp choices before and
//! after an observation.

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::grasp::{GraspError, ScoreMatrix};

/// `delta` is the expected score gain of the final grasp over the initial
/// one; `delta_star` divides it by the gain of the best grasp, and is
/// `None` when that gain is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub delta: f64,
    pub delta_star: Option<f64>,
}

/// `δ = E_b[γ(g_f) - γ(g_i)]` and `δ* = δ / E_b[γ(g*) - γ(g_i)]`.
///
/// `scores` must be aligned with `belief`'s pose order.
pub fn intervention_metrics(
    scores: &ScoreMatrix,
    belief: &Belief,
    initial: &str,
    final_grasp: &str,
    best: &str,
) -> Result<EvalMetrics, GraspError> {
    let index = |id: &str| {
        scores
            .grasp_ids()
            .iter()
            .position(|g| g == id)
            .ok_or_else(|| GraspError::UnknownGrasp(id.to_string()))
    };
    let (gi, gf, gs) = (index(initial)?, index(final_grasp)?, index(best)?);
    let gain = |g: usize| -> f64 {
        belief
            .weights()
            .iter()
            .enumerate()
            .map(|(p, w)| w * (scores.score(g, p) - scores.score(gi, p)))
            .sum()
    };
    let delta = gain(gf);
    let denom = gain(gs);
    Ok(EvalMetrics {
        delta,
        delta_star: (denom != 0.0).then(|| delta / denom),
    })
}

/// `𝒜 = δ*(selected) / mean(δ*)` over the defined entries of `all`.
/// `None` when the selected value is undefined, no entry is defined, or
/// the mean is zero.
pub fn advantage(selected: Option<f64>, all: &[Option<f64>]) -> Option<f64> {
    let selected = selected?;
    let defined: Vec<f64> = all.iter().flatten().copied().collect();
    if defined.is_empty() {
        return None;
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    (mean != 0.0).then(|| selected / mean)
}

/// Mean of the defined entries, `None` if there are none.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}
