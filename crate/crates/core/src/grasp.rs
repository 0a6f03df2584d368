//! Empirical grasp-score tables and the actor's expected-score decision rule.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Belief, Pose};

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("no score for grasp {grasp:?} at pose {pose:?}")]
    MissingEntry { grasp: String, pose: String },
    #[error("unknown grasp {0:?}")]
    UnknownGrasp(String),
    #[error("score for grasp {grasp:?} at pose {pose:?} is {value}, expected a probability")]
    OutOfRange { grasp: String, pose: String, value: f64 },
    #[error("duplicate {what} id {id:?}")]
    Duplicate { what: &'static str, id: String },
    #[error("grasp table has no {0}")]
    Empty(&'static str),
    #[error("grasp table row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `γ[g][p]`: probability that grasp `g` succeeds on an object at pose `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspScoreTable {
    grasp_ids: Vec<String>,
    pose_ids: Vec<String>,
    /// Row per grasp, column per pose.
    scores: Vec<Vec<f64>>,
    pose_index: HashMap<String, usize>,
}

impl GraspScoreTable {
    pub fn new(grasp_ids: Vec<String>, pose_ids: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self, GraspError> {
        if grasp_ids.is_empty() {
            return Err(GraspError::Empty("grasps"));
        }
        if pose_ids.is_empty() {
            return Err(GraspError::Empty("poses"));
        }
        index_ids(&grasp_ids, "grasp")?;
        let pose_index = index_ids(&pose_ids, "pose")?;
        if scores.len() != grasp_ids.len() {
            return Err(GraspError::Malformed {
                row: 0,
                reason: format!("{} grasp ids but {} score rows", grasp_ids.len(), scores.len()),
            });
        }
        for (g, row) in scores.iter().enumerate() {
            if row.len() != pose_ids.len() {
                return Err(GraspError::MissingEntry {
                    grasp: grasp_ids[g].clone(),
                    pose: pose_ids.get(row.len()).cloned().unwrap_or_default(),
                });
            }
            for (p, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(GraspError::OutOfRange {
                        grasp: grasp_ids[g].clone(),
                        pose: pose_ids[p].clone(),
                        value,
                    });
                }
            }
        }
        Ok(Self {
            grasp_ids,
            pose_ids,
            scores,
            pose_index,
        })
    }

    pub fn grasp_ids(&self) -> &[String] {
        &self.grasp_ids
    }

    pub fn pose_ids(&self) -> &[String] {
        &self.pose_ids
    }

    pub fn grasp_index(&self, grasp: &str) -> Result<usize, GraspError> {
        self.grasp_ids
            .iter()
            .position(|g| g == grasp)
            .ok_or_else(|| GraspError::UnknownGrasp(grasp.to_string()))
    }

    pub fn score(&self, grasp: &str, pose: &str) -> Result<f64, GraspError> {
        let g = self.grasp_index(grasp)?;
        let p = self.pose_index.get(pose).ok_or_else(|| GraspError::MissingEntry {
            grasp: grasp.to_string(),
            pose: pose.to_string(),
        })?;
        Ok(self.scores[g][*p])
    }

    /// Dense scores aligned with `poses`, looked up by pose id.
    pub fn align(&self, poses: &[Pose]) -> Result<ScoreMatrix, GraspError> {
        self.align_by(poses, |p| p.id.as_str())
    }

    /// Dense scores aligned with `poses`, looked up by stable-pose category.
    pub fn align_by_category(&self, poses: &[Pose]) -> Result<ScoreMatrix, GraspError> {
        self.align_by(poses, |p| p.category.as_str())
    }

    fn align_by<'a>(&self, poses: &'a [Pose], key: impl Fn(&'a Pose) -> &'a str) -> Result<ScoreMatrix, GraspError> {
        let cols = poses
            .iter()
            .map(|p| {
                self.pose_index.get(key(p)).copied().ok_or_else(|| GraspError::MissingEntry {
                    grasp: self.grasp_ids[0].clone(),
                    pose: key(p).to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scores = self
            .scores
            .iter()
            .map(|row| cols.iter().map(|&c| row[c]).collect())
            .collect();
        Ok(ScoreMatrix {
            grasp_ids: self.grasp_ids.clone(),
            scores,
        })
    }

    /// Rows are poses, columns are grasps: `pose,<grasp>,<grasp>,...`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, GraspError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(GraspError::Empty("grasps"));
        }
        let grasp_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut pose_ids = Vec::new();
        let mut scores = vec![Vec::new(); grasp_ids.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            if rec.len() != header.len() {
                return Err(GraspError::Malformed {
                    row,
                    reason: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            pose_ids.push(rec[0].to_string());
            for (g, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field.parse().map_err(|_| GraspError::Malformed {
                    row,
                    reason: format!("score {field:?} for grasp {:?} is not a number", grasp_ids[g]),
                })?;
                scores[g].push(v);
            }
        }
        Self::new(grasp_ids, pose_ids, scores)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GraspError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["pose".to_string()];
        header.extend(self.grasp_ids.iter().cloned());
        w.write_record(&header)?;
        for (p, pose) in self.pose_ids.iter().enumerate() {
            let mut rec = vec![pose.clone()];
            rec.extend(self.scores.iter().map(|row| row[p].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Success ratios from raw attempt records. Every (pose, grasp) pair
    /// seen anywhere in the log must have at least one attempt.
    pub fn from_attempts(attempts: &[GraspAttempt]) -> Result<Self, GraspError> {
        let mut tally: BTreeMap<(&str, &str), (u32, u32)> = BTreeMap::new();
        let mut poses: Vec<String> = Vec::new();
        let mut grasps: Vec<String> = Vec::new();
        for a in attempts {
            if !poses.contains(&a.pose) {
                poses.push(a.pose.clone());
            }
            if !grasps.contains(&a.grasp) {
                grasps.push(a.grasp.clone());
            }
            let e = tally.entry((a.pose.as_str(), a.grasp.as_str())).or_default();
            e.0 += a.success as u32;
            e.1 += 1;
        }
        let scores = grasps
            .iter()
            .map(|g| {
                poses
                    .iter()
                    .map(|p| {
                        tally
                            .get(&(p.as_str(), g.as_str()))
                            .map(|&(s, n)| s as f64 / n as f64)
                            .ok_or_else(|| GraspError::MissingEntry {
                                grasp: g.clone(),
                                pose: p.clone(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(grasps, poses, scores)
    }

    /// Reads `pose,grasp,success` rows with `success ∈ {0, 1}`.
    pub fn attempts_from_csv<R: Read>(input: R) -> Result<Vec<GraspAttempt>, GraspError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut out = Vec::new();
        for (i, rec) in rdr.deserialize::<AttemptRow>().enumerate() {
            let rec = rec?;
            let success = match rec.success {
                0 => false,
                1 => true,
                other => {
                    return Err(GraspError::Malformed {
                        row: i + 2,
                        reason: format!("success must be 0 or 1, found {other}"),
                    })
                }
            };
            out.push(GraspAttempt {
                pose: rec.pose,
                grasp: rec.grasp,
                success,
            });
        }
        Ok(out)
    }
}

fn index_ids(ids: &[String], what: &'static str) -> Result<HashMap<String, usize>, GraspError> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(GraspError::Duplicate { what, id: id.clone() });
        }
    }
    Ok(map)
}

#[derive(Debug, Deserialize)]
struct AttemptRow {
    pose: String,
    grasp: String,
    success: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspAttempt {
    pub pose: String,
    pub grasp: String,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspChoice {
    pub grasp_id: String,
    pub expected_score: f64,
}

/// Grasp scores aligned with a belief's pose order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    grasp_ids: Vec<String>,
    /// `scores[g][i]` for grasp `g` and the `i`-th pose.
    scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn grasp_ids(&self) -> &[String] {
        &self.grasp_ids
    }

    pub fn score(&self, grasp: usize, pose: usize) -> f64 {
        self.scores[grasp][pose]
    }

    pub fn pose_count(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// `Σ_i w_i γ(g, p_i)`, summed in pose order.
    pub fn expected(&self, grasp: usize, weights: &[f64]) -> f64 {
        self.scores[grasp].iter().zip(weights).map(|(s, w)| w * s).sum()
    }

    /// Index and value of the maximal grasp; exact ties go to the
    /// lexicographically smallest grasp id.
    pub fn maximal(&self, weights: &[f64]) -> (usize, f64) {
        let mut best = (0, self.expected(0, weights));
        for g in 1..self.grasp_ids.len() {
            let v = self.expected(g, weights);
            if v > best.1 || (v == best.1 && self.grasp_ids[g] < self.grasp_ids[best.0]) {
                best = (g, v);
            }
        }
        best
    }
}

pub fn expected_grasp_score(table: &GraspScoreTable, grasp: &str, belief: &Belief) -> Result<f64, GraspError> {
    let aligned = table.align(belief.poses())?;
    let g = table.grasp_index(grasp)?;
    Ok(aligned.expected(g, belief.weights()))
}

pub fn maximal_grasp(table: &GraspScoreTable, belief: &Belief) -> Result<GraspChoice, GraspError> {
    let aligned = table.align(belief.poses())?;
    let (g, v) = aligned.maximal(belief.weights());
    Ok(GraspChoice {
        grasp_id: aligned.grasp_ids[g].clone(),
        expected_score: v,
    })
}
