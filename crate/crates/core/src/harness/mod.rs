//! Scenario files, the end-to-end pipeline and the `voa` command line.

mod cli;
mod run;

pub use cli::cli;
pub use run::{
    advantages, build_cache, compute_result, eval_csv, evaluate_truth, ranking_csv, report, run_scenario,
    thread_count, voa_csv, voa_json, write_reports, ConfigEval, EvalRow, RunOutput, VoaReport,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::belief::{sample_pose_set, Belief, BeliefRecord, InitialBeliefModel, StablePose, StablePoseCatalog};
use crate::geometry::{load_obj, TriangleMesh};
use crate::grasp::{GraspScoreTable, ScoreMatrix};
use crate::sensors::{MeshPredictor, SensorConfig, SensorKind};
use crate::similarity::SimilarityMetric;
use crate::voa::{CameraRankingParams, ScoreKey, SensorConfigSet};

/// Value of the `schema` key every scenario file must carry.
pub const SCENARIO_SCHEMA: &str = "grasp-voa/scenario/v1";

/// Random streams split off the scenario seed.
pub const POSE_STREAM: u64 = 1;
pub const NOISE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad or missing input; maps to exit code 2.
    #[error("{stage}: {input}: {message}")]
    Input {
        stage: &'static str,
        input: String,
        message: String,
    },
    /// Valid input that failed during computation; exit code 1.
    #[error("{stage}: {message}")]
    Compute { stage: &'static str, message: String },
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn input(stage: &'static str, input: impl Into<String>, message: impl ToString) -> Self {
        HarnessError::Input {
            stage,
            input: input.into(),
            message: message.to_string(),
        }
    }

    pub fn compute(stage: &'static str, message: impl ToString) -> Self {
        HarnessError::Compute {
            stage,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Input { .. } => 2,
            HarnessError::Compute { .. } | HarnessError::Output { .. } => 1,
        }
    }
}

/// Observation noise for the Monte-Carlo VOA; its seed comes from the
/// scenario seed's noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub std_dev: f64,
    #[serde(default = "one_sample")]
    pub samples: usize,
}

fn one_sample() -> usize {
    1
}

/// The scenario file as written on disk. Paths are relative to the
/// file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default)]
    pub name: Option<String>,
    pub mesh: PathBuf,
    pub stable_poses: Vec<StablePose>,
    /// Sampled pose set; mutually exclusive with `belief`.
    #[serde(default)]
    pub initial_belief: Option<InitialBeliefModel>,
    #[serde(default)]
    pub samples: Option<usize>,
    /// Explicit pose set and weights as a JSON list of belief records.
    #[serde(default)]
    pub belief: Option<PathBuf>,
    pub grasp_scores: PathBuf,
    #[serde(default)]
    pub score_key: ScoreKey,
    pub sensors: Vec<SensorConfig>,
    pub metric: SimilarityMetric,
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub camera_ranking: Option<CameraRankingParams>,
}

/// A scenario with every referenced input parsed and validated.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub name: String,
    pub scenario: Scenario,
    pub predictor: MeshPredictor,
    pub belief: Belief,
    pub table: GraspScoreTable,
    pub scores: ScoreMatrix,
    pub configs: SensorConfigSet,
}

impl LoadedScenario {
    pub fn mesh(&self) -> &TriangleMesh {
        &self.predictor.mesh
    }

    pub fn config(&self, id: &str) -> Result<&SensorConfig, HarnessError> {
        self.configs
            .get(id)
            .ok_or_else(|| HarnessError::input("config", id, "no sensor config with this id"))
    }

    pub fn pose_index(&self, id: &str) -> Result<usize, HarnessError> {
        self.belief
            .index_of(id)
            .ok_or_else(|| HarnessError::input("pose", id, "no pose with this id in the belief"))
    }
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::input("scenario", path.display().to_string(), e))?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| HarnessError::input("scenario", path.display().to_string(), e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    resolve_scenario(scenario, dir, fallback)
}

/// Loads the files a parsed scenario references, relative to `dir`.
pub fn resolve_scenario(scenario: Scenario, dir: &Path, fallback_name: String) -> Result<LoadedScenario, HarnessError> {
    if scenario.schema != SCENARIO_SCHEMA {
        return Err(HarnessError::input(
            "scenario",
            "schema",
            format!("expected {SCENARIO_SCHEMA:?}, found {:?}", scenario.schema),
        ));
    }
    let mesh_path = dir.join(&scenario.mesh);
    let mesh = load_obj(&mesh_path).map_err(|e| HarnessError::input("mesh", mesh_path.display().to_string(), e))?;
    let catalog = StablePoseCatalog::new(scenario.stable_poses.clone())
        .map_err(|e| HarnessError::input("scenario", "stable_poses", e))?;

    let belief = match (&scenario.initial_belief, &scenario.belief) {
        (Some(model), None) => {
            let n = scenario
                .samples
                .ok_or_else(|| HarnessError::input("scenario", "samples", "required with initial_belief"))?;
            let mut rng = stream_rng(scenario.seed, POSE_STREAM);
            sample_pose_set(model, n, &mut rng).map_err(|e| HarnessError::input("scenario", "initial_belief", e))?
        }
        (None, Some(file)) => {
            if scenario.samples.is_some() {
                return Err(HarnessError::input("scenario", "samples", "only valid with initial_belief"));
            }
            let p = dir.join(file);
            let text = fs::read_to_string(&p).map_err(|e| HarnessError::input("belief", p.display().to_string(), e))?;
            let records: Vec<BeliefRecord> =
                serde_json::from_str(&text).map_err(|e| HarnessError::input("belief", p.display().to_string(), e))?;
            Belief::from_records(records).map_err(|e| HarnessError::input("belief", p.display().to_string(), e))?
        }
        _ => {
            return Err(HarnessError::input(
                "scenario",
                "initial_belief",
                "exactly one of initial_belief and belief must be given",
            ))
        }
    };
    for pose in belief.poses() {
        if catalog.get(&pose.category).is_none() {
            return Err(HarnessError::input(
                "belief",
                pose.id.clone(),
                format!("category {:?} is not in stable_poses", pose.category),
            ));
        }
    }

    let grasp_path = dir.join(&scenario.grasp_scores);
    let file = fs::File::open(&grasp_path)
        .map_err(|e| HarnessError::input("grasp_scores", grasp_path.display().to_string(), e))?;
    let table = GraspScoreTable::from_csv(file)
        .map_err(|e| HarnessError::input("grasp_scores", grasp_path.display().to_string(), e))?;
    let scores = match scenario.score_key {
        ScoreKey::Category => table.align_by_category(belief.poses()),
        ScoreKey::PoseId => table.align(belief.poses()),
    }
    .map_err(|e| HarnessError::input("grasp_scores", grasp_path.display().to_string(), e))?;

    for c in &scenario.sensors {
        c.validate().map_err(|e| HarnessError::input("sensors", c.id.clone(), e))?;
    }
    let configs = SensorConfigSet::new(scenario.sensors.clone()).map_err(|e| HarnessError::input("scenario", "sensors", e))?;
    scenario.metric.validate().map_err(|e| HarnessError::input("scenario", "metric", e))?;
    if scenario.metric.requires_depth() && configs.kind() == SensorKind::Lidar {
        return Err(HarnessError::input(
            "scenario",
            "metric",
            format!("{} requires camera sensors", scenario.metric.name()),
        ));
    }
    if let Some(noise) = &scenario.noise {
        if !(noise.std_dev >= 0.0 && noise.std_dev.is_finite()) || noise.samples == 0 {
            return Err(HarnessError::input("scenario", "noise", "std_dev must be >= 0 and samples >= 1"));
        }
    }
    if let Some(params) = &scenario.camera_ranking {
        params.validate().map_err(|e| HarnessError::input("scenario", "camera_ranking", e))?;
        if configs.kind() != SensorKind::Camera {
            return Err(HarnessError::input("scenario", "camera_ranking", "requires camera sensors"));
        }
    }

    Ok(LoadedScenario {
        name: scenario.name.clone().unwrap_or(fallback_name),
        predictor: MeshPredictor::new(mesh, catalog),
        belief,
        table,
        scores,
        configs,
        scenario,
    })
}

pub fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
