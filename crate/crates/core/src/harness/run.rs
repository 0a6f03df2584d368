use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::Serialize;

use super::{stream_rng, HarnessError, LoadedScenario, NOISE_STREAM};
use crate::belief::belief_update;
use crate::eval::{advantage, intervention_metrics, mean_defined, EvalMetrics};
use crate::voa::{
    precompute, rank_camera_configs, select_config, ObservationNoise, PrecomputedObservations, RankedCamera,
    VoaInputs, VoaResult,
};

/// Contents of `voa-report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoaReport {
    pub scenario: String,
    pub metric: String,
    pub seed: u64,
    pub pose_count: usize,
    #[serde(flatten)]
    pub result: VoaResult,
}

/// Realized outcome of one config when the object is at a designated
/// true pose.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEval {
    pub config_id: String,
    pub initial_grasp: String,
    pub final_grasp: String,
    pub best_grasp: String,
    pub metrics: EvalMetrics,
}

/// One line of `eval-report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub config_id: String,
    pub selected: bool,
    /// `per_pose` (plain mean over true poses) or `belief_weighted`.
    pub aggregation: &'static str,
    pub delta: f64,
    pub delta_star: Option<f64>,
    pub advantage: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: VoaReport,
    pub eval: Vec<EvalRow>,
    pub cache: PrecomputedObservations,
    pub ranking: Option<Vec<RankedCamera>>,
}

/// Reads `VOA_THREADS`; unset or 0 means one thread per core.
pub fn thread_count() -> Result<usize, HarnessError> {
    match std::env::var("VOA_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::input("environment", "VOA_THREADS", format!("expected a count, found {v:?}"))),
    }
}

pub fn build_cache(loaded: &LoadedScenario) -> Result<PrecomputedObservations, HarnessError> {
    precompute(
        loaded.belief.poses(),
        loaded.configs.configs(),
        &loaded.predictor,
        Some(&loaded.scenario.metric),
    )
    .map_err(|e| HarnessError::compute("predict", e))
}

pub fn compute_result(
    loaded: &LoadedScenario,
    cache: &PrecomputedObservations,
    threads: usize,
) -> Result<VoaResult, HarnessError> {
    let mut inputs = VoaInputs::with_scores(
        &loaded.belief,
        &loaded.belief,
        loaded.scores.clone(),
        &loaded.scenario.metric,
        &loaded.predictor,
    )
    .map_err(|e| HarnessError::compute("voa", e))?;
    if let Some(noise) = loaded.scenario.noise {
        let seed = stream_rng(loaded.scenario.seed, NOISE_STREAM).next_u64();
        inputs = inputs
            .with_noise(ObservationNoise {
                std_dev: noise.std_dev,
                samples: noise.samples,
                seed,
            })
            .map_err(|e| HarnessError::input("scenario", "noise", e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::compute("voa", e))?;
    pool.install(|| select_config(&inputs, &loaded.configs, Some(cache)))
        .map_err(|e| HarnessError::compute("voa", e))
}

pub fn report(loaded: &LoadedScenario, result: VoaResult) -> VoaReport {
    VoaReport {
        scenario: loaded.name.clone(),
        metric: loaded.scenario.metric.name().to_string(),
        seed: loaded.scenario.seed,
        pose_count: loaded.belief.len(),
        result,
    }
}

/// Realized δ and δ* for every config when the object is at pose index
/// `truth`: the actor starts from the shared-belief maximal grasp, updates
/// on the noiseless observation of the true pose, and is compared with
/// the best grasp for that pose. Scores are taken at the true pose, so the
/// belief-weighted mean of δ over all truths is the config's VOA.
pub fn evaluate_truth(
    loaded: &LoadedScenario,
    cache: &PrecomputedObservations,
    truth: usize,
) -> Result<Vec<ConfigEval>, HarnessError> {
    let scores = &loaded.scores;
    let ids = scores.grasp_ids();
    let belief = &loaded.belief;
    let pose = &belief.poses()[truth];
    let at_truth = belief.delta(truth);
    let (gi, _) = scores.maximal(belief.weights());
    let mut gs = 0;
    for g in 1..ids.len() {
        let (v, best) = (scores.score(g, truth), scores.score(gs, truth));
        if v > best || (v == best && ids[g] < ids[gs]) {
            gs = g;
        }
    }
    loaded
        .configs
        .configs()
        .iter()
        .map(|config| {
            let observed = cache.get(&pose.id, &config.id).ok_or_else(|| {
                HarnessError::compute("eval", format!("no cached observation for pose {:?}, config {:?}", pose.id, config.id))
            })?;
            let posterior = belief_update(belief, observed, config, &loaded.scenario.metric, cache).map_err(|e| {
                HarnessError::compute("eval", format!("config {:?}, true pose {:?}: {e}", config.id, pose.id))
            })?;
            let (gf, _) = scores.maximal(posterior.weights());
            let metrics = intervention_metrics(scores, &at_truth, &ids[gi], &ids[gf], &ids[gs])
                .map_err(|e| HarnessError::compute("eval", e))?;
            Ok(ConfigEval {
                config_id: config.id.clone(),
                initial_grasp: ids[gi].clone(),
                final_grasp: ids[gf].clone(),
                best_grasp: ids[gs].clone(),
                metrics,
            })
        })
        .collect()
}

/// `𝒜` for each config given each config's δ*.
pub fn advantages(evals: &[ConfigEval]) -> Vec<Option<f64>> {
    let all: Vec<Option<f64>> = evals.iter().map(|e| e.metrics.delta_star).collect();
    all.iter().map(|&d| advantage(d, &all)).collect()
}

/// Aggregates realized metrics over every pose taken as the truth, both as
/// a plain per-pose mean and weighted by the shared belief.
/// (delta, delta*) per config for one aggregation.
type Aggregate = (&'static str, Vec<(f64, Option<f64>)>);

fn eval_rows(loaded: &LoadedScenario, cache: &PrecomputedObservations, selected: &str) -> Result<Vec<EvalRow>, HarnessError> {
    let n = loaded.belief.len();
    let per_truth = (0..n).map(|t| evaluate_truth(loaded, cache, t)).collect::<Result<Vec<_>, _>>()?;
    let configs = loaded.configs.configs();
    let weights = loaded.belief.weights();

    let mut aggregated: Vec<Aggregate> = Vec::new();
    let per_pose = (0..configs.len())
        .map(|k| {
            let deltas: Vec<f64> = per_truth.iter().map(|e| e[k].metrics.delta).collect();
            let stars: Vec<Option<f64>> = per_truth.iter().map(|e| e[k].metrics.delta_star).collect();
            (deltas.iter().sum::<f64>() / n as f64, mean_defined(&stars))
        })
        .collect();
    aggregated.push(("per_pose", per_pose));
    let weighted = (0..configs.len())
        .map(|k| {
            let delta = per_truth.iter().zip(weights).map(|(e, w)| w * e[k].metrics.delta).sum();
            let (mut num, mut den) = (0.0, 0.0);
            for (e, w) in per_truth.iter().zip(weights) {
                if let Some(s) = e[k].metrics.delta_star {
                    num += w * s;
                    den += w;
                }
            }
            (delta, (den > 0.0).then(|| num / den))
        })
        .collect();
    aggregated.push(("belief_weighted", weighted));

    let mut rows = Vec::new();
    for (aggregation, values) in aggregated {
        let stars: Vec<Option<f64>> = values.iter().map(|v| v.1).collect();
        for (config, &(delta, delta_star)) in configs.iter().zip(&values) {
            rows.push(EvalRow {
                config_id: config.id.clone(),
                selected: config.id == selected,
                aggregation,
                delta,
                delta_star,
                advantage: advantage(delta_star, &stars),
            });
        }
    }
    Ok(rows)
}

/// Runs the whole pipeline: predictions, VOA per config, selection,
/// realized evaluation and (for cameras) the placement ranking.
pub fn run_scenario(loaded: &LoadedScenario, threads: usize) -> Result<RunOutput, HarnessError> {
    let cache = build_cache(loaded)?;
    let result = compute_result(loaded, &cache, threads)?;
    let eval = eval_rows(loaded, &cache, &result.selected)?;
    let ranking = loaded
        .scenario
        .camera_ranking
        .map(|params| rank_camera_configs(loaded.configs.configs(), &params));
    Ok(RunOutput {
        report: report(loaded, result),
        eval,
        cache,
        ranking,
    })
}

fn write_file(path: PathBuf, bytes: Vec<u8>) -> Result<(), HarnessError> {
    fs::write(&path, bytes).map_err(|source| HarnessError::Output { path, source })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| HarnessError::compute("report", e))?;
    Ok(buf)
}

pub fn optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn voa_json(report: &VoaReport) -> Result<Vec<u8>, HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| HarnessError::compute("report", e))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn voa_csv(result: &VoaResult) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["config", "voa", "selected"])?;
        for c in &result.configs {
            w.write_record([c.config_id.clone(), c.voa.to_string(), (c.config_id == result.selected).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn eval_csv(object: &str, metric: &str, rows: &[EvalRow]) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "object",
            "metric",
            "config",
            "selected",
            "aggregation",
            "delta",
            "delta_star",
            "delta_star_defined",
            "advantage",
            "advantage_defined",
        ])?;
        for r in rows {
            w.write_record([
                object.to_string(),
                metric.to_string(),
                r.config_id.clone(),
                r.selected.to_string(),
                r.aggregation.to_string(),
                r.delta.to_string(),
                optional(r.delta_star),
                r.delta_star.is_some().to_string(),
                optional(r.advantage),
                r.advantage.is_some().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn ranking_csv(ranking: &[RankedCamera]) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["config", "score", "distance", "deviation_px"])?;
        for r in ranking {
            w.write_record([r.config_id.clone(), r.score.to_string(), r.distance.to_string(), optional(r.deviation)])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes every report of a run into `dir`.
pub fn write_reports(dir: &Path, loaded: &LoadedScenario, out: &RunOutput) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_file(dir.join("voa-report.json"), voa_json(&out.report)?)?;
    write_file(dir.join("voa.csv"), voa_csv(&out.report.result)?)?;
    write_file(
        dir.join("eval-report.csv"),
        eval_csv(&loaded.name, &out.report.metric, &out.eval)?,
    )?;
    for config in loaded.configs.configs() {
        if let Some(s) = out.cache.similarity_matrix(&config.id) {
            write_file(dir.join(format!("simmat-{}.csv", config.id)), csv_bytes(|b| s.write_csv(b))?)?;
        }
    }
    let cache = out.cache.to_json().map_err(|e| HarnessError::compute("report", e))?;
    write_file(dir.join("observations.json"), cache.into_bytes())?;
    let mut belief = serde_json::to_vec_pretty(&loaded.belief.to_records()).map_err(|e| HarnessError::compute("report", e))?;
    belief.push(b'\n');
    write_file(dir.join("belief.json"), belief)?;
    if let Some(r) = &out.ranking {
        write_file(dir.join("camera-ranking.csv"), ranking_csv(r)?)?;
    }
    Ok(())
}
