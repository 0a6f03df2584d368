use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::run::{ensure_dir, optional};
use super::{
    advantages, build_cache, compute_result, eval_csv, evaluate_truth, load_scenario, ranking_csv, report,
    run_scenario, thread_count, voa_csv, voa_json, write_reports, EvalRow, HarnessError, VoaReport,
};
use crate::voa::rank_camera_configs;

#[derive(Debug, Parser)]
#[command(name = "voa", version, about = "Value of Assistance for helper sensing before a grasp")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the predicted observation of one pose under one config as CSV.
    PredictObs {
        scenario: PathBuf,
        #[arg(long)]
        pose: String,
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the pairwise similarity matrix of all poses under one config.
    Simmat {
        scenario: PathBuf,
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the VOA of every config and the selected one.
    Voa {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print only the selected config id.
    Select {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Realized δ, δ* and 𝒜 for every config given the true pose.
    Eval {
        scenario: PathBuf,
        #[arg(long)]
        truth: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank camera configs by the placement heuristic.
    RankCams {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and write every report.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "voa-out")]
        out: PathBuf,
    },
}

/// Entry point of the `voa` binary. Returns the process exit code: 0 on
/// success, 2 for usage or input errors, 1 for computation errors.
pub fn cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match dispatch(parsed.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn print(stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), HarnessError> {
    stdout.write_all(bytes).map_err(|source| HarnessError::Output {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn save(dir: &Path, name: &str, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| HarnessError::Output {
        path: path.clone(),
        source,
    })?;
    print(stdout, format!("wrote {}\n", path.display()).as_bytes())
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    match command {
        Command::PredictObs {
            scenario,
            pose,
            config,
            out,
        } => {
            let loaded = load_scenario(&scenario)?;
            let p = &loaded.belief.poses()[loaded.pose_index(&pose)?];
            let c = loaded.config(&config)?;
            let obs = crate::sensors::ObservationPredictor::predict(&loaded.predictor, p, c)
                .map_err(|e| HarnessError::compute("predict", e))?;
            let mut buf = Vec::new();
            obs.write_csv(&mut buf).map_err(|e| HarnessError::compute("predict", e))?;
            match out {
                Some(dir) => save(&dir, &format!("obs-{pose}-{config}.csv"), &buf, stdout),
                None => print(stdout, &buf),
            }
        }
        Command::Simmat { scenario, config, out } => {
            let loaded = load_scenario(&scenario)?;
            loaded.config(&config)?;
            let cache = build_cache(&loaded)?;
            let s = cache
                .similarity_matrix(&config)
                .ok_or_else(|| HarnessError::compute("similarity", format!("no matrix for config {config:?}")))?;
            let mut buf = Vec::new();
            s.write_csv(&mut buf).map_err(|e| HarnessError::compute("similarity", e))?;
            match out {
                Some(dir) => save(&dir, &format!("simmat-{config}.csv"), &buf, stdout),
                None => print(stdout, &buf),
            }
        }
        Command::Voa { scenario, out } => {
            let rep = voa_report(&scenario)?;
            let mut text = format!(
                "baseline grasp {} (expected score {})\n{:<16} {}\n",
                rep.result.baseline_grasp, rep.result.baseline_score, "config", "voa"
            );
            for c in &rep.result.configs {
                let mark = if c.config_id == rep.result.selected { " *" } else { "" };
                text.push_str(&format!("{:<16} {}{mark}\n", c.config_id, c.voa));
            }
            text.push_str(&format!("selected {}\n", rep.result.selected));
            print(stdout, text.as_bytes())?;
            if let Some(dir) = out {
                save(&dir, "voa-report.json", &voa_json(&rep)?, stdout)?;
                save(&dir, "voa.csv", &voa_csv(&rep.result)?, stdout)?;
            }
            Ok(())
        }
        Command::Select { scenario, out } => {
            let rep = voa_report(&scenario)?;
            print(stdout, format!("{}\n", rep.result.selected).as_bytes())?;
            if let Some(dir) = out {
                save(&dir, "voa-report.json", &voa_json(&rep)?, stdout)?;
            }
            Ok(())
        }
        Command::Eval { scenario, truth, out } => {
            let loaded = load_scenario(&scenario)?;
            let t = loaded.pose_index(&truth)?;
            let threads = thread_count()?;
            let cache = build_cache(&loaded)?;
            let result = compute_result(&loaded, &cache, threads)?;
            let evals = evaluate_truth(&loaded, &cache, t)?;
            let adv = advantages(&evals);
            let mut text = format!(
                "true pose {truth}\n{:<16} {:<8} {:<8} {:<8} {:<24} {:<24} {}\n",
                "config", "g_i", "g_f", "g*", "delta", "delta*", "advantage"
            );
            let mut rows = Vec::new();
            for (e, a) in evals.iter().zip(&adv) {
                let mark = if e.config_id == result.selected { " *" } else { "" };
                text.push_str(&format!(
                    "{:<16} {:<8} {:<8} {:<8} {:<24} {:<24} {}{mark}\n",
                    e.config_id,
                    e.initial_grasp,
                    e.final_grasp,
                    e.best_grasp,
                    e.metrics.delta,
                    or_undefined(e.metrics.delta_star),
                    or_undefined(*a),
                ));
                rows.push(EvalRow {
                    config_id: e.config_id.clone(),
                    selected: e.config_id == result.selected,
                    aggregation: "truth",
                    delta: e.metrics.delta,
                    delta_star: e.metrics.delta_star,
                    advantage: *a,
                });
            }
            print(stdout, text.as_bytes())?;
            if let Some(dir) = out {
                let bytes = eval_csv(&loaded.name, loaded.scenario.metric.name(), &rows)?;
                save(&dir, &format!("eval-{truth}.csv"), &bytes, stdout)?;
            }
            Ok(())
        }
        Command::RankCams { scenario, out } => {
            let loaded = load_scenario(&scenario)?;
            let params = loaded.scenario.camera_ranking.ok_or_else(|| {
                HarnessError::input("scenario", "camera_ranking", "rank-cams needs camera_ranking parameters")
            })?;
            let ranking = rank_camera_configs(loaded.configs.configs(), &params);
            let bytes = ranking_csv(&ranking)?;
            match out {
                Some(dir) => save(&dir, "camera-ranking.csv", &bytes, stdout),
                None => print(stdout, &bytes),
            }
        }
        Command::Run { scenario, out } => {
            let loaded = load_scenario(&scenario)?;
            let output = run_scenario(&loaded, thread_count()?)?;
            write_reports(&out, &loaded, &output)?;
            print(
                stdout,
                format!("selected {}\nreports in {}\n", output.report.result.selected, out.display()).as_bytes(),
            )
        }
    }
}

fn voa_report(scenario: &Path) -> Result<VoaReport, HarnessError> {
    let loaded = load_scenario(scenario)?;
    let cache = build_cache(&loaded)?;
    let result = compute_result(&loaded, &cache, thread_count()?)?;
    Ok(report(&loaded, result))
}

fn or_undefined(v: Option<f64>) -> String {
    match v {
        Some(_) => optional(v),
        None => "undefined".into(),
    }
}
