//! `congest plot-data`: emit plot-ready CSV series from run artifacts.
//!
//! Two independent products, chosen by the inputs given:
//! - `--report`: the RMSE-by-horizon and collision-rate-by-scenario curves
//!   of an evaluation report;
//! - `--teacher` + `--data`: per-frame posterior responsibilities of each
//!   scene's extracted congestion pattern under the teacher's mixture.

use std::path::PathBuf;

use anyhow::anyhow;
use congest_core::teacher::{extract_pattern, pattern_responsibilities};

use crate::formats::{self, EvaluationJson};
use crate::manifest::{self, CommonArgs, Manifest};
use crate::{validation, CliResult, Failure};

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Evaluation report (report.json) to turn into curve CSVs.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Teacher checkpoint for responsibility traces.
    #[arg(long, value_name = "FILE")]
    pub teacher: Option<PathBuf>,

    /// Dataset directory or scene JSONL file for responsibility traces.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Restrict responsibility traces to one scene id.
    #[arg(long, value_name = "ID")]
    pub scene: Option<String>,
}

pub fn run(args: &Args) -> CliResult<()> {
    let resolved = manifest::resolve("plot-data", &args.common)?;
    let cfg = &resolved.config;
    let report_path = manifest::input_path(&args.report, &resolved, "report");
    let teacher_path = manifest::input_path(&args.teacher, &resolved, "teacher");
    let data_path = manifest::input_path(&args.data, &resolved, "data");
    let scene_filter = args
        .scene
        .clone()
        .or_else(|| resolved.manifest_args.get("scene").cloned());

    let want_curves = report_path.is_some();
    let want_responsibilities = teacher_path.is_some() || data_path.is_some();
    if !want_curves && !want_responsibilities {
        return Err(validation(anyhow!(
            "nothing to plot: pass --report and/or --teacher with --data"
        )));
    }
    if want_responsibilities && (teacher_path.is_none() || data_path.is_none()) {
        return Err(validation(anyhow!(
            "responsibility traces need both --teacher and --data"
        )));
    }

    // Validate all inputs before creating the output directory.
    let evaluation: Option<EvaluationJson> =
        report_path.as_deref().map(formats::read_json).transpose()?;
    let teacher = teacher_path.as_deref().map(formats::read_teacher).transpose()?;
    let scenes = data_path
        .as_deref()
        .map(|p| formats::read_scenes(&manifest::dataset_file(p)))
        .transpose()?;
    let out = manifest::out_dir(&args.common)?;

    let mut written = Vec::new();
    if let Some(evaluation) = evaluation {
        let model_report = evaluation.model.into_report().map_err(Failure::from)?;
        formats::write_rmse_csv(&out.join("rmse.csv"), &model_report)?;
        formats::write_collision_csv(&out.join("collision.csv"), &model_report)?;
        written.push("rmse.csv");
        written.push("collision.csv");
    }

    if let (Some(teacher), Some(scenes)) = (teacher, scenes) {
        let mut rows = Vec::new();
        let mut matched = false;
        for scene in &scenes {
            if let Some(filter) = &scene_filter {
                if &scene.scene_id != filter {
                    continue;
                }
            }
            matched = true;
            let patterns = extract_pattern(&teacher, scene)?;
            for (idx, pattern) in patterns.iter().enumerate() {
                let resp = pattern_responsibilities(&teacher, pattern)?;
                rows.push((scene.scene_id.clone(), idx + 1, resp));
            }
        }
        if !matched {
            return Err(validation(anyhow!(
                "no scene matches --scene {:?}",
                scene_filter.as_deref().unwrap_or("")
            )));
        }
        formats::write_responsibilities_csv(
            &out.join("responsibilities.csv"),
            teacher.q_mixture.len(),
            &rows,
        )?;
        written.push("responsibilities.csv");
    }

    let margs = super::manifest_args([
        ("report", report_path.as_deref().map(super::path_string)),
        ("teacher", teacher_path.as_deref().map(super::path_string)),
        ("data", data_path.as_deref().map(super::path_string)),
        ("scene", scene_filter),
    ]);
    Manifest::new("plot-data", cfg, margs).write(out)?;

    println!("plot-data: wrote {} -> {}", written.join(", "), out.display());
    Ok(())
}
