//! `congest train-teacher`: fit the graph autoencoder and the congestion
//! mixture on the train split.

use std::path::PathBuf;

use congest_core::scene::split_dataset;
use congest_core::teacher::train_teacher;
use serde::Serialize;

use crate::formats::{self, write_json};
use crate::manifest::{self, CommonArgs, Manifest};
use crate::CliResult;

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Dataset directory from `simulate`/`convert`, or a scene JSONL file.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

/// Training curves and fit summary, written beside the checkpoint.
#[derive(Serialize)]
struct TeacherReportJson {
    elbo_trace: Vec<f64>,
    em_log_likelihood: Vec<f64>,
    em_iterations: usize,
    em_converged: bool,
    pattern_count: usize,
}

pub fn run(args: &Args) -> CliResult<()> {
    let resolved = manifest::resolve("train-teacher", &args.common)?;
    let cfg = &resolved.config;
    let data = manifest::require_path(&args.data, &resolved, "data")?;
    let dataset = formats::read_dataset(&manifest::dataset_file(&data))?;
    let out = manifest::out_dir(&args.common)?;

    let dataset = split_dataset(dataset, cfg.train_ratio, cfg.split_seed)?;
    let (model, report) = train_teacher(&dataset, &cfg.teacher_config())?;

    formats::write_teacher(&out.join("teacher.json"), &model)?;
    write_json(
        &out.join("teacher_report.json"),
        &TeacherReportJson {
            elbo_trace: report.elbo_trace.clone(),
            em_log_likelihood: report.em.log_likelihood.clone(),
            em_iterations: report.em.iterations,
            em_converged: report.em.converged,
            pattern_count: report.pattern_count,
        },
    )?;
    let margs =
        super::manifest_args([("data", Some(super::path_string(&data)))]);
    Manifest::new("train-teacher", cfg, margs).write(out)?;

    println!(
        "train-teacher: {} epochs, final elbo {:.4}, em {} iterations on {} patterns -> {}",
        report.elbo_trace.len(),
        report.elbo_trace.last().copied().unwrap_or(f64::NAN),
        report.em.iterations,
        report.pattern_count,
        out.display()
    );
    Ok(())
}
