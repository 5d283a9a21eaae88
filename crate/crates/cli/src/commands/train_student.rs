//! `congest train-student`: train the trajectory predictor, optionally
//! matching a teacher's congestion mixture.

use std::path::PathBuf;

use anyhow::anyhow;
use congest_core::scene::split_dataset;
use congest_core::student::train_student;

use crate::formats;
use crate::manifest::{self, CommonArgs, Manifest};
use crate::{validation, CliResult};

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Dataset directory from `simulate`/`convert`, or a scene JSONL file.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Teacher checkpoint; required when gamma > 0.
    #[arg(long, value_name = "FILE")]
    pub teacher: Option<PathBuf>,

    /// Pattern-matching loss weight; shorthand for --set gamma=...
    #[arg(long)]
    pub gamma: Option<f64>,
}

pub fn run(args: &Args) -> CliResult<()> {
    let mut resolved = manifest::resolve("train-student", &args.common)?;
    if let Some(gamma) = args.gamma {
        if !(gamma >= 0.0) {
            return Err(validation(anyhow!("--gamma must be non-negative, got {gamma}")));
        }
        resolved.config.gamma = gamma;
    }
    let cfg = &resolved.config;

    let data = manifest::require_path(&args.data, &resolved, "data")?;
    let teacher_path = manifest::input_path(&args.teacher, &resolved, "teacher");
    if cfg.gamma > 0.0 && teacher_path.is_none() {
        return Err(validation(anyhow!(
            "gamma = {} requires --teacher (use --gamma 0 for the ablation)",
            cfg.gamma
        )));
    }
    let dataset = formats::read_dataset(&manifest::dataset_file(&data))?;
    let teacher = teacher_path
        .as_deref()
        .map(formats::read_teacher)
        .transpose()?;
    let out = manifest::out_dir(&args.common)?;

    let dataset = split_dataset(dataset, cfg.train_ratio, cfg.split_seed)?;
    let student_cfg = cfg.student_config();
    let (params, report) = train_student(&dataset, teacher.as_ref(), &student_cfg)?;

    formats::write_student(&out.join("student.json"), &params, &student_cfg)?;
    formats::write_training_log(&out.join("training_log.csv"), &report.epochs)?;
    let margs = super::manifest_args([
        ("data", Some(super::path_string(&data))),
        ("teacher", teacher_path.as_deref().map(super::path_string)),
    ]);
    Manifest::new("train-student", cfg, margs).write(out)?;

    if let Some(last) = report.epochs.last() {
        println!(
            "train-student: {} epochs, final l2 {:.4}, l1 {:.4}, total {:.4} -> {}",
            report.epochs.len(),
            last.nll,
            last.cpm,
            last.total,
            out.display()
        );
    }
    Ok(())
}
