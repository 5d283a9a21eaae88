//! `congest evaluate`: score a trained student against ground truth and the
//! constant-velocity baseline.

use std::path::PathBuf;

use anyhow::anyhow;
use congest_core::metrics::{compare, constant_velocity_predict, evaluate, Predictions};
use congest_core::scene::{split_dataset, Scene, Split};
use congest_core::student::predict;

use crate::formats::{self, EvalReportJson, EvaluationJson};
use crate::manifest::{self, CommonArgs, Manifest};
use crate::{validation, CliResult};

/// Which side of the recorded split to score.
#[derive(clap::ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SplitChoice {
    #[default]
    Test,
    Train,
    All,
}

impl SplitChoice {
    fn as_str(self) -> &'static str {
        match self {
            SplitChoice::Test => "test",
            SplitChoice::Train => "train",
            SplitChoice::All => "all",
        }
    }

    fn from_arg(s: &str) -> CliResult<Self> {
        match s {
            "test" => Ok(SplitChoice::Test),
            "train" => Ok(SplitChoice::Train),
            "all" => Ok(SplitChoice::All),
            other => Err(validation(anyhow!("unknown split {other:?}"))),
        }
    }
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Student checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Dataset directory from `simulate`/`convert`, or a scene JSONL file.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Scenes to score: the test side (default), the train side, or all.
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
}

pub fn run(args: &Args) -> CliResult<()> {
    let resolved = manifest::resolve("evaluate", &args.common)?;
    let cfg = &resolved.config;

    let model_path = manifest::require_path(&args.model, &resolved, "model")?;
    let (params, student_cfg) = formats::read_student(&model_path)?;
    let data = manifest::require_path(&args.data, &resolved, "data")?;
    let dataset = formats::read_dataset(&manifest::dataset_file(&data))?;
    let split = match args.split {
        Some(choice) => choice,
        None => match resolved.manifest_args.get("split") {
            Some(s) => SplitChoice::from_arg(s)?,
            None => SplitChoice::default(),
        },
    };
    let out = manifest::out_dir(&args.common)?;

    let scenes: Vec<Scene> = match split {
        SplitChoice::All => dataset.scenes().to_vec(),
        SplitChoice::Test | SplitChoice::Train => {
            let side = if split == SplitChoice::Test { Split::Test } else { Split::Train };
            let dataset = split_dataset(dataset, cfg.train_ratio, cfg.split_seed)?;
            dataset.side(side).into_iter().cloned().collect()
        }
    };
    if scenes.is_empty() {
        return Err(validation(anyhow!("no scenes on the {} side", split.as_str())));
    }

    let mut model_preds = Predictions::new();
    let mut cv_preds = Predictions::new();
    for scene in &scenes {
        let output = predict(&params, &student_cfg, scene)?;
        model_preds.insert(&scene.scene_id, output.positions());
        cv_preds.insert(&scene.scene_id, constant_velocity_predict(scene));
    }

    let refs: Vec<&Scene> = scenes.iter().collect();
    let model_report = evaluate(&refs, &model_preds, cfg.d_col, &cfg.horizons)?;
    let cv_report = evaluate(&refs, &cv_preds, cfg.d_col, &cfg.horizons)?;
    let table = compare(&[("model", &model_report), ("const_vel", &cv_report)])?;

    formats::write_json(
        &out.join("report.json"),
        &EvaluationJson {
            model: EvalReportJson::from_report(&model_report),
            constant_velocity: EvalReportJson::from_report(&cv_report),
            table: table.clone(),
        },
    )?;
    let margs = super::manifest_args([
        ("model", Some(super::path_string(&model_path))),
        ("data", Some(super::path_string(&data))),
        ("split", Some(split.as_str().to_string())),
    ]);
    Manifest::new("evaluate", cfg, margs).write(out)?;

    println!(
        "evaluate: {} scenes ({} split) -> {}",
        scenes.len(),
        split.as_str(),
        out.display()
    );
    print!("{table}");
    Ok(())
}
