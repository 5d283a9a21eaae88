//! `congest convert`: ingest raw trajectory CSV into the scene JSONL format.

use std::path::PathBuf;

use crate::formats;
use crate::manifest::{self, CommonArgs, Manifest};
use crate::CliResult;

/// Convert a CSV with columns `scene_id, agent_id, frame, x, y` into
/// `dataset.jsonl` of kind `external`. The scene length comes from the
/// tracks; `dt` and `t_h` come from the config.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Raw trajectory CSV to ingest.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
}

pub fn run(args: &Args) -> CliResult<()> {
    let resolved = manifest::resolve("convert", &args.common)?;
    let cfg = &resolved.config;
    let input = manifest::require_path(&args.input, &resolved, "input")?;
    let scenes = formats::read_raw_csv(&input, cfg.dt, cfg.t_h)?;
    let out = manifest::out_dir(&args.common)?;

    formats::write_scenes(&out.join("dataset.jsonl"), &scenes)?;
    let margs = super::manifest_args([("input", Some(super::path_string(&input)))]);
    Manifest::new("convert", cfg, margs).write(out)?;

    println!("convert: {} scenes -> {}", scenes.len(), out.display());
    Ok(())
}
