//! `congest cpm-solve`: minimize the mixture-matching upper bound between
//! two mixture files, standalone.

use std::path::PathBuf;

use congest_core::cpm::cpm_solve;

use crate::formats::{self, SolveJson};
use crate::manifest::{self, CommonArgs, Manifest};
use crate::CliResult;

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Student-side mixture JSON (the side being optimized).
    #[arg(long, value_name = "FILE")]
    pub p: Option<PathBuf>,

    /// Teacher-side mixture JSON (the matching target).
    #[arg(long, value_name = "FILE")]
    pub q: Option<PathBuf>,
}

pub fn run(args: &Args) -> CliResult<()> {
    let resolved = manifest::resolve("cpm-solve", &args.common)?;
    let cfg = &resolved.config;
    let p_path = manifest::require_path(&args.p, &resolved, "p")?;
    let q_path = manifest::require_path(&args.q, &resolved, "q")?;
    let p0 = formats::read_mixture(&p_path)?;
    let q = formats::read_mixture(&q_path)?;
    let out = manifest::out_dir(&args.common)?;

    let (p, coupling, report) = cpm_solve(&p0, &q, &cfg.cpm_config())?;

    formats::write_json(&out.join("solution.json"), &SolveJson::new(&p, &coupling, &report))?;
    let margs = super::manifest_args([
        ("p", Some(super::path_string(&p_path))),
        ("q", Some(super::path_string(&q_path))),
    ]);
    Manifest::new("cpm-solve", cfg, margs).write(out)?;

    let first = report.bound_trace.first().copied().unwrap_or(f64::NAN);
    let last = report.bound_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "cpm-solve: bound {first:.6} -> {last:.6} in {} iterations (converged: {}) -> {}",
        report.iterations,
        report.converged,
        out.display()
    );
    Ok(())
}
