//! Run manifests: the exact record of what a command was asked to do.
//!
//! Every subcommand writes `manifest.json` into its output directory. The
//! manifest holds the fully resolved configuration, the command name, the
//! non-config arguments (input paths and flags), and version stamps — and
//! nothing time- or machine-dependent, so identical invocations write
//! byte-identical manifests and `--from-manifest` reproduces a run exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use crate::config::{self, RunConfig};
use crate::formats::{read_json, write_json, FORMAT_VERSION};
use crate::{validation, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// The on-disk record of one run.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Manifest {
    /// Crate version that wrote the manifest.
    pub version: String,
    /// Subcommand name in CLI spelling, e.g. `train-teacher`.
    pub command: String,
    /// Complete snapshot of the resolved run configuration, including all
    /// seeds, in canonical string form.
    pub config: BTreeMap<String, String>,
    /// Non-config arguments the command needs to run again: input paths
    /// and extra flags. The output directory is deliberately absent so a
    /// reproduction can write elsewhere.
    pub args: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, args: BTreeMap<String, String>) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            command: command.to_string(),
            config: cfg.to_map(),
            args,
        }
    }

    pub fn write(&self, out_dir: &Path) -> CliResult<()> {
        write_json(&out_dir.join(MANIFEST_FILE), self)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        read_json(path)
    }
}

/// Settings shared by every subcommand: where the config comes from and
/// where artifacts go.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Config file with one `key = value` per line.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one config key (repeatable), e.g. --set gamma=0.5
    #[arg(long, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Re-run from a previous run's manifest; other flags still override.
    #[arg(long, value_name = "FILE")]
    pub from_manifest: Option<PathBuf>,

    /// Directory for artifacts and the run manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Fully resolved invocation: the effective config plus any arguments
/// recorded in a source manifest.
#[derive(Debug)]
pub struct Resolved {
    pub config: RunConfig,
    /// Arguments carried over from `--from-manifest`, if any.
    pub manifest_args: BTreeMap<String, String>,
}

/// Resolve the effective configuration for `command`.
///
/// Precedence, lowest to highest: built-in defaults, the manifest given by
/// `--from-manifest` (replacing defaults wholesale), the `--config` file,
/// `--set` overrides in order, then `--seed`. A manifest written for a
/// different subcommand is rejected.
pub fn resolve(command: &str, common: &CommonArgs) -> CliResult<Resolved> {
    let mut manifest_args = BTreeMap::new();
    let mut cfg = match &common.from_manifest {
        Some(path) => {
            let manifest = Manifest::read(path)?;
            if manifest.command != command {
                return Err(validation(anyhow!(
                    "{}: manifest records a {} run, not {command}",
                    path.display(),
                    manifest.command
                )));
            }
            manifest_args = manifest.args;
            RunConfig::from_map(&manifest.config)?
        }
        None => RunConfig::default(),
    };
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(anyhow!("cannot read config file {}: {e}", path.display())))?;
        config::apply_file_text(&mut cfg, &text, &path.display().to_string())?;
    }
    for spec in &common.set {
        config::apply_override(&mut cfg, spec)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(Resolved { config: cfg, manifest_args })
}

/// The output directory, created if needed. Required for every command.
pub fn out_dir(common: &CommonArgs) -> CliResult<&Path> {
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| validation(anyhow!("--out is required")))?;
    std::fs::create_dir_all(out)
        .map_err(|e| crate::runtime(anyhow!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

/// An input path: the command-line flag wins, otherwise the value recorded
/// in the source manifest.
pub fn input_path(
    flag: &Option<PathBuf>,
    resolved: &Resolved,
    key: &str,
) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| resolved.manifest_args.get(key).map(PathBuf::from))
}

/// Like [`input_path`] but required, with the flag named in the error.
pub fn require_path(
    flag: &Option<PathBuf>,
    resolved: &Resolved,
    key: &str,
) -> CliResult<PathBuf> {
    input_path(flag, resolved, key)
        .ok_or_else(|| validation(anyhow!("--{key} is required")))
}

/// Resolve a `--data` argument that may name either the directory a
/// simulate/convert run wrote or a scene JSONL file directly.
pub fn dataset_file(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("dataset.jsonl")
    } else {
        data.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common_with(out: &Path) -> CommonArgs {
        CommonArgs { out: Some(out.to_path_buf()), ..CommonArgs::default() }
    }

    #[test]
    fn manifest_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.set("gamma", "0.125").unwrap();
        let args = BTreeMap::from([("data".to_string(), "runs/d".to_string())]);
        let manifest = Manifest::new("train-student", &cfg, args);
        manifest.write(dir.path()).unwrap();
        let first = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();

        let loaded = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, manifest);
        loaded.write(dir.path()).unwrap();
        let second = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn resolve_layers_manifest_config_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.set("seed", "5").unwrap();
        cfg.set("gamma", "0.5").unwrap();
        let args = BTreeMap::from([("data".to_string(), "d".to_string())]);
        Manifest::new("train-student", &cfg, args).write(dir.path()).unwrap();

        let mut common = common_with(dir.path());
        common.from_manifest = Some(dir.path().join(MANIFEST_FILE));
        let resolved = resolve("train-student", &common).unwrap();
        assert_eq!(resolved.config, cfg);
        assert_eq!(resolved.manifest_args.get("data").unwrap(), "d");

        // Explicit flags still win over the manifest.
        common.set = vec!["gamma=0.25".to_string()];
        common.seed = Some(9);
        let resolved = resolve("train-student", &common).unwrap();
        assert_eq!(resolved.config.gamma, 0.25);
        assert_eq!(resolved.config.seed, 9);
    }

    #[test]
    fn resolve_rejects_foreign_manifests() {
        let dir = tempfile::tempdir().unwrap();
        Manifest::new("simulate", &RunConfig::default(), BTreeMap::new())
            .write(dir.path())
            .unwrap();
        let mut common = common_with(dir.path());
        common.from_manifest = Some(dir.path().join(MANIFEST_FILE));
        let err = resolve("evaluate", &common).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("simulate"), "{err}");
    }

    #[test]
    fn out_dir_is_required_and_created() {
        let err = out_dir(&CommonArgs::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("--out"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b");
        let common = common_with(&nested);
        assert_eq!(out_dir(&common).unwrap(), nested.as_path());
        assert!(nested.is_dir());
    }

    #[test]
    fn input_paths_prefer_flags_over_manifest_args() {
        let resolved = Resolved {
            config: RunConfig::default(),
            manifest_args: BTreeMap::from([("data".to_string(), "from-manifest".to_string())]),
        };
        assert_eq!(
            require_path(&None, &resolved, "data").unwrap(),
            PathBuf::from("from-manifest")
        );
        let flag = Some(PathBuf::from("from-flag"));
        assert_eq!(require_path(&flag, &resolved, "data").unwrap(), PathBuf::from("from-flag"));

        let empty = Resolved { config: RunConfig::default(), manifest_args: BTreeMap::new() };
        let err = require_path(&None, &empty, "model").unwrap_err();
        assert!(err.to_string().contains("--model"), "{err}");
    }

    #[test]
    fn dataset_file_resolves_directories() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(dataset_file(dir.path()), dir.path().join("dataset.jsonl"));
        let file = dir.path().join("scenes.jsonl");
        assert_eq!(dataset_file(&file), file);
    }
}
