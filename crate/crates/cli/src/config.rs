//! The flat `key = value` run configuration shared by every subcommand.
//!
//! One struct holds every tunable of the pipeline. Values come from, in
//! order of precedence: built-in defaults, an optional config file, then
//! `--set key=value` flags. Unknown keys are rejected so typos fail loudly
//! instead of silently running with defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use congest_core::gaussian::EmMode;
use congest_core::scene::ScenarioKind;
use congest_core::sim::SimConfig;
use congest_core::student::StudentConfig;
use congest_core::teacher::TeacherConfig;

use crate::{validation, CliResult};

/// Every tunable of the pipeline, as one flat bag of values.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // Data and simulation.
    pub dt: f64,
    pub t_h: usize,
    pub t_p: usize,
    pub noise_std: f64,
    pub scenes_per_kind: usize,
    pub train_ratio: f64,
    pub split_seed: u64,
    pub d_col: f64,
    pub w_max: f64,
    /// Master seed consumed by whichever command runs.
    pub seed: u64,
    // Teacher.
    pub teacher_hidden: usize,
    pub d_z: usize,
    pub m_q: usize,
    pub teacher_lr: f64,
    pub teacher_epochs: usize,
    pub teacher_batch: usize,
    pub kl_weight: f64,
    pub em_max_iters: usize,
    pub em_mode: EmMode,
    pub em_batch_size: usize,
    // Student.
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub cell_x: f64,
    pub cell_y: f64,
    pub conv_channels: usize,
    pub m_p: usize,
    pub cpm_hidden: usize,
    pub gamma: f64,
    pub student_lr: f64,
    pub student_epochs: usize,
    pub student_batch: usize,
    pub k_inner: usize,
    pub sigma_floor: f64,
    pub rho_limit: f64,
    pub grad_clip: f64,
    // Standalone coupled-minimization solves.
    pub cpm_max_iters: usize,
    pub cpm_rel_tol: f64,
    // Evaluation.
    pub horizons: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let teacher = TeacherConfig::default();
        let student = StudentConfig::default();
        let sim = SimConfig::default();
        Self {
            dt: sim.dt,
            t_h: sim.t_h,
            t_p: sim.t_p,
            noise_std: sim.noise_std,
            scenes_per_kind: 100,
            train_ratio: 0.75,
            split_seed: 7,
            d_col: congest_core::sim::DEFAULT_D_COL,
            w_max: congest_core::graph::DEFAULT_W_MAX,
            seed: 0,
            teacher_hidden: teacher.hidden_dim,
            d_z: teacher.d_z,
            m_q: teacher.m_q,
            teacher_lr: teacher.lr,
            teacher_epochs: teacher.epochs,
            teacher_batch: teacher.batch_graphs,
            kl_weight: teacher.kl_weight,
            em_max_iters: teacher.em_max_iters,
            em_mode: teacher.em_mode,
            em_batch_size: teacher.em_batch_size,
            enc_hidden: student.enc_hidden,
            dec_hidden: student.dec_hidden,
            grid_rows: student.grid_rows,
            grid_cols: student.grid_cols,
            cell_x: student.cell_x,
            cell_y: student.cell_y,
            conv_channels: student.conv_channels,
            m_p: student.m_p,
            cpm_hidden: student.cpm_hidden,
            gamma: student.gamma,
            student_lr: student.lr,
            student_epochs: student.epochs,
            student_batch: student.batch_scenes,
            k_inner: student.k_inner,
            sigma_floor: student.sigma_floor,
            rho_limit: student.rho_limit,
            grad_clip: student.grad_clip,
            cpm_max_iters: 200,
            cpm_rel_tol: 1e-9,
            horizons: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| validation(anyhow!("config key {key}: cannot parse {value:?}: {e}")))
}

fn parse_horizons(value: &str) -> CliResult<Vec<f64>> {
    let items = value
        .split(',')
        .map(|s| parse_num::<f64>("horizons", s))
        .collect::<CliResult<Vec<f64>>>()?;
    if items.is_empty() {
        return Err(validation(anyhow!("config key horizons: list is empty")));
    }
    Ok(items)
}

fn em_mode_str(mode: EmMode) -> &'static str {
    match mode {
        EmMode::Batch => "batch",
        EmMode::Stochastic => "stochastic",
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "dt" => self.dt = parse_num(key, v)?,
            "t_h" => self.t_h = parse_num(key, v)?,
            "t_p" => self.t_p = parse_num(key, v)?,
            "noise_std" => self.noise_std = parse_num(key, v)?,
            "scenes_per_kind" => self.scenes_per_kind = parse_num(key, v)?,
            "train_ratio" => self.train_ratio = parse_num(key, v)?,
            "split_seed" => self.split_seed = parse_num(key, v)?,
            "d_col" => self.d_col = parse_num(key, v)?,
            "w_max" => self.w_max = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "teacher_hidden" => self.teacher_hidden = parse_num(key, v)?,
            "d_z" => self.d_z = parse_num(key, v)?,
            "m_q" => self.m_q = parse_num(key, v)?,
            "teacher_lr" => self.teacher_lr = parse_num(key, v)?,
            "teacher_epochs" => self.teacher_epochs = parse_num(key, v)?,
            "teacher_batch" => self.teacher_batch = parse_num(key, v)?,
            "kl_weight" => self.kl_weight = parse_num(key, v)?,
            "em_max_iters" => self.em_max_iters = parse_num(key, v)?,
            "em_mode" => {
                self.em_mode = match v {
                    "batch" => EmMode::Batch,
                    "stochastic" => EmMode::Stochastic,
                    other => {
                        return Err(validation(anyhow!(
                            "config key em_mode: expected batch or stochastic, got {other:?}"
                        )))
                    }
                }
            }
            "em_batch_size" => self.em_batch_size = parse_num(key, v)?,
            "enc_hidden" => self.enc_hidden = parse_num(key, v)?,
            "dec_hidden" => self.dec_hidden = parse_num(key, v)?,
            "grid_rows" => self.grid_rows = parse_num(key, v)?,
            "grid_cols" => self.grid_cols = parse_num(key, v)?,
            "cell_x" => self.cell_x = parse_num(key, v)?,
            "cell_y" => self.cell_y = parse_num(key, v)?,
            "conv_channels" => self.conv_channels = parse_num(key, v)?,
            "m_p" => self.m_p = parse_num(key, v)?,
            "cpm_hidden" => self.cpm_hidden = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "student_lr" => self.student_lr = parse_num(key, v)?,
            "student_epochs" => self.student_epochs = parse_num(key, v)?,
            "student_batch" => self.student_batch = parse_num(key, v)?,
            "k_inner" => self.k_inner = parse_num(key, v)?,
            "sigma_floor" => self.sigma_floor = parse_num(key, v)?,
            "rho_limit" => self.rho_limit = parse_num(key, v)?,
            "grad_clip" => self.grad_clip = parse_num(key, v)?,
            "cpm_max_iters" => self.cpm_max_iters = parse_num(key, v)?,
            "cpm_rel_tol" => self.cpm_rel_tol = parse_num(key, v)?,
            "horizons" => self.horizons = parse_horizons(v)?,
            other => return Err(validation(anyhow!("unknown config key: {other}"))),
        }
        Ok(())
    }

    /// Every key in declaration order with its canonical string value.
    /// Feeding the pairs back through [`RunConfig::set`] reproduces the
    /// config exactly: floats print in shortest round-trip form.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let horizons = self
            .horizons
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("dt", self.dt.to_string()),
            ("t_h", self.t_h.to_string()),
            ("t_p", self.t_p.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("scenes_per_kind", self.scenes_per_kind.to_string()),
            ("train_ratio", self.train_ratio.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("d_col", self.d_col.to_string()),
            ("w_max", self.w_max.to_string()),
            ("seed", self.seed.to_string()),
            ("teacher_hidden", self.teacher_hidden.to_string()),
            ("d_z", self.d_z.to_string()),
            ("m_q", self.m_q.to_string()),
            ("teacher_lr", self.teacher_lr.to_string()),
            ("teacher_epochs", self.teacher_epochs.to_string()),
            ("teacher_batch", self.teacher_batch.to_string()),
            ("kl_weight", self.kl_weight.to_string()),
            ("em_max_iters", self.em_max_iters.to_string()),
            ("em_mode", em_mode_str(self.em_mode).to_string()),
            ("em_batch_size", self.em_batch_size.to_string()),
            ("enc_hidden", self.enc_hidden.to_string()),
            ("dec_hidden", self.dec_hidden.to_string()),
            ("grid_rows", self.grid_rows.to_string()),
            ("grid_cols", self.grid_cols.to_string()),
            ("cell_x", self.cell_x.to_string()),
            ("cell_y", self.cell_y.to_string()),
            ("conv_channels", self.conv_channels.to_string()),
            ("m_p", self.m_p.to_string()),
            ("cpm_hidden", self.cpm_hidden.to_string()),
            ("gamma", self.gamma.to_string()),
            ("student_lr", self.student_lr.to_string()),
            ("student_epochs", self.student_epochs.to_string()),
            ("student_batch", self.student_batch.to_string()),
            ("k_inner", self.k_inner.to_string()),
            ("sigma_floor", self.sigma_floor.to_string()),
            ("rho_limit", self.rho_limit.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("cpm_max_iters", self.cpm_max_iters.to_string()),
            ("cpm_rel_tol", self.cpm_rel_tol.to_string()),
            ("horizons", horizons),
        ]
    }

    /// Snapshot as a sorted map, the form stored in manifests.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Rebuild a config from a manifest snapshot. The snapshot must be
    /// complete: missing or extra keys are errors, so manifests stay an
    /// exact record rather than a partial overlay.
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let known: Vec<&str> = cfg.pairs().iter().map(|(k, _)| *k).collect();
        for key in &known {
            let value = map.get(*key).ok_or_else(|| {
                validation(anyhow!("manifest config is missing key {key}"))
            })?;
            cfg.set(key, value)?;
        }
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(validation(anyhow!("unknown config key: {key}")));
            }
        }
        Ok(cfg)
    }

    /// Render in config-file syntax.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Cheap consistency checks done before any work starts. Deeper
    /// validation happens in the core constructors these values feed.
    pub fn validate(&self) -> CliResult<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(validation(anyhow!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        if self.t_h == 0 || self.t_h >= self.t_p {
            return Err(validation(anyhow!(
                "need 0 < t_h < t_p, got t_h {} and t_p {}",
                self.t_h,
                self.t_p
            )));
        }
        if self.scenes_per_kind == 0 {
            return Err(validation(anyhow!("scenes_per_kind must be positive")));
        }
        let mut last = 0.0;
        for &h in &self.horizons {
            if !(h > last) || !h.is_finite() {
                return Err(validation(anyhow!(
                    "horizons must be positive, finite, and strictly increasing"
                )));
            }
            last = h;
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            t_h: self.t_h,
            t_p: self.t_p,
            noise_std: self.noise_std,
        }
    }

    pub fn counts(&self) -> [(ScenarioKind, usize); 4] {
        ScenarioKind::generated().map(|kind| (kind, self.scenes_per_kind))
    }

    pub fn teacher_config(&self) -> TeacherConfig {
        TeacherConfig {
            hidden_dim: self.teacher_hidden,
            d_z: self.d_z,
            m_q: self.m_q,
            lr: self.teacher_lr,
            epochs: self.teacher_epochs,
            batch_graphs: self.teacher_batch,
            kl_weight: self.kl_weight,
            w_max: self.w_max,
            em_max_iters: self.em_max_iters,
            em_mode: self.em_mode,
            em_batch_size: self.em_batch_size,
            seed: self.seed,
        }
    }

    pub fn student_config(&self) -> StudentConfig {
        StudentConfig {
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
            grid_rows: self.grid_rows,
            grid_cols: self.grid_cols,
            cell_x: self.cell_x,
            cell_y: self.cell_y,
            conv_channels: self.conv_channels,
            m_p: self.m_p,
            d_z: self.d_z,
            cpm_hidden: self.cpm_hidden,
            gamma: self.gamma,
            lr: self.student_lr,
            epochs: self.student_epochs,
            batch_scenes: self.student_batch,
            k_inner: self.k_inner,
            sigma_floor: self.sigma_floor,
            rho_limit: self.rho_limit,
            grad_clip: self.grad_clip,
            seed: self.seed,
        }
    }

    pub fn cpm_config(&self) -> congest_core::cpm::CpmConfig {
        congest_core::cpm::CpmConfig {
            max_iters: self.cpm_max_iters,
            rel_tol: self.cpm_rel_tol,
        }
    }
}

/// Parse config-file text: one `key = value` per line, `#` comments, blank
/// lines ignored. Later assignments override earlier ones.
pub fn apply_file_text(cfg: &mut RunConfig, text: &str, origin: &str) -> CliResult<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            validation(anyhow!(
                "{origin}:{}: expected key = value, got {line:?}",
                lineno + 1
            ))
        })?;
        cfg.set(key.trim(), value)
            .map_err(|e| validation(anyhow!("{origin}:{}: {e}", lineno + 1)))?;
    }
    Ok(())
}

/// Apply one `--set key=value` flag.
pub fn apply_override(cfg: &mut RunConfig, spec: &str) -> CliResult<()> {
    let (key, value) = spec.split_once('=').ok_or_else(|| {
        validation(anyhow!("--set expects key=value, got {spec:?}"))
    })?;
    cfg.set(key.trim(), value)
}

/// Assemble the effective config: defaults, then the optional config file,
/// then `--set` overrides in order.
pub fn load(config_path: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))
            .map_err(validation)?;
        apply_file_text(&mut cfg, &text, &path.display().to_string())?;
    }
    for spec in overrides {
        apply_override(&mut cfg, spec)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
