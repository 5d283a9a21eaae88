//! On-disk formats: scene and label JSONL, checkpoint JSON, mixture JSON,
//! evaluation reports, and the CSV emissions.
//!
//! All floats are written in shortest round-trip form (serde_json and csv
//! both use ryu), so save → load reproduces every value bit-exactly and
//! identical runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::anyhow;
use congest_core::cpm::{Coupling, CpmReport};
use congest_core::gaussian::{DiagGaussian, GaussianMixture};
use congest_core::metrics::{EvalReport, MetricsBlock};
use congest_core::scene::{AgentTrack, Dataset, Scene, ScenarioKind};
use congest_core::sim::CollisionLabel;
use congest_core::student::{EpochStats, LstmParams, StudentConfig, StudentParams};
use congest_core::teacher::{TeacherModel, VgaeParams, NODE_FEATURES};
use congest_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::{runtime, validation, CliResult, Failure};

/// Version stamp written into checkpoints and manifests.
pub const FORMAT_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Generic helpers
// ---------------------------------------------------------------------------

fn read_failure(path: &Path, err: impl Into<anyhow::Error>) -> Failure {
    validation(err.into().context(format!("cannot read {}", path.display())))
}

fn write_failure(path: &Path, err: impl Into<anyhow::Error>) -> Failure {
    runtime(err.into().context(format!("cannot write {}", path.display())))
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_failure(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| write_failure(path, e))
}

/// Load JSON, classifying missing/malformed files as validation errors.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| read_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| read_failure(path, e))
}

// ---------------------------------------------------------------------------
// Scene JSONL
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TrackRecord {
    agent_id: u64,
    xy: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    scene_id: String,
    kind: String,
    dt: f64,
    t_h: usize,
    t_p: usize,
    tracks: Vec<TrackRecord>,
}

impl SceneRecord {
    fn from_scene(scene: &Scene) -> Self {
        Self {
            scene_id: scene.scene_id.clone(),
            kind: scene.kind.as_str().to_string(),
            dt: scene.dt,
            t_h: scene.t_h,
            t_p: scene.t_p,
            tracks: scene
                .tracks
                .iter()
                .map(|t| TrackRecord { agent_id: t.agent_id, xy: t.positions.clone() })
                .collect(),
        }
    }

    fn into_scene(self) -> congest_core::Result<Scene> {
        Ok(Scene {
            scene_id: self.scene_id,
            kind: ScenarioKind::from_str(&self.kind)?,
            dt: self.dt,
            t_h: self.t_h,
            t_p: self.t_p,
            tracks: self
                .tracks
                .into_iter()
                .map(|t| AgentTrack { agent_id: t.agent_id, positions: t.xy })
                .collect(),
        })
    }
}

/// Write one scene per line.
pub fn write_scenes(path: &Path, scenes: &[Scene]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| write_failure(path, e))?;
    let mut out = BufWriter::new(file);
    for scene in scenes {
        serde_json::to_writer(&mut out, &SceneRecord::from_scene(scene))
            .map_err(|e| write_failure(path, e))?;
        out.write_all(b"\n").map_err(|e| write_failure(path, e))?;
    }
    out.flush().map_err(|e| write_failure(path, e))
}

/// Load a scene-per-line file. Malformed lines are reported with their line
/// number, invariant violations name the scene, and an empty file yields an
/// empty list.
pub fn read_scenes(path: &Path) -> CliResult<Vec<Scene>> {
    let file = fs::File::open(path).map_err(|e| read_failure(path, e))?;
    let reader = BufReader::new(file);
    let mut scenes: Vec<Scene> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| read_failure(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line).map_err(|e| {
            validation(anyhow!("{}:{}: malformed scene record: {e}", path.display(), lineno + 1))
        })?;
        let scene = record.into_scene().map_err(|e| {
            validation(anyhow!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        scene.validate().map_err(|e| {
            validation(anyhow!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if scenes.iter().any(|s| s.scene_id == scene.scene_id) {
            return Err(validation(anyhow!(
                "{}:{}: duplicate scene id {}",
                path.display(),
                lineno + 1,
                scene.scene_id
            )));
        }
        scenes.push(scene);
    }
    Ok(scenes)
}

/// Load scenes into a core [`Dataset`], which additionally requires at
/// least one scene.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    Dataset::new(read_scenes(path)?).map_err(Failure::from)
}

// ---------------------------------------------------------------------------
// Labels JSONL
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EventRecord {
    u: usize,
    v: usize,
    frame: usize,
}

#[derive(Serialize, Deserialize)]
pub struct LabelRecord {
    pub scene_id: String,
    events: Vec<EventRecord>,
    pub flags: Vec<bool>,
}

impl LabelRecord {
    pub fn new(scene_id: &str, label: &CollisionLabel) -> Self {
        Self {
            scene_id: scene_id.to_string(),
            events: label
                .events
                .iter()
                .map(|e| EventRecord { u: e.u, v: e.v, frame: e.frame })
                .collect(),
            flags: label.flags.clone(),
        }
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| write_failure(path, e))?;
    let mut out = BufWriter::new(file);
    for label in labels {
        serde_json::to_writer(&mut out, label).map_err(|e| write_failure(path, e))?;
        out.write_all(b"\n").map_err(|e| write_failure(path, e))?;
    }
    out.flush().map_err(|e| write_failure(path, e))
}

pub fn read_labels(path: &Path) -> CliResult<Vec<LabelRecord>> {
    let file = fs::File::open(path).map_err(|e| read_failure(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| read_failure(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            validation(anyhow!("{}:{}: malformed label record: {e}", path.display(), lineno + 1))
        })?;
        labels.push(record);
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// Graph dump JSONL
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct GraphRecord {
    pub scene_id: String,
    /// 1-based frame index.
    pub t: usize,
    /// Row-major `n x n` weight matrix.
    pub weights: Vec<f64>,
}

pub fn write_graphs(path: &Path, records: &[GraphRecord]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| write_failure(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| write_failure(path, e))?;
        out.write_all(b"\n").map_err(|e| write_failure(path, e))?;
    }
    out.flush().map_err(|e| write_failure(path, e))
}

// ---------------------------------------------------------------------------
// Mixture JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
struct ComponentJson {
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// A Gaussian mixture in its portable JSON form.
#[derive(Serialize, Deserialize, Clone)]
pub struct MixtureJson {
    weights: Vec<f64>,
    components: Vec<ComponentJson>,
}

impl MixtureJson {
    pub fn from_mixture(m: &GaussianMixture) -> Self {
        Self {
            weights: m.weights().to_vec(),
            components: m
                .components()
                .iter()
                .map(|c| ComponentJson { mean: c.mean().to_vec(), var: c.var().to_vec() })
                .collect(),
        }
    }

    pub fn into_mixture(self) -> congest_core::Result<GaussianMixture> {
        let components = self
            .components
            .into_iter()
            .map(|c| DiagGaussian::new(c.mean, c.var))
            .collect::<congest_core::Result<Vec<_>>>()?;
        GaussianMixture::new(self.weights, components)
    }
}

/// Load a mixture JSON file and validate it.
pub fn read_mixture(path: &Path) -> CliResult<GaussianMixture> {
    let json: MixtureJson = read_json(path)?;
    json.into_mixture()
        .map_err(|e| validation(anyhow::Error::from(e).context(format!("invalid mixture in {}", path.display()))))
}

// ---------------------------------------------------------------------------
// Tensors and checkpoints
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
pub struct TensorJson {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TensorJson {
    fn from_tensor(t: &Tensor) -> Self {
        Self { rows: t.rows(), cols: t.cols(), data: t.data().to_vec() }
    }

    fn into_tensor(self) -> congest_core::Result<Tensor> {
        Tensor::new(self.rows, self.cols, self.data)
    }
}

fn take_tensor(
    weights: &mut BTreeMap<String, TensorJson>,
    name: &str,
    path: &Path,
) -> CliResult<Tensor> {
    let json = weights.remove(name).ok_or_else(|| {
        validation(anyhow!("{}: checkpoint is missing weight {name}", path.display()))
    })?;
    json.into_tensor().map_err(|e| {
        validation(anyhow!("{}: weight {name}: {e}", path.display()))
    })
}

fn expect_kind(found: &str, expected: &str, path: &Path) -> CliResult<()> {
    if found != expected {
        return Err(validation(anyhow!(
            "{}: expected a {expected} checkpoint, found kind {found:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Teacher checkpoint: encoder weights, fitted mixture, feature scaling.
#[derive(Serialize, Deserialize)]
pub struct TeacherCheckpoint {
    version: String,
    kind: String,
    d_z: usize,
    weights: BTreeMap<String, TensorJson>,
    q_mixture: MixtureJson,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
    w_max: f64,
}

impl TeacherCheckpoint {
    pub fn from_model(model: &TeacherModel) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert("w0".into(), TensorJson::from_tensor(&model.vgae.w0));
        weights.insert("w_mu".into(), TensorJson::from_tensor(&model.vgae.w_mu));
        weights.insert("w_logvar".into(), TensorJson::from_tensor(&model.vgae.w_logvar));
        Self {
            version: FORMAT_VERSION.to_string(),
            kind: "teacher".into(),
            d_z: model.d_z(),
            weights,
            q_mixture: MixtureJson::from_mixture(&model.q_mixture),
            feat_mean: model.feat_mean.to_vec(),
            feat_std: model.feat_std.to_vec(),
            w_max: model.w_max,
        }
    }

    pub fn into_model(mut self, path: &Path) -> CliResult<TeacherModel> {
        expect_kind(&self.kind, "teacher", path)?;
        let w0 = take_tensor(&mut self.weights, "w0", path)?;
        let w_mu = take_tensor(&mut self.weights, "w_mu", path)?;
        let w_logvar = take_tensor(&mut self.weights, "w_logvar", path)?;
        if let Some(name) = self.weights.keys().next() {
            return Err(validation(anyhow!(
                "{}: unexpected weight {name} in teacher checkpoint",
                path.display()
            )));
        }
        let shape_err = |detail: String| validation(anyhow!("{}: {detail}", path.display()));
        if w0.rows() != NODE_FEATURES {
            return Err(shape_err(format!(
                "w0 must have {NODE_FEATURES} rows, got {}",
                w0.rows()
            )));
        }
        let hidden = w0.cols();
        for (name, t) in [("w_mu", &w_mu), ("w_logvar", &w_logvar)] {
            if t.rows() != hidden || t.cols() != self.d_z {
                return Err(shape_err(format!(
                    "{name} must be {hidden}x{}, got {}x{}",
                    self.d_z,
                    t.rows(),
                    t.cols()
                )));
            }
        }
        if self.feat_mean.len() != NODE_FEATURES || self.feat_std.len() != NODE_FEATURES {
            return Err(shape_err(format!(
                "feature scaling must have {NODE_FEATURES} entries"
            )));
        }
        let q_mixture = self.q_mixture.into_mixture().map_err(|e| {
            validation(anyhow!("{}: invalid q_mixture: {e}", path.display()))
        })?;
        if q_mixture.dim() != self.d_z {
            return Err(shape_err(format!(
                "q_mixture dimension {} does not match d_z {}",
                q_mixture.dim(),
                self.d_z
            )));
        }
        let mut feat_mean = [0.0; NODE_FEATURES];
        let mut feat_std = [0.0; NODE_FEATURES];
        feat_mean.copy_from_slice(&self.feat_mean);
        feat_std.copy_from_slice(&self.feat_std);
        Ok(TeacherModel {
            vgae: VgaeParams { w0, w_mu, w_logvar },
            q_mixture,
            feat_mean,
            feat_std,
            w_max: self.w_max,
        })
    }
}

pub fn write_teacher(path: &Path, model: &TeacherModel) -> CliResult<()> {
    write_json(path, &TeacherCheckpoint::from_model(model))
}

pub fn read_teacher(path: &Path) -> CliResult<TeacherModel> {
    let ckpt: TeacherCheckpoint = read_json(path)?;
    ckpt.into_model(path)
}

/// Serde mirror of the core student configuration, stored inside student
/// checkpoints so a model file is self-describing.
#[derive(Serialize, Deserialize, Clone)]
pub struct StudentConfigJson {
    enc_hidden: usize,
    dec_hidden: usize,
    grid_rows: usize,
    grid_cols: usize,
    cell_x: f64,
    cell_y: f64,
    conv_channels: usize,
    m_p: usize,
    d_z: usize,
    cpm_hidden: usize,
    gamma: f64,
    lr: f64,
    epochs: usize,
    batch_scenes: usize,
    k_inner: usize,
    sigma_floor: f64,
    rho_limit: f64,
    grad_clip: f64,
    seed: u64,
}

impl From<&StudentConfig> for StudentConfigJson {
    fn from(c: &StudentConfig) -> Self {
        Self {
            enc_hidden: c.enc_hidden,
            dec_hidden: c.dec_hidden,
            grid_rows: c.grid_rows,
            grid_cols: c.grid_cols,
            cell_x: c.cell_x,
            cell_y: c.cell_y,
            conv_channels: c.conv_channels,
            m_p: c.m_p,
            d_z: c.d_z,
            cpm_hidden: c.cpm_hidden,
            gamma: c.gamma,
            lr: c.lr,
            epochs: c.epochs,
            batch_scenes: c.batch_scenes,
            k_inner: c.k_inner,
            sigma_floor: c.sigma_floor,
            rho_limit: c.rho_limit,
            grad_clip: c.grad_clip,
            seed: c.seed,
        }
    }
}

impl From<&StudentConfigJson> for StudentConfig {
    fn from(c: &StudentConfigJson) -> Self {
        Self {
            enc_hidden: c.enc_hidden,
            dec_hidden: c.dec_hidden,
            grid_rows: c.grid_rows,
            grid_cols: c.grid_cols,
            cell_x: c.cell_x,
            cell_y: c.cell_y,
            conv_channels: c.conv_channels,
            m_p: c.m_p,
            d_z: c.d_z,
            cpm_hidden: c.cpm_hidden,
            gamma: c.gamma,
            lr: c.lr,
            epochs: c.epochs,
            batch_scenes: c.batch_scenes,
            k_inner: c.k_inner,
            sigma_floor: c.sigma_floor,
            rho_limit: c.rho_limit,
            grad_clip: c.grad_clip,
            seed: c.seed,
        }
    }
}

const STUDENT_TENSOR_NAMES: [&str; 20] = [
    "encoder_wx",
    "encoder_wh",
    "encoder_b",
    "conv_kernel",
    "conv_bias",
    "ctx_w",
    "ctx_b",
    "decoder_wx",
    "decoder_wh",
    "decoder_b",
    "head_w",
    "head_b",
    "cpm_w1",
    "cpm_b1",
    "cpm_w_weight",
    "cpm_b_weight",
    "cpm_w_mean",
    "cpm_b_mean",
    "cpm_w_var",
    "cpm_b_var",
];

/// The student's parameter tensors in checkpoint order ([`STUDENT_TENSOR_NAMES`]).
pub fn student_tensors(p: &StudentParams) -> [&Tensor; 20] {
    [
        &p.encoder.wx,
        &p.encoder.wh,
        &p.encoder.b,
        &p.conv_kernel,
        &p.conv_bias,
        &p.ctx_w,
        &p.ctx_b,
        &p.decoder.wx,
        &p.decoder.wh,
        &p.decoder.b,
        &p.head_w,
        &p.head_b,
        &p.cpm_w1,
        &p.cpm_b1,
        &p.cpm_w_weight,
        &p.cpm_b_weight,
        &p.cpm_w_mean,
        &p.cpm_b_mean,
        &p.cpm_w_var,
        &p.cpm_b_var,
    ]
}

/// Student checkpoint: the architecture-defining config plus every named
/// weight tensor.
#[derive(Serialize, Deserialize)]
pub struct StudentCheckpoint {
    version: String,
    kind: String,
    d_z: usize,
    config: StudentConfigJson,
    weights: BTreeMap<String, TensorJson>,
}

impl StudentCheckpoint {
    pub fn from_parts(params: &StudentParams, cfg: &StudentConfig) -> Self {
        let weights = STUDENT_TENSOR_NAMES
            .iter()
            .zip(student_tensors(params))
            .map(|(&name, t)| (name.to_string(), TensorJson::from_tensor(t)))
            .collect();
        Self {
            version: FORMAT_VERSION.to_string(),
            kind: "student".into(),
            d_z: cfg.d_z,
            config: StudentConfigJson::from(cfg),
            weights,
        }
    }

    pub fn into_parts(mut self, path: &Path) -> CliResult<(StudentParams, StudentConfig)> {
        expect_kind(&self.kind, "student", path)?;
        let cfg = StudentConfig::from(&self.config);
        // Initialize at the right shapes, then overwrite every tensor; this
        // reuses the core shape logic instead of duplicating it here.
        let reference = StudentParams::init(&cfg, 0).map_err(|e| {
            validation(anyhow!("{}: invalid student config: {e}", path.display()))
        })?;
        let mut loaded = Vec::with_capacity(STUDENT_TENSOR_NAMES.len());
        for (&name, expected) in STUDENT_TENSOR_NAMES.iter().zip(student_tensors(&reference)) {
            let t = take_tensor(&mut self.weights, name, path)?;
            if t.rows() != expected.rows() || t.cols() != expected.cols() {
                return Err(validation(anyhow!(
                    "{}: weight {name} must be {}x{}, got {}x{}",
                    path.display(),
                    expected.rows(),
                    expected.cols(),
                    t.rows(),
                    t.cols()
                )));
            }
            loaded.push(t);
        }
        if let Some(name) = self.weights.keys().next() {
            return Err(validation(anyhow!(
                "{}: unexpected weight {name} in student checkpoint",
                path.display()
            )));
        }
        let mut it = loaded.into_iter();
        let mut next = || it.next().expect("twenty tensors were just collected");
        let params = StudentParams {
            encoder: LstmParams { wx: next(), wh: next(), b: next() },
            conv_kernel: next(),
            conv_bias: next(),
            ctx_w: next(),
            ctx_b: next(),
            decoder: LstmParams { wx: next(), wh: next(), b: next() },
            head_w: next(),
            head_b: next(),
            cpm_w1: next(),
            cpm_b1: next(),
            cpm_w_weight: next(),
            cpm_b_weight: next(),
            cpm_w_mean: next(),
            cpm_b_mean: next(),
            cpm_w_var: next(),
            cpm_b_var: next(),
        };
        Ok((params, cfg))
    }
}

pub fn write_student(path: &Path, params: &StudentParams, cfg: &StudentConfig) -> CliResult<()> {
    write_json(path, &StudentCheckpoint::from_parts(params, cfg))
}

pub fn read_student(path: &Path) -> CliResult<(StudentParams, StudentConfig)> {
    let ckpt: StudentCheckpoint = read_json(path)?;
    ckpt.into_parts(path)
}

// ---------------------------------------------------------------------------
// Evaluation report JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
pub struct MetricsBlockJson {
    scene_count: usize,
    trajectory_count: usize,
    collision_rate: f64,
    rmse_by_horizon: Vec<(f64, f64)>,
}

impl MetricsBlockJson {
    fn from_block(b: &MetricsBlock) -> Self {
        Self {
            scene_count: b.scene_count,
            trajectory_count: b.trajectory_count,
            collision_rate: b.collision_rate,
            rmse_by_horizon: b.rmse_by_horizon.clone(),
        }
    }

    fn into_block(self) -> MetricsBlock {
        MetricsBlock {
            scene_count: self.scene_count,
            trajectory_count: self.trajectory_count,
            collision_rate: self.collision_rate,
            rmse_by_horizon: self.rmse_by_horizon,
        }
    }
}

#[derive(Serialize, Deserialize, Clone)]
pub struct EvalReportJson {
    overall: MetricsBlockJson,
    per_kind: Vec<(String, MetricsBlockJson)>,
}

impl EvalReportJson {
    pub fn from_report(r: &EvalReport) -> Self {
        Self {
            overall: MetricsBlockJson::from_block(&r.overall),
            per_kind: r
                .per_kind
                .iter()
                .map(|(kind, block)| {
                    (kind.as_str().to_string(), MetricsBlockJson::from_block(block))
                })
                .collect(),
        }
    }

    pub fn into_report(self) -> congest_core::Result<EvalReport> {
        Ok(EvalReport {
            overall: self.overall.into_block(),
            per_kind: self
                .per_kind
                .into_iter()
                .map(|(kind, block)| Ok((ScenarioKind::from_str(&kind)?, block.into_block())))
                .collect::<congest_core::Result<Vec<_>>>()?,
        })
    }
}

/// The file `evaluate` writes: model metrics beside the constant-velocity
/// baseline, plus the rendered comparison table.
#[derive(Serialize, Deserialize)]
pub struct EvaluationJson {
    pub model: EvalReportJson,
    pub constant_velocity: EvalReportJson,
    pub table: String,
}

// ---------------------------------------------------------------------------
// Solve output JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Everything a standalone bound minimization produces.
#[derive(Serialize, Deserialize)]
pub struct SolveJson {
    pub p: MixtureJson,
    pub alpha: MatrixJson,
    pub beta: MatrixJson,
    pub bound_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveJson {
    pub fn new(p: &GaussianMixture, coupling: &Coupling, report: &CpmReport) -> Self {
        let (m_q, m_p) = (coupling.m_q(), coupling.m_p());
        let mut alpha = Vec::with_capacity(m_q * m_p);
        let mut beta = Vec::with_capacity(m_q * m_p);
        for i in 0..m_q {
            for j in 0..m_p {
                alpha.push(coupling.alpha(i, j));
                beta.push(coupling.beta(i, j));
            }
        }
        Self {
            p: MixtureJson::from_mixture(p),
            alpha: MatrixJson { rows: m_q, cols: m_p, data: alpha },
            beta: MatrixJson { rows: m_q, cols: m_p, data: beta },
            bound_trace: report.bound_trace.clone(),
            iterations: report.iterations,
            converged: report.converged,
        }
    }
}

// ---------------------------------------------------------------------------
// CSV emissions
// ---------------------------------------------------------------------------

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| write_failure(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Student training log: one row per epoch with both loss terms.
pub fn write_training_log(path: &Path, epochs: &[EpochStats]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "l2", "l1", "total"]).map_err(|e| write_failure(path, e))?;
    for e in epochs {
        w.write_record([
            e.epoch.to_string(),
            e.nll.to_string(),
            e.cpm.to_string(),
            e.total.to_string(),
        ])
        .map_err(|e| write_failure(path, e))?;
    }
    w.flush().map_err(|e| write_failure(path, e))
}

/// `(horizon_s, rmse_m)` rows from the overall block of a report.
pub fn write_rmse_csv(path: &Path, report: &EvalReport) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["horizon", "rmse"]).map_err(|e| write_failure(path, e))?;
    for &(h, rmse) in &report.overall.rmse_by_horizon {
        w.write_record([h.to_string(), rmse.to_string()])
            .map_err(|e| write_failure(path, e))?;
    }
    w.flush().map_err(|e| write_failure(path, e))
}

/// `(scenario, collision_rate)` rows, one per scenario kind in the report.
pub fn write_collision_csv(path: &Path, report: &EvalReport) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["scenario", "collision_rate"])
        .map_err(|e| write_failure(path, e))?;
    for (kind, block) in &report.per_kind {
        w.write_record([kind.as_str().to_string(), block.collision_rate.to_string()])
            .map_err(|e| write_failure(path, e))?;
    }
    w.flush().map_err(|e| write_failure(path, e))
}

/// Per-frame posterior responsibilities of extracted patterns: one row per
/// `(scene, observed frame)`, with one column per mixture component.
pub fn write_responsibilities_csv(
    path: &Path,
    m_q: usize,
    rows: &[(String, usize, Vec<f64>)],
) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["scene_id".to_string(), "frame".to_string()];
    header.extend((1..=m_q).map(|k| format!("r{k}")));
    w.write_record(&header).map_err(|e| write_failure(path, e))?;
    for (scene_id, frame, resp) in rows {
        let mut record = vec![scene_id.clone(), frame.to_string()];
        record.extend(resp.iter().map(f64::to_string));
        w.write_record(&record).map_err(|e| write_failure(path, e))?;
    }
    w.flush().map_err(|e| write_failure(path, e))
}

// ---------------------------------------------------------------------------
// Conversion input CSV
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawRow {
    scene_id: String,
    agent_id: u64,
    frame: i64,
    x: f64,
    y: f64,
}

/// Read the raw trajectory CSV (`scene_id, agent_id, frame, x, y`) into
/// scenes of kind `external`. Frames of each track must be contiguous and
/// share one common starting index across the file (0- or 1-based). The
/// scene length comes from the data; `dt` and `t_h` come from the config.
pub fn read_raw_csv(path: &Path, dt: f64, t_h: usize) -> CliResult<Vec<Scene>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| read_failure(path, e))?;
    // scene -> agent -> (frame, x, y); BTreeMaps keep output order stable.
    let mut by_scene: BTreeMap<String, BTreeMap<u64, Vec<(i64, f64, f64)>>> = BTreeMap::new();
    let mut first_frame: Option<i64> = None;
    for (rowno, row) in reader.deserialize::<RawRow>().enumerate() {
        let row = row.map_err(|e| {
            validation(anyhow!("{} row {}: {e}", path.display(), rowno + 1))
        })?;
        let start = *first_frame.get_or_insert(row.frame);
        if row.frame < start {
            first_frame = Some(row.frame);
        }
        by_scene
            .entry(row.scene_id)
            .or_default()
            .entry(row.agent_id)
            .or_default()
            .push((row.frame, row.x, row.y));
    }
    let start = match first_frame {
        Some(f) if f == 0 || f == 1 => f,
        Some(f) => {
            return Err(validation(anyhow!(
                "{}: frames must start at 0 or 1, found minimum {f}",
                path.display()
            )))
        }
        None => return Ok(Vec::new()),
    };
    let mut scenes = Vec::new();
    for (scene_id, agents) in by_scene {
        let mut tracks = Vec::new();
        for (agent_id, mut samples) in agents {
            samples.sort_by_key(|&(frame, _, _)| frame);
            for (offset, &(frame, _, _)) in samples.iter().enumerate() {
                if frame != start + offset as i64 {
                    return Err(validation(anyhow!(
                        "{}: scene {scene_id} agent {agent_id}: frames are not \
                         contiguous from {start} (missing or duplicate frame near {frame})",
                        path.display()
                    )));
                }
            }
            let positions = samples.into_iter().map(|(_, x, y)| [x, y]).collect();
            tracks.push(AgentTrack { agent_id, positions });
        }
        let t_p = tracks.first().map_or(0, |t: &AgentTrack| t.positions.len());
        let scene = Scene {
            scene_id: scene_id.clone(),
            kind: ScenarioKind::External,
            dt,
            t_h,
            t_p,
            tracks,
        };
        scene.validate().map_err(Failure::from)?;
        scenes.push(scene);
    }
    Ok(scenes)
}
