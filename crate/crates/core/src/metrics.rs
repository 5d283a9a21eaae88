//! Evaluation harness: collision rate, displacement error by horizon, the
//! constant-velocity baseline, and side-by-side report comparison.
//!
//! Predictions are plain position rollouts keyed by scene id, so the same
//! functions evaluate the learned predictor, ablations, and baselines. The
//! collision rate substitutes each agent's predicted future into the scene
//! alongside the true history and reuses the ground-truth collision labeler;
//! only events that begin after the observation window count, so the metric
//! judges the prediction rather than the history.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::scene::{Scene, ScenarioKind};
use crate::sim::label_collisions;

/// Predicted future positions for one agent, one `[x, y]` row per predicted
/// frame (`t_h + 1 ..= t_p` of the matching scene).
pub type AgentPrediction = Vec<[f64; 2]>;

/// Predicted futures for a set of scenes, keyed by scene id. Iteration is in
/// id order, so downstream accumulation is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    by_scene: BTreeMap<String, Vec<AgentPrediction>>,
}

impl Predictions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register the predicted futures for a scene, replacing any previous
    /// entry with the same id.
    pub fn insert(&mut self, scene_id: &str, agents: Vec<AgentPrediction>) {
        self.by_scene.insert(scene_id.to_string(), agents);
    }

    pub fn get(&self, scene_id: &str) -> Option<&Vec<AgentPrediction>> {
        self.by_scene.get(scene_id)
    }

    pub fn len(&self) -> usize {
        self.by_scene.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_scene.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vec<AgentPrediction>)> {
        self.by_scene.iter().map(|(id, agents)| (id.as_str(), agents))
    }
}

/// Constant-velocity baseline: every agent continues with the velocity of
/// its last observed step.
pub fn constant_velocity_predict(scene: &Scene) -> Vec<AgentPrediction> {
    let horizon = scene.horizon();
    scene
        .tracks
        .iter()
        .map(|track| {
            let last = track.positions[scene.t_h - 1];
            let prev = track.positions[scene.t_h - 2];
            let step = [last[0] - prev[0], last[1] - prev[1]];
            (1..=horizon)
                .map(|k| {
                    [last[0] + step[0] * k as f64, last[1] + step[1] * k as f64]
                })
                .collect()
        })
        .collect()
}

fn prediction_for<'p>(
    scene: &Scene,
    preds: &'p Predictions,
) -> Result<&'p Vec<AgentPrediction>> {
    let agents = preds.get(&scene.scene_id).ok_or_else(|| {
        Error::PredictionMismatch(format!("no prediction for scene {}", scene.scene_id))
    })?;
    if agents.len() != scene.n_agents() {
        return Err(Error::PredictionMismatch(format!(
            "scene {} has {} agents but the prediction covers {}",
            scene.scene_id,
            scene.n_agents(),
            agents.len()
        )));
    }
    for (i, agent) in agents.iter().enumerate() {
        if agent.len() != scene.horizon() {
            return Err(Error::PredictionMismatch(format!(
                "scene {} agent {i}: predicted {} frames, horizon is {}",
                scene.scene_id,
                agent.len(),
                scene.horizon()
            )));
        }
    }
    Ok(agents)
}

/// Splice each agent's predicted future onto its true history, yielding a
/// scene suitable for collision labeling.
pub fn predicted_scene(scene: &Scene, preds: &Predictions) -> Result<Scene> {
    let agents = prediction_for(scene, preds)?;
    let mut spliced = scene.clone();
    for (track, agent) in spliced.tracks.iter_mut().zip(agents) {
        track.positions.truncate(scene.t_h);
        track.positions.extend_from_slice(agent);
    }
    spliced.validate()?;
    Ok(spliced)
}

/// Percentage of predicted trajectories involved in at least one collision
/// event that begins after the observation window, with predictions spliced
/// onto true histories. Every scene must have a prediction.
pub fn collision_rate(scenes: &[&Scene], preds: &Predictions, d_col: f64) -> Result<f64> {
    let mut flagged = 0usize;
    let mut total = 0usize;
    for scene in scenes {
        let spliced = predicted_scene(scene, preds)?;
        let label = label_collisions(&spliced, d_col)?;
        let mut involved = alloc::vec![false; scene.n_agents()];
        for event in &label.events {
            if event.frame > scene.t_h {
                involved[event.u] = true;
                involved[event.v] = true;
            }
        }
        flagged += involved.iter().filter(|&&f| f).count();
        total += scene.n_agents();
    }
    if total == 0 {
        return Err(Error::InvalidConfig(
            "collision rate needs at least one trajectory".to_string(),
        ));
    }
    Ok(100.0 * flagged as f64 / total as f64)
}

/// Default evaluation horizons in seconds: one through five.
pub fn default_horizons() -> [f64; 5] {
    [1.0, 2.0, 3.0, 4.0, 5.0]
}

/// Map a horizon in seconds to a 1-based scene frame. The horizon must be a
/// positive multiple of the frame spacing inside the prediction window.
fn frame_for_horizon(scene: &Scene, horizon_s: f64) -> Result<usize> {
    let steps = (horizon_s / scene.dt).round();
    if !(steps >= 1.0) || (steps * scene.dt - horizon_s).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon_s} s is not a positive multiple of dt = {} s",
            scene.dt
        )));
    }
    let steps = steps as usize;
    if steps > scene.horizon() {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon_s} s exceeds the {}-step prediction window",
            scene.horizon()
        )));
    }
    Ok(scene.t_h + steps)
}

/// Root-mean-square Euclidean displacement error at each horizon, pooled
/// over every agent of every scene. Returns `(horizon_s, rmse)` pairs in the
/// order given.
pub fn rmse_by_horizon(
    scenes: &[&Scene],
    preds: &Predictions,
    horizons_s: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if scenes.is_empty() {
        return Err(Error::InvalidConfig("rmse needs at least one scene".to_string()));
    }
    let mut sums = alloc::vec![0.0f64; horizons_s.len()];
    let mut count = 0usize;
    for scene in scenes {
        let agents = prediction_for(scene, preds)?;
        count += scene.n_agents();
        for (h, &horizon_s) in horizons_s.iter().enumerate() {
            let frame = frame_for_horizon(scene, horizon_s)?;
            for (a, agent) in agents.iter().enumerate() {
                let truth = scene.position(a, frame);
                let pred = agent[frame - scene.t_h - 1];
                let dx = pred[0] - truth[0];
                let dy = pred[1] - truth[1];
                sums[h] += dx * dx + dy * dy;
            }
        }
    }
    Ok(horizons_s
        .iter()
        .zip(&sums)
        .map(|(&h, &s)| (h, (s / count as f64).sqrt()))
        .collect())
}

/// Aggregate metrics over one group of scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsBlock {
    pub scene_count: usize,
    pub trajectory_count: usize,
    pub collision_rate: f64,
    /// `(horizon seconds, rmse meters)` in ascending horizon order.
    pub rmse_by_horizon: Vec<(f64, f64)>,
}

/// Full evaluation: overall metrics plus a per-scenario-kind breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: MetricsBlock,
    /// One entry per scenario kind present, in kind declaration order.
    pub per_kind: Vec<(ScenarioKind, MetricsBlock)>,
}

fn metrics_block(
    scenes: &[&Scene],
    preds: &Predictions,
    d_col: f64,
    horizons_s: &[f64],
) -> Result<MetricsBlock> {
    Ok(MetricsBlock {
        scene_count: scenes.len(),
        trajectory_count: scenes.iter().map(|s| s.n_agents()).sum(),
        collision_rate: collision_rate(scenes, preds, d_col)?,
        rmse_by_horizon: rmse_by_horizon(scenes, preds, horizons_s)?,
    })
}

/// Evaluate predictions over `scenes`, overall and broken down by kind.
pub fn evaluate(
    scenes: &[&Scene],
    preds: &Predictions,
    d_col: f64,
    horizons_s: &[f64],
) -> Result<EvalReport> {
    let overall = metrics_block(scenes, preds, d_col, horizons_s)?;
    let mut per_kind = Vec::new();
    for kind in all_kinds() {
        let subset: Vec<&Scene> =
            scenes.iter().copied().filter(|s| s.kind == kind).collect();
        if !subset.is_empty() {
            per_kind.push((kind, metrics_block(&subset, preds, d_col, horizons_s)?));
        }
    }
    Ok(EvalReport { overall, per_kind })
}

fn all_kinds() -> [ScenarioKind; 5] {
    [
        ScenarioKind::Following,
        ScenarioKind::Overtaking,
        ScenarioKind::Intersection,
        ScenarioKind::Aggressive,
        ScenarioKind::External,
    ]
}

/// Render named reports side by side: one metric per row, one column per
/// report, and for every report after the first a delta column against the
/// first. All reports must share the first report's horizon list.
pub fn compare(reports: &[(&str, &EvalReport)]) -> Result<String> {
    let (_, first) = reports.first().ok_or_else(|| {
        Error::InvalidConfig("compare needs at least one report".to_string())
    })?;
    let horizons: Vec<f64> =
        first.overall.rmse_by_horizon.iter().map(|&(h, _)| h).collect();
    for (name, report) in reports {
        let theirs: Vec<f64> =
            report.overall.rmse_by_horizon.iter().map(|&(h, _)| h).collect();
        if theirs != horizons {
            return Err(Error::InvalidConfig(format!(
                "report {name} uses different horizons"
            )));
        }
    }

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    rows.push((
        "collision_rate_pct".to_string(),
        reports.iter().map(|(_, r)| r.overall.collision_rate).collect(),
    ));
    for (i, &h) in horizons.iter().enumerate() {
        rows.push((
            format!("rmse@{h:.1}s_m"),
            reports.iter().map(|(_, r)| r.overall.rmse_by_horizon[i].1).collect(),
        ));
    }

    let mut out = String::new();
    out.push_str(&format!("{:<20}", "metric"));
    for (name, _) in reports {
        out.push_str(&format!(" {name:>12}"));
    }
    for (name, _) in reports.iter().skip(1) {
        out.push_str(&format!(" {:>12}", format!("d({name})")));
    }
    out.push('\n');
    for (label, values) in &rows {
        out.push_str(&format!("{label:<20}"));
        for v in values {
            out.push_str(&format!(" {v:>12.4}"));
        }
        for v in values.iter().skip(1) {
            out.push_str(&format!(" {:>12.4}", v - values[0]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Area under the ROC curve from positive- and negative-class scores, via
/// the rank-sum statistic with average ranks on ties.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::InvalidConfig(
            "auc needs scores from both classes".to_string(),
        ));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidConfig("auc scores must be finite".to_string()));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Ranks are 1-based; tied scores share the mean rank of their block.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        for entry in &all[i..j] {
            if entry.1 {
                rank_sum_pos += mean_rank;
            }
        }
        i = j;
    }
    let n_pos = positive.len() as f64;
    let n_neg = negative.len() as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}
