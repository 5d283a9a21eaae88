//! Deterministic scenario generator and collision labeling.
//!
//! Four scripted scenario kinds cover the interaction regimes the models are
//! trained and judged on: same-lane *following* behind a speed-varying
//! leader, *overtaking* with a lateral lane-change around a slower vehicle,
//! *intersection* crossings where lower-priority agents brake to yield, and
//! *aggressive* crossings with yielding disabled so that a collision occurs
//! by construction inside the prediction window. Kinematics are scripted
//! splines and simple gap/yield rules — enough to make the scenario
//! contracts provable (aggressive scenes collide, the other kinds never do)
//! without a traffic micro-simulation.
//!
//! Everything is a pure function of its configuration: the same seed yields
//! the same scene, bit for bit. Gaussian position noise (`noise_std`) is
//! added last, after the noiseless geometry is laid down.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::rng::{child_seed, seeded, shuffle, RngExt};
use crate::scene::{AgentTrack, Dataset, Scene, ScenarioKind};

/// Distance below which two agents at the same frame count as colliding.
pub const DEFAULT_D_COL: f64 = 2.0;

/// Lateral offset of a right-hand lane from the road center line, meters.
const LANE_OFFSET: f64 = 1.75;
/// Width of one lane; the overtaker moves this far to the left, meters.
const LANE_WIDTH: f64 = 3.5;
/// Comfortable acceleration bound for scripted agents, m/s^2.
const A_MAX: f64 = 2.5;
/// Yield braking rate at intersections, m/s^2.
const A_BRAKE: f64 = 3.0;
/// Gap-keeping gains of the following controller.
const K_GAP: f64 = 0.4;
const K_VEL: f64 = 1.5;
/// Stop line distance before the conflict point, meters.
const STOP_BACK: f64 = 7.0;
/// An agent counts as cleared this far past its conflict point, meters.
const CLEAR_AHEAD: f64 = 8.0;
/// Duration of a lane change, seconds.
const LANE_CHANGE_S: f64 = 1.6;

/// Timing and noise shared by every scene of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Frame spacing, seconds.
    pub dt: f64,
    /// Observed history frames.
    pub t_h: usize,
    /// Total frames.
    pub t_p: usize,
    /// Standard deviation of the position noise, meters.
    pub noise_std: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        // 3 s of history and 5 s of future at 5 Hz.
        Self { dt: 0.2, t_h: 15, t_p: 40, noise_std: 0.05 }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_h == 0 || self.t_h >= self.t_p {
            return Err(Error::InvalidConfig(format!(
                "need 0 < t_h < t_p, got t_h = {}, t_p = {}",
                self.t_h, self.t_p
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Everything needed to generate one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n_agents: usize,
    pub seed: u64,
    pub sim: SimConfig,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, n_agents: usize, seed: u64) -> Self {
        Self { kind, n_agents, seed, sim: SimConfig::default() }
    }

    fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let range = agent_count_range(self.kind)?;
        if self.n_agents < range.0 || self.n_agents > range.1 {
            return Err(Error::InvalidConfig(format!(
                "{} scenes support {}..={} agents, got {}",
                self.kind.as_str(),
                range.0,
                range.1,
                self.n_agents
            )));
        }
        if self.kind == ScenarioKind::Aggressive && self.sim.t_p < self.sim.t_h + 3 {
            return Err(Error::InvalidConfig(format!(
                "aggressive scenes place the collision after the history window and \
                 need t_p >= t_h + 3, got t_h = {}, t_p = {}",
                self.sim.t_h, self.sim.t_p
            )));
        }
        Ok(())
    }
}

/// Supported agent counts per generated kind.
fn agent_count_range(kind: ScenarioKind) -> Result<(usize, usize)> {
    match kind {
        ScenarioKind::Following => Ok((2, 6)),
        ScenarioKind::Overtaking => Ok((2, 4)),
        // One agent per intersection arm.
        ScenarioKind::Intersection => Ok((2, 4)),
        ScenarioKind::Aggressive => Ok((2, 4)),
        ScenarioKind::External => Err(Error::InvalidConfig(
            "external scenes are imported, not generated".to_string(),
        )),
    }
}

/// One pairwise collision: track indices `u < v` and the 1-based frame where
/// the contact run begins. Consecutive frames of the same touching pair are
/// deduplicated into a single event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollisionEvent {
    pub u: usize,
    pub v: usize,
    pub frame: usize,
}

/// Ground-truth collision labels for a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionLabel {
    pub events: Vec<CollisionEvent>,
    /// Per track: involved in at least one event.
    pub flags: Vec<bool>,
}

impl CollisionLabel {
    pub fn any(&self) -> bool {
        !self.events.is_empty()
    }

    pub fn flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Distance-threshold collision labeling.
///
/// A pair is in contact at a frame when the agents are closer than `d_col`;
/// each maximal run of consecutive contact frames becomes one event stamped
/// with the run's first frame. A trajectory is flagged if it appears in any
/// event.
pub fn label_collisions(scene: &Scene, d_col: f64) -> Result<CollisionLabel> {
    if !(d_col > 0.0) || !d_col.is_finite() {
        return Err(Error::InvalidConfig(format!("d_col must be positive, got {d_col}")));
    }
    scene.validate()?;
    let n = scene.n_agents();
    let mut events = Vec::new();
    let mut flags = vec![false; n];
    for u in 0..n {
        for v in u + 1..n {
            let mut in_contact = false;
            for t in 1..=scene.t_p {
                let a = scene.position(u, t);
                let b = scene.position(v, t);
                let touching = (a[0] - b[0]).hypot(a[1] - b[1]) < d_col;
                if touching && !in_contact {
                    events.push(CollisionEvent { u, v, frame: t });
                    flags[u] = true;
                    flags[v] = true;
                }
                in_contact = touching;
            }
        }
    }
    events.sort_by_key(|e| (e.frame, e.u, e.v));
    Ok(CollisionLabel { events, flags })
}

/// Cubic smoothstep clamped to `[0, 1]`.
fn smoothstep01(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

const HEADINGS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];

fn perp_right(h: [f64; 2]) -> [f64; 2] {
    [h[1], -h[0]]
}

/// Crossing point of the right-hand lanes of two perpendicular arms.
fn lane_crossing(a: usize, b: usize) -> [f64; 2] {
    let (ha, hb) = (HEADINGS[a], HEADINGS[b]);
    let (pa, pb) = (perp_right(ha), perp_right(hb));
    // Solve ta*ha - tb*hb = LANE_OFFSET * (pb - pa).
    let r = [LANE_OFFSET * (pb[0] - pa[0]), LANE_OFFSET * (pb[1] - pa[1])];
    let det = -ha[0] * hb[1] + ha[1] * hb[0];
    let ta = (-r[0] * hb[1] + hb[0] * r[1]) / det;
    [LANE_OFFSET * pa[0] + ta * ha[0], LANE_OFFSET * pa[1] + ta * ha[1]]
}

/// Generate one scene; identical configs yield identical scenes.
pub fn generate_scene(cfg: &ScenarioConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let mut tracks = match cfg.kind {
        ScenarioKind::Following => following_tracks(cfg, &mut rng),
        ScenarioKind::Overtaking => overtaking_tracks(cfg, &mut rng),
        ScenarioKind::Intersection => intersection_tracks(cfg, &mut rng),
        ScenarioKind::Aggressive => aggressive_tracks(cfg, &mut rng),
        ScenarioKind::External => unreachable!("rejected by validate"),
    };
    if cfg.sim.noise_std > 0.0 {
        for track in &mut tracks {
            for p in &mut track.positions {
                p[0] += cfg.sim.noise_std * rng.normal();
                p[1] += cfg.sim.noise_std * rng.normal();
            }
        }
    }
    let scene = Scene {
        scene_id: format!("{}-{:016x}", cfg.kind.as_str(), cfg.seed),
        kind: cfg.kind,
        dt: cfg.sim.dt,
        t_h: cfg.sim.t_h,
        t_p: cfg.sim.t_p,
        tracks,
    };
    scene.validate()?;
    Ok(scene)
}

/// Same-lane platoon: the leader's speed oscillates, followers keep their
/// desired gap with a proportional controller. Gaps never drop anywhere near
/// the collision threshold.
fn following_tracks<R: RngCore>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<AgentTrack> {
    let n = cfg.n_agents;
    let dt = cfg.sim.dt;
    let v0 = rng.uniform_in(8.0, 13.0);
    let amp = rng.uniform_in(1.0, 2.0);
    let freq = rng.uniform_in(0.3, 0.6);
    let gaps: Vec<f64> = (1..n).map(|_| rng.uniform_in(9.0, 13.0)).collect();

    let mut x = vec![0.0; n];
    for i in 1..n {
        x[i] = x[i - 1] - gaps[i - 1];
    }
    let mut v = vec![v0; n];
    let mut positions: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(cfg.sim.t_p); n];
    for i in 0..n {
        positions[i].push([x[i], 0.0]);
    }
    for frame in 1..cfg.sim.t_p {
        let t = frame as f64 * dt;
        v[0] = v0 + amp * (freq * t).sin();
        for i in 1..n {
            let gap = x[i - 1] - x[i];
            let acc = (K_GAP * (gap - gaps[i - 1]) + K_VEL * (v[i - 1] - v[i]))
                .clamp(-A_MAX, A_MAX);
            v[i] = (v[i] + acc * dt).max(0.0);
        }
        for i in 0..n {
            x[i] += v[i] * dt;
            positions[i].push([x[i], 0.0]);
        }
    }
    tracks_from_positions(positions)
}

/// A faster vehicle approaches a slow leader, changes one lane to the left
/// when the gap closes to 14 m, passes, and (with no platoon ahead) returns
/// once it is 10 m clear. Extra agents form a platoon ahead of the leader,
/// in which case the overtaker stays in the passing lane.
fn overtaking_tracks<R: RngCore>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<AgentTrack> {
    let n = cfg.n_agents;
    let dt = cfg.sim.dt;
    let v_slow = rng.uniform_in(6.0, 9.0);
    let dv = rng.uniform_in(4.0, 7.0);
    let t1 = rng.uniform_in(0.5, 3.0);
    let gap0 = 14.0 + dv * t1;
    // The overtaker draws level (10 m ahead) at t2; the outbound lane change
    // is always complete by then since t2 - t1 = 24 / dv > LANE_CHANGE_S.
    let t2 = (10.0 + gap0) / dv;
    let ahead: Vec<f64> = (2..n).map(|_| rng.uniform_in(14.0, 18.0)).collect();

    let mut positions: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(cfg.sim.t_p); n];
    for frame in 0..cfg.sim.t_p {
        let t = frame as f64 * dt;
        positions[0].push([v_slow * t, 0.0]);
        let mut y = LANE_WIDTH * smoothstep01((t - t1) / LANE_CHANGE_S);
        if n == 2 {
            y -= LANE_WIDTH * smoothstep01((t - t2) / LANE_CHANGE_S);
        }
        positions[1].push([-gap0 + (v_slow + dv) * t, y]);
        let mut lead = 0.0;
        for (k, gap) in ahead.iter().enumerate() {
            lead += gap;
            positions[2 + k].push([lead + v_slow * t, 0.0]);
        }
    }
    tracks_from_positions(positions)
}

/// Per-agent intersection state while scripting.
struct ArmAgent {
    arm: usize,
    /// Progress along the arm from the start point.
    s: f64,
    v: f64,
    v_cruise: f64,
    /// Progress at which the lane reaches the junction center region.
    s_conflict: f64,
}

impl ArmAgent {
    fn world(&self) -> [f64; 2] {
        let h = HEADINGS[self.arm];
        let p = perp_right(h);
        [
            LANE_OFFSET * p[0] + (self.s - self.s_conflict) * h[0],
            LANE_OFFSET * p[1] + (self.s - self.s_conflict) * h[1],
        ]
    }
}

/// Crossing paths on up to four arms. Every agent brakes for all
/// lower-indexed agents that have not yet cleared the junction, holding at a
/// stop line 7 m short of it; agent 0 never yields. Priority by index keeps
/// the junction exclusive, so these scenes are collision free.
fn intersection_tracks<R: RngCore>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<AgentTrack> {
    let n = cfg.n_agents;
    let dt = cfg.sim.dt;
    let mut arms: Vec<usize> = (0..4).collect();
    shuffle(&mut arms, rng);
    let mut agents: Vec<ArmAgent> = (0..n)
        .map(|i| {
            let v_cruise = rng.uniform_in(7.0, 10.0);
            let dist = rng.uniform_in(25.0, 35.0);
            ArmAgent { arm: arms[i], s: 0.0, v: v_cruise, v_cruise, s_conflict: dist }
        })
        .collect();

    let mut positions: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(cfg.sim.t_p); n];
    for (i, a) in agents.iter().enumerate() {
        positions[i].push(a.world());
    }
    for _ in 1..cfg.sim.t_p {
        let snapshot: Vec<(f64, f64)> = agents.iter().map(|a| (a.s, a.s_conflict)).collect();
        for (i, a) in agents.iter_mut().enumerate() {
            let blocked =
                i > 0 && snapshot[..i].iter().any(|&(s, sc)| s < sc + CLEAR_AHEAD);
            let s_stop = a.s_conflict - STOP_BACK;
            let in_brake_zone =
                a.s < s_stop && s_stop - a.s <= a.v * a.v / (2.0 * A_BRAKE) + 3.0;
            if blocked && in_brake_zone {
                a.v = (a.v - A_BRAKE * dt).max(0.0);
            } else {
                a.v = (a.v + A_MAX * dt).min(a.v_cruise);
            }
            let mut s_next = a.s + a.v * dt;
            if blocked && a.s <= s_stop && s_next > s_stop {
                // Hard guarantee: never enter the junction while blocked.
                s_next = s_stop;
                a.v = 0.0;
            }
            a.s = s_next;
        }
        for (i, a) in agents.iter().enumerate() {
            positions[i].push(a.world());
        }
    }
    tracks_from_positions(positions)
}

/// Two agents on perpendicular arms timed to reach their lane crossing at
/// the same frame — a guaranteed collision inside the prediction window.
/// Extra agents approach on the remaining arms staggered by at least 2 s.
fn aggressive_tracks<R: RngCore>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<AgentTrack> {
    let n = cfg.n_agents;
    let dt = cfg.sim.dt;
    // Collision frame inside the predicted future (frames t_h+1 .. t_p).
    let span = ((cfg.sim.t_p - cfg.sim.t_h) / 2).max(1);
    let frame_c = (cfg.sim.t_h + 3 + rng.below(span)).min(cfg.sim.t_p);
    let t_col = (frame_c - 1) as f64 * dt;

    let arm_a = rng.below(4) as usize;
    let arm_b = if rng.below(2) == 0 { (arm_a + 1) % 4 } else { (arm_a + 3) % 4 };
    let cross = lane_crossing(arm_a, arm_b);
    let mut remaining: Vec<usize> =
        (0..4).filter(|&a| a != arm_a && a != arm_b).collect();
    shuffle(&mut remaining, rng);

    let mut positions: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(cfg.sim.t_p); n];
    for (i, row) in positions.iter_mut().enumerate() {
        let (arm, target, t_arrive) = if i < 2 {
            (if i == 0 { arm_a } else { arm_b }, cross, t_col)
        } else {
            // Extras aim for their own lane base point, staggered after the
            // crash time so no further contact occurs.
            let arm = remaining[i - 2];
            let p = perp_right(HEADINGS[arm]);
            let offset = 2.0 + 1.5 * (i - 2) as f64 + rng.uniform_in(0.0, 0.5);
            (arm, [LANE_OFFSET * p[0], LANE_OFFSET * p[1]], t_col + offset)
        };
        let v = rng.uniform_in(8.0, 12.0);
        let h = HEADINGS[arm];
        for frame in 0..cfg.sim.t_p {
            let t = frame as f64 * dt;
            row.push([
                target[0] + (t - t_arrive) * v * h[0],
                target[1] + (t - t_arrive) * v * h[1],
            ]);
        }
    }
    tracks_from_positions(positions)
}

fn tracks_from_positions(positions: Vec<Vec<[f64; 2]>>) -> Vec<AgentTrack> {
    positions
        .into_iter()
        .enumerate()
        .map(|(i, positions)| AgentTrack { agent_id: i as u64, positions })
        .collect()
}

/// Default desk-scale dataset composition: 100 scenes of each kind.
pub fn default_counts() -> [(ScenarioKind, usize); 4] {
    [
        (ScenarioKind::Following, 100),
        (ScenarioKind::Overtaking, 100),
        (ScenarioKind::Intersection, 100),
        (ScenarioKind::Aggressive, 100),
    ]
}

/// Generate a dataset of `counts` scenes per kind with varied agent counts.
/// Scene ids are `{kind}-{index:04}`; every scene derives its own seed from
/// `seed` and its global index, so any prefix of the dataset is stable under
/// count changes further down the list.
pub fn generate_dataset(
    counts: &[(ScenarioKind, usize)],
    sim: &SimConfig,
    seed: u64,
) -> Result<Dataset> {
    sim.validate()?;
    let mut scenes = Vec::new();
    let mut global = 0u64;
    for &(kind, count) in counts {
        if count > 0 {
            // Fails fast on kinds that cannot be generated.
            agent_count_range(kind)?;
        }
        for index in 0..count {
            let scene_seed = child_seed(seed, global);
            global += 1;
            let (lo, hi) = agent_count_range(kind)?;
            let mut pick = seeded(child_seed(scene_seed, u64::MAX));
            let n_agents = lo + pick.below(hi - lo + 1);
            let cfg = ScenarioConfig {
                kind,
                n_agents,
                seed: scene_seed,
                sim: *sim,
            };
            let mut scene = generate_scene(&cfg)?;
            scene.scene_id = format!("{}-{:04}", kind.as_str(), index);
            scenes.push(scene);
        }
    }
    Dataset::new(scenes)
}
