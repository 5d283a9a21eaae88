//! Scenes, trajectories, and datasets.
//!
//! A [`Scene`] is a fixed-length recording of every agent's position on a
//! common clock: `t_p` frames at spacing `dt`, of which the first `t_h` are
//! the observed history and the remaining `t_p - t_h` are the future to be
//! predicted. Frames are numbered 1-based throughout the crate so that
//! "frame t" matches the usual subscript convention; accessors take 1-based
//! indices and panic-free variants return errors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{seeded, shuffle};

/// The traffic situation a scene was generated from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScenarioKind {
    /// A platoon following a speed-varying leader in one lane.
    Following,
    /// A faster vehicle changing lanes to pass a slower one.
    Overtaking,
    /// Crossing paths with priority-ordered yielding.
    Intersection,
    /// Crossing paths with yielding disabled; collisions occur.
    Aggressive,
    /// Data imported from outside the simulator.
    External,
}

impl ScenarioKind {
    /// Stable lowercase name, used in ids and file formats.
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Following => "following",
            ScenarioKind::Overtaking => "overtaking",
            ScenarioKind::Intersection => "intersection",
            ScenarioKind::Aggressive => "aggressive",
            ScenarioKind::External => "external",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "following" => Ok(ScenarioKind::Following),
            "overtaking" => Ok(ScenarioKind::Overtaking),
            "intersection" => Ok(ScenarioKind::Intersection),
            "aggressive" => Ok(ScenarioKind::Aggressive),
            "external" => Ok(ScenarioKind::External),
            other => Err(Error::InvalidConfig(format!("unknown scenario kind: {other}"))),
        }
    }

    /// The four kinds the simulator can generate.
    pub fn generated() -> [ScenarioKind; 4] {
        [
            ScenarioKind::Following,
            ScenarioKind::Overtaking,
            ScenarioKind::Intersection,
            ScenarioKind::Aggressive,
        ]
    }
}

/// One agent's positions over the full scene, in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTrack {
    pub agent_id: u64,
    /// `(x, y)` per frame; length equals the scene's `t_p`.
    pub positions: Vec<[f64; 2]>,
}

/// A fixed-length multi-agent recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub kind: ScenarioKind,
    /// Frame spacing in seconds.
    pub dt: f64,
    /// Number of observed history frames.
    pub t_h: usize,
    /// Total number of frames (history plus future).
    pub t_p: usize,
    pub tracks: Vec<AgentTrack>,
}

impl Scene {
    /// Check every structural invariant; called by loaders and generators.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidScene { scene_id: self.scene_id.clone(), reason })
        };
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return fail(format!("dt must be positive and finite, got {}", self.dt));
        }
        if self.t_h == 0 || self.t_h >= self.t_p {
            return fail(format!(
                "need 0 < t_h < t_p, got t_h = {}, t_p = {}",
                self.t_h, self.t_p
            ));
        }
        if self.tracks.is_empty() {
            return fail(format!("scene has no agents"));
        }
        let mut seen = Vec::with_capacity(self.tracks.len());
        for track in &self.tracks {
            if seen.contains(&track.agent_id) {
                return fail(format!("duplicate agent id {}", track.agent_id));
            }
            seen.push(track.agent_id);
            if track.positions.len() != self.t_p {
                return fail(format!(
                    "agent {} has {} frames, expected t_p = {}",
                    track.agent_id,
                    track.positions.len(),
                    self.t_p
                ));
            }
            if track.positions.iter().flatten().any(|v| !v.is_finite()) {
                return fail(format!("agent {} has non-finite positions", track.agent_id));
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.tracks.len()
    }

    /// Number of future frames.
    pub fn horizon(&self) -> usize {
        self.t_p - self.t_h
    }

    /// Position of agent `a` (by track index) at 1-based frame `t`.
    pub fn position(&self, a: usize, t: usize) -> [f64; 2] {
        self.tracks[a].positions[t - 1]
    }

    /// Velocities of all agents at 1-based frame `t`, by backward difference:
    /// `v_t = (p_t - p_{t-1}) / dt`. The first frame has no predecessor, so
    /// its velocity copies frame 2's (the earliest observable motion).
    pub fn velocities(&self, t: usize) -> Result<Vec<[f64; 2]>> {
        if t == 0 || t > self.t_p {
            return Err(Error::InvalidScene {
                scene_id: self.scene_id.clone(),
                reason: format!("frame {t} out of 1..={}", self.t_p),
            });
        }
        let t = if t == 1 { 2 } else { t };
        Ok(self
            .tracks
            .iter()
            .map(|track| {
                let p = track.positions[t - 1];
                let q = track.positions[t - 2];
                [(p[0] - q[0]) / self.dt, (p[1] - q[1]) / self.dt]
            })
            .collect())
    }
}

/// Which side of the train/test split a scene belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A collection of scenes with an assignment to train and test sides.
#[derive(Clone, Debug)]
pub struct Dataset {
    scenes: Vec<Scene>,
    split: BTreeMap<String, Split>,
}

impl Dataset {
    /// Build from scenes, validating each and requiring unique ids. All
    /// scenes start on the train side.
    pub fn new(scenes: Vec<Scene>) -> Result<Self> {
        let mut split = BTreeMap::new();
        for scene in &scenes {
            scene.validate()?;
            if split.insert(scene.scene_id.clone(), Split::Train).is_some() {
                return Err(Error::InvalidDataset(format!(
                    "duplicate scene id {}",
                    scene.scene_id
                )));
            }
        }
        if scenes.is_empty() {
            return Err(Error::InvalidDataset(format!("no scenes")));
        }
        Ok(Self { scenes, split })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn split_of(&self, scene_id: &str) -> Option<Split> {
        self.split.get(scene_id).copied()
    }

    /// Scenes on one side of the split, in stored order.
    pub fn side(&self, side: Split) -> Vec<&Scene> {
        self.scenes
            .iter()
            .filter(|s| self.split.get(s.scene_id.as_str()) == Some(&side))
            .collect()
    }

    /// Assign splits explicitly (used when loading a recorded split).
    pub fn with_split(mut self, split: BTreeMap<String, Split>) -> Result<Self> {
        for scene in &self.scenes {
            if !split.contains_key(scene.scene_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "split is missing scene {}",
                    scene.scene_id
                )));
            }
        }
        self.split = split;
        Ok(self)
    }
}

/// Deterministically split a dataset into train and test sides.
///
/// Scene ids are sorted, shuffled with the seeded generator, and the first
/// `round(n * train_ratio)` (clamped so both sides are non-empty) go to the
/// train side. The ratio must lie strictly between 0 and 1 and the dataset
/// must have at least two scenes.
pub fn split_dataset(dataset: Dataset, train_ratio: f64, seed: u64) -> Result<Dataset> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_ratio must be in (0, 1), got {train_ratio}"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least 2 scenes to split, got {n}"
        )));
    }
    let mut ids: Vec<String> =
        dataset.scenes.iter().map(|s| s.scene_id.clone()).collect();
    ids.sort_unstable();
    let mut rng = seeded(seed);
    shuffle(&mut ids, &mut rng);
    let raw = libm::round(n as f64 * train_ratio) as usize;
    let n_train = raw.clamp(1, n - 1);
    let mut split = BTreeMap::new();
    for (i, id) in ids.into_iter().enumerate() {
        split.insert(id, if i < n_train { Split::Train } else { Split::Test });
    }
    dataset.with_split(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    /// A minimal valid scene: straight-line motion for each agent.
    pub(crate) fn line_scene(id: &str, n_agents: usize, t_h: usize, t_p: usize) -> Scene {
        let tracks = (0..n_agents)
            .map(|a| AgentTrack {
                agent_id: a as u64,
                positions: (0..t_p)
                    .map(|t| [t as f64 * (a + 1) as f64, a as f64 * 4.0])
                    .collect(),
            })
            .collect();
        Scene {
            scene_id: id.to_string(),
            kind: ScenarioKind::External,
            dt: 0.2,
            t_h,
            t_p,
            tracks,
        }
    }

    #[test]
    fn valid_scene_passes() {
        line_scene("s", 3, 15, 40).validate().unwrap();
    }

    #[test]
    fn validation_catches_structural_problems() {
        let mut s = line_scene("s", 2, 15, 40);
        s.tracks[1].agent_id = 0;
        assert!(matches!(s.validate(), Err(Error::InvalidScene { .. })));

        let mut s = line_scene("s", 2, 15, 40);
        s.tracks[0].positions.pop();
        assert!(s.validate().is_err());

        let mut s = line_scene("s", 2, 15, 40);
        s.t_h = 40;
        assert!(s.validate().is_err());

        let mut s = line_scene("s", 2, 15, 40);
        s.dt = 0.0;
        assert!(s.validate().is_err());

        let mut s = line_scene("s", 2, 15, 40);
        s.tracks[1].positions[3][0] = f64::NAN;
        assert!(s.validate().is_err());
    }

    #[test]
    fn velocities_backward_difference_and_first_frame_copy() {
        let s = line_scene("s", 2, 5, 10);
        // Agent 0 moves 1 m per frame in x, dt = 0.2 => 5 m/s.
        let v5 = s.velocities(5).unwrap();
        assert!((v5[0][0] - 5.0).abs() < 1e-12);
        assert!((v5[1][0] - 10.0).abs() < 1e-12);
        assert_eq!(v5[0][1], 0.0);
        // Frame 1 copies frame 2.
        assert_eq!(s.velocities(1).unwrap(), s.velocities(2).unwrap());
        assert!(s.velocities(0).is_err());
        assert!(s.velocities(11).is_err());
    }

    #[test]
    fn dataset_rejects_duplicate_scene_ids() {
        let scenes = vec![line_scene("a", 2, 15, 40), line_scene("a", 2, 15, 40)];
        assert!(matches!(Dataset::new(scenes), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn split_is_deterministic_and_covers_everything() {
        let scenes: Vec<Scene> =
            (0..20).map(|i| line_scene(&format!("scene-{i:03}"), 2, 15, 40)).collect();
        let a = split_dataset(Dataset::new(scenes.clone()).unwrap(), 0.75, 7).unwrap();
        let b = split_dataset(Dataset::new(scenes).unwrap(), 0.75, 7).unwrap();
        assert_eq!(a.side(Split::Train).len(), 15);
        assert_eq!(a.side(Split::Test).len(), 5);
        for s in a.scenes() {
            assert_eq!(a.split_of(&s.scene_id), b.split_of(&s.scene_id));
        }
    }

    #[test]
    fn split_seed_changes_assignment() {
        let scenes: Vec<Scene> =
            (0..30).map(|i| line_scene(&format!("scene-{i:03}"), 2, 15, 40)).collect();
        let a = split_dataset(Dataset::new(scenes.clone()).unwrap(), 0.5, 1).unwrap();
        let b = split_dataset(Dataset::new(scenes).unwrap(), 0.5, 2).unwrap();
        let differs = a
            .scenes()
            .iter()
            .any(|s| a.split_of(&s.scene_id) != b.split_of(&s.scene_id));
        assert!(differs);
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        let scenes: Vec<Scene> =
            (0..3).map(|i| line_scene(&format!("s{i}"), 2, 15, 40)).collect();
        let d = split_dataset(Dataset::new(scenes).unwrap(), 0.99, 4).unwrap();
        assert_eq!(d.side(Split::Train).len(), 2);
        assert_eq!(d.side(Split::Test).len(), 1);
        let one = Dataset::new(vec![line_scene("only", 2, 15, 40)]).unwrap();
        assert!(split_dataset(one, 0.5, 1).is_err());
    }

    #[test]
    fn kind_roundtrips_through_names() {
        for kind in ScenarioKind::generated() {
            assert_eq!(ScenarioKind::from_str(kind.as_str()).unwrap(), kind);
        }
        assert!(ScenarioKind::from_str("drifting").is_err());
    }
}
