//! Collision-time interaction graphs.
//!
//! For each pair of agents the first-order time to collision is the moment
//! their straight-line extrapolations come closest to each other:
//! `t_c = max(-(dp . dv) / (dv . dv), 0)` with `dp` the relative position and
//! `dv` the relative velocity. Converging pairs get a positive `t_c` and an
//! edge weight `min(1/t_c, w_max)`; diverging pairs, parallel movers, and
//! pairs with zero relative velocity get weight 0. The weights form a
//! symmetric, zero-diagonal adjacency matrix per frame: the congestion
//! snapshot the teacher encodes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scene::Scene;

/// Default cap on edge weights (1 / seconds).
pub const DEFAULT_W_MAX: f64 = 100.0;

/// First-order time to collision for one ordered pair, clamped to `>= 0`.
///
/// Zero means "not on a collision course": diverging, moving in parallel, or
/// no relative motion at all. The value is symmetric under swapping the two
/// agents and invariant under common translations and common velocity shifts.
pub fn collision_time(rel_pos: [f64; 2], rel_vel: [f64; 2]) -> f64 {
    let closing = rel_pos[0] * rel_vel[0] + rel_pos[1] * rel_vel[1];
    let speed_sq = rel_vel[0] * rel_vel[0] + rel_vel[1] * rel_vel[1];
    if speed_sq == 0.0 {
        return 0.0;
    }
    let t_c = -closing / speed_sq;
    if t_c > 0.0 {
        t_c
    } else {
        0.0
    }
}

/// Edge weight for one pair: inverse collision time, capped at `w_max`.
pub fn pair_weight(rel_pos: [f64; 2], rel_vel: [f64; 2], w_max: f64) -> f64 {
    let t_c = collision_time(rel_pos, rel_vel);
    if t_c > 0.0 {
        let w = 1.0 / t_c;
        if w > w_max {
            w_max
        } else {
            w
        }
    } else {
        0.0
    }
}

/// Symmetric, zero-diagonal, non-negative adjacency matrix for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGraph {
    n: usize,
    weights: Vec<f64>,
}

impl FrameGraph {
    /// Build from a row-major `n x n` weight matrix, validating symmetry,
    /// zero diagonal, non-negativity, and finiteness.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::ShapeMismatch {
                op: "FrameGraph::from_weights",
                detail: format!("{n} agents need {} weights, got {}", n * n, weights.len()),
            });
        }
        for u in 0..n {
            if weights[u * n + u] != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "graph diagonal must be zero, agent {u} has self-weight {}",
                    weights[u * n + u]
                )));
            }
            for v in 0..n {
                let w = weights[u * n + v];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "edge ({u}, {v}) has invalid weight {w}"
                    )));
                }
                if w != weights[v * n + u] {
                    return Err(Error::InvalidConfig(format!(
                        "graph asymmetric at ({u}, {v}): {w} vs {}",
                        weights[v * n + u]
                    )));
                }
            }
        }
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.weights[u * self.n + v]
    }

    /// Row-major weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of incident edge weights for one agent.
    pub fn degree(&self, u: usize) -> f64 {
        self.weights[u * self.n..(u + 1) * self.n].iter().sum()
    }

    /// Mean edge weight over unordered pairs; a scalar congestion gauge.
    pub fn mean_weight(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let total: f64 = self.weights.iter().sum();
        total / (self.n * (self.n - 1)) as f64
    }
}

/// Interaction graph of a scene at 1-based frame `t`.
///
/// Velocities come from backward differences ([`Scene::velocities`]); needs
/// at least two agents.
pub fn build_frame_graph(scene: &Scene, t: usize, w_max: f64) -> Result<FrameGraph> {
    if !(w_max > 0.0) || !w_max.is_finite() {
        return Err(Error::InvalidConfig(format!("w_max must be positive, got {w_max}")));
    }
    let n = scene.n_agents();
    if n < 2 {
        return Err(Error::InvalidScene {
            scene_id: scene.scene_id.clone(),
            reason: format!("interaction graph needs >= 2 agents, got {n}"),
        });
    }
    let vel = scene.velocities(t)?;
    let mut weights = alloc::vec![0.0; n * n];
    for u in 0..n {
        let pu = scene.position(u, t);
        for v in (u + 1)..n {
            let pv = scene.position(v, t);
            let rel_pos = [pv[0] - pu[0], pv[1] - pu[1]];
            let rel_vel = [vel[v][0] - vel[u][0], vel[v][1] - vel[u][1]];
            let w = pair_weight(rel_pos, rel_vel, w_max);
            weights[u * n + v] = w;
            weights[v * n + u] = w;
        }
    }
    FrameGraph::from_weights(n, weights)
}

/// Interaction graphs for every observed frame, `t = 1 ..= t_h`.
pub fn build_graph_sequence(scene: &Scene, w_max: f64) -> Result<Vec<FrameGraph>> {
    (1..=scene.t_h).map(|t| build_frame_graph(scene, t, w_max)).collect()
}
