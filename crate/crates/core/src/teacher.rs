//! The congestion teacher: a graph variational autoencoder over
//! collision-time graphs, plus a Gaussian mixture fitted to its latent codes.
//!
//! Per observed frame the interaction graph and raw node kinematics
//! `(x, y, vx, vy)` go through two graph-convolution layers (no biases):
//!
//! ```text
//! A_hat  = D^{-1/2} (W + I) D^{-1/2}
//! H      = relu(A_hat X W0)
//! mu     = A_hat H W_mu          logvar = A_hat H W_logvar
//! ```
//!
//! Training maximizes the usual graph-autoencoder evidence lower bound: a
//! weighted cross-entropy between the decoded edge probabilities
//! `sigmoid(z z^T)` and the squashed targets `w / (1 + w)` (off-diagonal
//! entries only), plus a KL pull of the node posteriors toward the standard
//! normal. The congestion pattern of a frame is the node-mean of `mu` — a
//! permutation-invariant `d_z` vector — and the teacher's output mixture is
//! fitted over the patterns of every observed training frame with EM.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::gaussian::{fit_em, EmConfig, EmMode, EmReport, GaussianMixture};
use crate::graph::{build_frame_graph, FrameGraph, DEFAULT_W_MAX};
use crate::opt::Adam;
use crate::rng::{child_seed, seeded, shuffle};
use crate::scene::{Dataset, Scene, Split};
use crate::tape::{grad_check, Tape, VarId};
use crate::tensor::Tensor;

/// Number of raw node features: position and velocity.
pub const NODE_FEATURES: usize = 4;

/// Hyperparameters for [`train_teacher`].
#[derive(Clone, Debug)]
pub struct TeacherConfig {
    /// Width of the shared graph-convolution layer.
    pub hidden_dim: usize,
    /// Latent dimension of the node posteriors and the pattern space.
    pub d_z: usize,
    /// Number of mixture components fitted over the patterns.
    pub m_q: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Full passes over the training frame-graphs.
    pub epochs: usize,
    /// Frame-graphs per optimizer step.
    pub batch_graphs: usize,
    /// Scale on the KL regularizer of the evidence lower bound.
    pub kl_weight: f64,
    /// Edge-weight cap used when building graphs.
    pub w_max: f64,
    /// Iteration cap handed to EM.
    pub em_max_iters: usize,
    pub em_mode: EmMode,
    /// Mini-batch size for stochastic EM (ignored in batch mode).
    pub em_batch_size: usize,
    /// Master seed: initialization, reparameterization noise, shuffling, and
    /// EM all derive their streams from it.
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            d_z: 16,
            m_q: 4,
            lr: 1e-4,
            epochs: 40,
            batch_graphs: 32,
            kl_weight: 1.0,
            w_max: DEFAULT_W_MAX,
            em_max_iters: 200,
            em_mode: EmMode::Batch,
            em_batch_size: 64,
            seed: 0,
        }
    }
}

impl TeacherConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.d_z == 0 || self.m_q == 0 {
            return Err(Error::InvalidConfig(format!(
                "teacher dimensions must be positive: hidden {}, d_z {}, m_q {}",
                self.hidden_dim, self.d_z, self.m_q
            )));
        }
        if self.batch_graphs == 0 {
            return Err(Error::InvalidConfig(format!("batch_graphs must be positive")));
        }
        if !(self.lr > 0.0) || !(self.w_max > 0.0) || self.kl_weight < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "teacher rates must be positive: lr {}, w_max {}, kl_weight {}",
                self.lr, self.w_max, self.kl_weight
            )));
        }
        Ok(())
    }
}

/// The three weight matrices of the graph encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct VgaeParams {
    /// `NODE_FEATURES x hidden`.
    pub w0: Tensor,
    /// `hidden x d_z`.
    pub w_mu: Tensor,
    /// `hidden x d_z`.
    pub w_logvar: Tensor,
}

impl VgaeParams {
    fn init<R: RngCore>(hidden: usize, d_z: usize, rng: &mut R) -> Self {
        // Xavier-style scales keep the pre-activations of order one.
        let s0 = (2.0 / (NODE_FEATURES + hidden) as f64).sqrt();
        let s1 = (2.0 / (hidden + d_z) as f64).sqrt();
        Self {
            w0: Tensor::randn(NODE_FEATURES, hidden, s0, rng),
            w_mu: Tensor::randn(hidden, d_z, s1, rng),
            w_logvar: Tensor::randn(hidden, d_z, s1, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn d_z(&self) -> usize {
        self.w_mu.cols()
    }
}

/// A trained teacher: encoder weights, the fitted congestion mixture, and
/// everything needed to map a raw scene into pattern space.
#[derive(Clone, Debug)]
pub struct TeacherModel {
    pub vgae: VgaeParams,
    /// Mixture over pattern space; the matching target for the student.
    pub q_mixture: GaussianMixture,
    /// Standardization of the raw node features, estimated on training data.
    pub feat_mean: [f64; NODE_FEATURES],
    pub feat_std: [f64; NODE_FEATURES],
    /// Edge-weight cap the teacher was trained with.
    pub w_max: f64,
}

impl TeacherModel {
    pub fn d_z(&self) -> usize {
        self.vgae.d_z()
    }
}

/// Training curves and the EM outcome.
#[derive(Clone, Debug)]
pub struct TeacherReport {
    /// Mean evidence lower bound per epoch (higher is better).
    pub elbo_trace: Vec<f64>,
    pub em: EmReport,
    /// Number of pattern samples the mixture was fitted on.
    pub pattern_count: usize,
}

/// Symmetrically normalized adjacency with self-loops,
/// `D^{-1/2} (W + I) D^{-1/2}`.
pub fn normalize_adjacency(graph: &FrameGraph) -> Tensor {
    let n = graph.n();
    let mut with_loops = Tensor::zeros(n, n);
    for u in 0..n {
        for v in 0..n {
            let w = graph.weight(u, v) + if u == v { 1.0 } else { 0.0 };
            with_loops.set(u, v, w);
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| {
            let d: f64 = with_loops.row_slice(u).iter().sum();
            1.0 / d.sqrt()
        })
        .collect();
    for u in 0..n {
        for v in 0..n {
            let w = with_loops.get(u, v) * inv_sqrt[u] * inv_sqrt[v];
            with_loops.set(u, v, w);
        }
    }
    with_loops
}

/// Node features `(x, y, vx, vy)` of every agent at 1-based frame `t`, in a
/// scene-local frame: positions are relative to the agents' centroid at that
/// frame, so congestion patterns do not depend on where in the world the
/// scene happens to sit.
pub fn node_features(scene: &Scene, t: usize) -> Result<Tensor> {
    let vel = scene.velocities(t)?;
    let n = scene.n_agents();
    let mut centroid = [0.0; 2];
    for a in 0..n {
        let p = scene.position(a, t);
        centroid[0] += p[0] / n as f64;
        centroid[1] += p[1] / n as f64;
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let p = scene.position(a, t);
            vec![p[0] - centroid[0], p[1] - centroid[1], vel[a][0], vel[a][1]]
        })
        .collect();
    Tensor::from_rows(&rows)
}

fn standardize(features: &Tensor, mean: &[f64; 4], std: &[f64; 4]) -> Tensor {
    let mut out = features.clone();
    for r in 0..out.rows() {
        for c in 0..NODE_FEATURES {
            let v = (out.get(r, c) - mean[c]) / std[c];
            out.set(r, c, v);
        }
    }
    out
}

/// Encoder forward pass shared by training and inference.
fn encode_on_tape(
    tape: &mut Tape,
    w0: VarId,
    w_mu: VarId,
    w_logvar: VarId,
    a_hat: VarId,
    x: VarId,
) -> Result<(VarId, VarId)> {
    let ax = tape.matmul(a_hat, x)?;
    let pre = tape.matmul(ax, w0)?;
    let h = tape.relu(pre);
    let ah = tape.matmul(a_hat, h)?;
    let mu = tape.matmul(ah, w_mu)?;
    let logvar = tape.matmul(ah, w_logvar)?;
    Ok((mu, logvar))
}

/// Node posteriors `(mu, logvar)` for one standardized frame.
pub fn encode(params: &VgaeParams, graph: &FrameGraph, features: &Tensor) -> Result<(Tensor, Tensor)> {
    if features.cols() != NODE_FEATURES || features.rows() != graph.n() {
        return Err(Error::ShapeMismatch {
            op: "teacher::encode",
            detail: format!(
                "features are {}x{} for a {}-agent graph",
                features.rows(),
                features.cols(),
                graph.n()
            ),
        });
    }
    let mut tape = Tape::new();
    let w0 = tape.leaf(params.w0.clone());
    let w_mu = tape.leaf(params.w_mu.clone());
    let w_logvar = tape.leaf(params.w_logvar.clone());
    let a_hat = tape.leaf(normalize_adjacency(graph));
    let x = tape.leaf(features.clone());
    let (mu, logvar) = encode_on_tape(&mut tape, w0, w_mu, w_logvar, a_hat, x)?;
    Ok((tape.value(mu).clone(), tape.value(logvar).clone()))
}

/// Edge probabilities decoded from latent codes: `sigmoid(z z^T)`.
pub fn decode(z: &Tensor) -> Result<Tensor> {
    let mut s = z.matmul(&z.transposed())?;
    for v in s.data_mut() {
        *v = v.sigmoid();
    }
    Ok(s)
}

/// One frame-graph prepared for training.
struct GraphInstance {
    a_hat: Tensor,
    features: Tensor,
    /// Squashed edge targets `w / (1 + w)`.
    targets: Tensor,
    /// 1 off the diagonal, 0 on it.
    mask: Tensor,
    /// Ratio of negative to positive target mass, for the weighted BCE.
    pos_weight: f64,
}

fn prepare_instance(
    scene: &Scene,
    t: usize,
    w_max: f64,
    mean: &[f64; 4],
    std: &[f64; 4],
) -> Result<GraphInstance> {
    let graph = build_frame_graph(scene, t, w_max)?;
    let n = graph.n();
    let mut targets = Tensor::zeros(n, n);
    let mut mask = Tensor::zeros(n, n);
    let mut positive = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let w = graph.weight(u, v);
            targets.set(u, v, w / (1.0 + w));
            mask.set(u, v, 1.0);
            positive += w / (1.0 + w);
        }
    }
    let total = (n * (n - 1)) as f64;
    let pos_weight = if positive > 1e-12 { (total - positive) / positive } else { 1.0 };
    let features = standardize(&node_features(scene, t)?, mean, std);
    Ok(GraphInstance { a_hat: normalize_adjacency(&graph), features, targets, mask, pos_weight })
}

/// Negative evidence lower bound of one instance, on the tape.
fn instance_loss_on_tape(
    tape: &mut Tape,
    w0: VarId,
    w_mu: VarId,
    w_logvar: VarId,
    inst: &GraphInstance,
    kl_weight: f64,
    eps: Tensor,
) -> Result<VarId> {
    let n = inst.a_hat.rows();
    let d_z = tape.value(w_mu).cols();
    let a_hat = tape.leaf(inst.a_hat.clone());
    let x = tape.leaf(inst.features.clone());
    let (mu, logvar) = encode_on_tape(tape, w0, w_mu, w_logvar, a_hat, x)?;

    // Reparameterized sample z = mu + exp(logvar / 2) * eps.
    let eps = tape.leaf(eps);
    let half_logvar = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half_logvar);
    let noise = tape.mul(sigma, eps)?;
    let z = tape.add(mu, noise)?;

    // Stable weighted cross-entropy on the logits s = z z^T, masked to the
    // off-diagonal: pw * t * softplus(-s) + (1 - t) * softplus(s).
    let zt = tape.transpose(z);
    let s = tape.matmul(z, zt)?;
    let neg_s = tape.scale(s, -1.0);
    let sp_neg = tape.softplus(neg_s);
    let sp_pos = tape.softplus(s);
    let t_const = tape.leaf(inst.targets.clone());
    let pos_part = tape.mul(t_const, sp_neg)?;
    let pos_part = tape.scale(pos_part, inst.pos_weight);
    let one_minus_t = {
        let neg_t = tape.scale(t_const, -1.0);
        tape.add_scalar(neg_t, 1.0)
    };
    let neg_part = tape.mul(one_minus_t, sp_pos)?;
    let bce = tape.add(pos_part, neg_part)?;
    let mask = tape.leaf(inst.mask.clone());
    let bce = tape.mul(bce, mask)?;
    let bce_sum = tape.sum(bce);
    let edge_loss = tape.scale(bce_sum, 1.0 / (n * (n - 1)) as f64);

    // KL(N(mu, sigma^2) || N(0, 1)) = -1/2 sum(1 + logvar - mu^2 - e^logvar),
    // averaged over nodes and latent dimensions.
    let mu_sq = tape.mul(mu, mu)?;
    let e_logvar = tape.exp(logvar);
    let inner = tape.add_scalar(logvar, 1.0);
    let inner = tape.sub(inner, mu_sq)?;
    let inner = tape.sub(inner, e_logvar)?;
    let kl_sum = tape.sum(inner);
    let kl = tape.scale(kl_sum, -0.5 / (n * d_z) as f64);
    let kl = tape.scale(kl, kl_weight);

    tape.add(edge_loss, kl)
}

/// Central finite-difference check of the negative-ELBO gradient on the
/// interaction graph of frame `t`.
///
/// `matrix` selects the probed weight (0 = w0, 1 = w_mu, 2 = w_logvar); the
/// other two stay at their current values. Node features enter raw (identity
/// standardization) and the reparameterization noise is drawn once from
/// `noise_seed`, making the probed loss a deterministic function of the
/// weights. Returns the worst relative error over the matrix's coordinates.
pub fn elbo_grad_check(
    params: &VgaeParams,
    scene: &Scene,
    t: usize,
    w_max: f64,
    kl_weight: f64,
    matrix: usize,
    noise_seed: u64,
    h: f64,
) -> Result<f64> {
    let inst = prepare_instance(
        scene,
        t,
        w_max,
        &[0.0; NODE_FEATURES],
        &[1.0; NODE_FEATURES],
    )?;
    let n = inst.a_hat.rows();
    let mut rng = seeded(noise_seed);
    let eps = Tensor::randn(n, params.d_z(), 1.0, &mut rng);
    let at = match matrix {
        0 => params.w0.clone(),
        1 => params.w_mu.clone(),
        2 => params.w_logvar.clone(),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "matrix must be 0 (w0), 1 (w_mu), or 2 (w_logvar), got {matrix}"
            )))
        }
    };
    grad_check(
        |tape, x| {
            let w0 = if matrix == 0 { x } else { tape.leaf(params.w0.clone()) };
            let w_mu = if matrix == 1 { x } else { tape.leaf(params.w_mu.clone()) };
            let w_logvar =
                if matrix == 2 { x } else { tape.leaf(params.w_logvar.clone()) };
            instance_loss_on_tape(tape, w0, w_mu, w_logvar, &inst, kl_weight, eps.clone())
        },
        &at,
        h,
    )
}

/// The congestion pattern of each observed frame: node-mean of `mu`,
/// one `d_z` vector per frame `t = 1 ..= t_h`.
pub fn extract_pattern(model: &TeacherModel, scene: &Scene) -> Result<Vec<Vec<f64>>> {
    (1..=scene.t_h)
        .map(|t| {
            let graph = build_frame_graph(scene, t, model.w_max)?;
            let features =
                standardize(&node_features(scene, t)?, &model.feat_mean, &model.feat_std);
            let (mu, _) = encode(&model.vgae, &graph, &features)?;
            let n = mu.rows() as f64;
            Ok((0..mu.cols())
                .map(|d| (0..mu.rows()).map(|r| mu.get(r, d)).sum::<f64>() / n)
                .collect())
        })
        .collect()
}

/// Posterior responsibilities of the teacher mixture for one pattern vector.
pub fn pattern_responsibilities(model: &TeacherModel, pattern: &[f64]) -> Result<Vec<f64>> {
    model.q_mixture.responsibilities(pattern)
}

/// Reconstructed edge probabilities for one frame: encode the frame graph
/// with the trained weights (posterior means, no sampling) and decode. Entry
/// `(u, v)` approximates the squashed interaction weight `w/(1+w)`.
pub fn edge_probabilities(model: &TeacherModel, scene: &Scene, t: usize) -> Result<Tensor> {
    let graph = build_frame_graph(scene, t, model.w_max)?;
    let features = standardize(&node_features(scene, t)?, &model.feat_mean, &model.feat_std);
    let (mu, _) = encode(&model.vgae, &graph, &features)?;
    decode(&mu)
}

/// Train the graph autoencoder on every observed frame of the train split,
/// then fit the congestion mixture over the resulting patterns.
pub fn train_teacher(dataset: &Dataset, cfg: &TeacherConfig) -> Result<(TeacherModel, TeacherReport)> {
    cfg.validate()?;
    let train: Vec<&Scene> = dataset.side(Split::Train);
    if train.is_empty() {
        return Err(Error::InvalidDataset(format!("train split is empty")));
    }

    // Standardization statistics over every observed node row.
    let mut mean = [0.0; NODE_FEATURES];
    let mut count = 0.0;
    let mut raw: Vec<Tensor> = Vec::new();
    for scene in &train {
        for t in 1..=scene.t_h {
            let f = node_features(scene, t)?;
            for r in 0..f.rows() {
                for c in 0..NODE_FEATURES {
                    mean[c] += f.get(r, c);
                }
            }
            count += f.rows() as f64;
            raw.push(f);
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    let mut std = [0.0; NODE_FEATURES];
    for f in &raw {
        for r in 0..f.rows() {
            for c in 0..NODE_FEATURES {
                let d = f.get(r, c) - mean[c];
                std[c] += d * d;
            }
        }
    }
    for s in std.iter_mut() {
        *s = (*s / count).sqrt().max(1e-6);
    }
    drop(raw);

    let mut instances = Vec::new();
    for scene in &train {
        for t in 1..=scene.t_h {
            instances.push(prepare_instance(scene, t, cfg.w_max, &mean, &std)?);
        }
    }

    let mut init_rng = seeded(child_seed(cfg.seed, 0));
    let mut vgae = VgaeParams::init(cfg.hidden_dim, cfg.d_z, &mut init_rng);
    let shapes = [
        (NODE_FEATURES, cfg.hidden_dim),
        (cfg.hidden_dim, cfg.d_z),
        (cfg.hidden_dim, cfg.d_z),
    ];
    let mut adam = Adam::new(cfg.lr, &shapes)?;
    let mut noise_rng = seeded(child_seed(cfg.seed, 1));
    let mut order_rng = seeded(child_seed(cfg.seed, 2));

    let mut elbo_trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for _ in 0..cfg.epochs {
        shuffle(&mut order, &mut order_rng);
        let mut epoch_loss = 0.0;
        let mut batches: f64 = 0.0;
        for chunk in order.chunks(cfg.batch_graphs) {
            let mut tape = Tape::new();
            let w0 = tape.leaf(vgae.w0.clone());
            let w_mu = tape.leaf(vgae.w_mu.clone());
            let w_logvar = tape.leaf(vgae.w_logvar.clone());
            let mut losses = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let inst = &instances[idx];
                let eps =
                    Tensor::randn(inst.a_hat.rows(), cfg.d_z, 1.0, &mut noise_rng);
                losses.push(instance_loss_on_tape(
                    &mut tape, w0, w_mu, w_logvar, inst, cfg.kl_weight, eps,
                )?);
            }
            let stacked = tape.concat_cols(&losses)?;
            let loss = tape.mean(stacked);
            let loss_val = tape.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(Error::NonFinite { op: "train_teacher", iteration: elbo_trace.len() });
            }
            epoch_loss += loss_val;
            batches += 1.0;
            let grads = tape.backward(loss)?;
            let g = [
                grads.wrt(w0).clone(),
                grads.wrt(w_mu).clone(),
                grads.wrt(w_logvar).clone(),
            ];
            adam.step(
                &mut [&mut vgae.w0, &mut vgae.w_mu, &mut vgae.w_logvar],
                &[&g[0], &g[1], &g[2]],
            )?;
        }
        elbo_trace.push(-epoch_loss / batches.max(1.0));
    }

    // Patterns for the mixture fit come from the trained encoder.
    let model_stub = TeacherModel {
        vgae: vgae.clone(),
        q_mixture: GaussianMixture::new(
            vec![1.0],
            vec![crate::gaussian::DiagGaussian::standard(cfg.d_z)],
        )?,
        feat_mean: mean,
        feat_std: std,
        w_max: cfg.w_max,
    };
    let mut patterns = Vec::new();
    for scene in &train {
        patterns.extend(extract_pattern(&model_stub, scene)?);
    }
    if patterns.len() < cfg.m_q {
        return Err(Error::InvalidDataset(format!(
            "{} patterns cannot support {} mixture components",
            patterns.len(),
            cfg.m_q
        )));
    }
    let em_cfg = EmConfig {
        components: cfg.m_q,
        max_iters: cfg.em_max_iters,
        tol: 1e-8,
        seed: child_seed(cfg.seed, 3),
        mode: cfg.em_mode,
        batch_size: cfg.em_batch_size,
    };
    let (q_mixture, em) = fit_em(&patterns, &em_cfg)?;

    let model = TeacherModel { vgae, q_mixture, feat_mean: mean, feat_std: std, w_max: cfg.w_max };
    let report = TeacherReport { elbo_trace, em, pattern_count: patterns.len() };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AgentTrack, ScenarioKind};
    use alloc::string::ToString;

    fn convoy_scene(id: &str, n: usize, closing: f64) -> Scene {
        // Agents in one lane, each closing on the one ahead at `closing` m/s.
        let dt = 0.2;
        let t_p = 20;
        let tracks = (0..n)
            .map(|a| AgentTrack {
                agent_id: a as u64,
                positions: (0..t_p)
                    .map(|t| {
                        let speed = 10.0 + closing * a as f64;
                        [a as f64 * -12.0 + speed * t as f64 * dt, 0.0]
                    })
                    .collect(),
            })
            .collect();
        Scene {
            scene_id: id.to_string(),
            kind: ScenarioKind::External,
            dt,
            t_h: 10,
            t_p,
            tracks,
        }
    }

    fn tiny_dataset() -> Dataset {
        let scenes = vec![
            convoy_scene("a", 3, 1.0),
            convoy_scene("b", 2, 2.0),
            convoy_scene("c", 4, 0.5),
            convoy_scene("d", 3, 0.0),
        ];
        Dataset::new(scenes).unwrap()
    }

    fn quick_config() -> TeacherConfig {
        TeacherConfig {
            hidden_dim: 8,
            d_z: 4,
            m_q: 2,
            epochs: 3,
            lr: 1e-3,
            seed: 5,
            ..TeacherConfig::default()
        }
    }

    #[test]
    fn normalized_adjacency_known_two_node_case() {
        // W = [[0, 1], [1, 0]] with self-loops: degrees 2, A_hat = 1/2.
        let g = FrameGraph::from_weights(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let a = normalize_adjacency(&g);
        for r in 0..2 {
            for c in 0..2 {
                assert!((a.get(r, c) - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_adjacency_isolated_node_keeps_unit_self_loop() {
        let g = FrameGraph::from_weights(2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let a = normalize_adjacency(&g);
        assert!((a.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((a.get(0, 1)).abs() < 1e-12);
    }

    #[test]
    fn node_features_hold_position_and_velocity() {
        let scene = convoy_scene("s", 2, 1.0);
        let f = node_features(&scene, 5).unwrap();
        assert_eq!((f.rows(), f.cols()), (2, 4));
        // Agent 0 cruises at 10 m/s along x.
        assert!((f.get(0, 2) - 10.0).abs() < 1e-9);
        assert!((f.get(0, 3)).abs() < 1e-12);
        // Positions are centroid-relative: they sum to zero per axis.
        assert!((f.get(0, 0) + f.get(1, 0)).abs() < 1e-9);
        assert!((f.get(0, 1) + f.get(1, 1)).abs() < 1e-9);
    }

    #[test]
    fn node_features_are_translation_invariant() {
        let scene = convoy_scene("s", 3, 1.0);
        let mut shifted = scene.clone();
        for track in &mut shifted.tracks {
            for p in &mut track.positions {
                p[0] += 1234.5;
                p[1] -= 67.8;
            }
        }
        let a = node_features(&scene, 4).unwrap();
        let b = node_features(&shifted, 4).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn decode_is_symmetric_probability_matrix() {
        let mut rng = crate::rng::seeded(3);
        let z = Tensor::randn(4, 3, 1.0, &mut rng);
        let p = decode(&z).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let x = p.get(u, v);
                assert!(x > 0.0 && x < 1.0);
                assert!((x - p.get(v, u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pattern_is_permutation_invariant() {
        let scene = convoy_scene("s", 4, 1.0);
        let mut permuted = scene.clone();
        permuted.tracks.swap(0, 2);
        permuted.tracks.swap(1, 3);

        let (model, _) = train_teacher(&tiny_dataset(), &quick_config()).unwrap();
        let a = extract_pattern(&model, &scene).unwrap();
        let b = extract_pattern(&model, &permuted).unwrap();
        assert_eq!(a.len(), scene.t_h);
        for (pa, pb) in a.iter().zip(&b) {
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let (m1, r1) = train_teacher(&tiny_dataset(), &quick_config()).unwrap();
        let (m2, r2) = train_teacher(&tiny_dataset(), &quick_config()).unwrap();
        assert_eq!(m1.vgae, m2.vgae);
        assert_eq!(r1.elbo_trace, r2.elbo_trace);
        assert!(r1.elbo_trace.iter().all(|e| e.is_finite()));
        assert_eq!(r1.elbo_trace.len(), 3);
        assert_eq!(m1.q_mixture.len(), 2);
        assert_eq!(m1.q_mixture.dim(), 4);
        assert_eq!(r1.pattern_count, 40);
    }

    #[test]
    fn different_seed_changes_model() {
        let mut cfg = quick_config();
        let (m1, _) = train_teacher(&tiny_dataset(), &cfg).unwrap();
        cfg.seed = 6;
        let (m2, _) = train_teacher(&tiny_dataset(), &cfg).unwrap();
        assert_ne!(m1.vgae, m2.vgae);
    }

    #[test]
    fn training_improves_elbo_on_easy_data() {
        let mut cfg = quick_config();
        cfg.epochs = 60;
        cfg.lr = 5e-3;
        let (_, report) = train_teacher(&tiny_dataset(), &cfg).unwrap();
        let first = report.elbo_trace[0];
        let last = *report.elbo_trace.last().unwrap();
        assert!(
            last > first,
            "ELBO did not improve: {first} -> {last}"
        );
    }

    #[test]
    fn encode_rejects_mismatched_features() {
        let (model, _) = train_teacher(&tiny_dataset(), &quick_config()).unwrap();
        let g = FrameGraph::from_weights(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let bad = Tensor::zeros(3, 4);
        assert!(encode(&model.vgae, &g, &bad).is_err());
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = quick_config();
        cfg.d_z = 0;
        assert!(train_teacher(&tiny_dataset(), &cfg).is_err());
        let mut cfg = quick_config();
        cfg.lr = 0.0;
        assert!(train_teacher(&tiny_dataset(), &cfg).is_err());
    }

    #[test]
    fn elbo_gradients_match_central_differences() {
        let scene = convoy_scene("g", 3, 1.5);
        let mut rng = crate::rng::seeded(11);
        let params = VgaeParams::init(6, 3, &mut rng);
        for matrix in 0..3 {
            let worst =
                elbo_grad_check(&params, &scene, 4, DEFAULT_W_MAX, 1.0, matrix, 7, 1e-5)
                    .unwrap();
            assert!(worst < 1e-6, "matrix {matrix}: worst relative error {worst}");
        }
        assert!(elbo_grad_check(&params, &scene, 4, DEFAULT_W_MAX, 1.0, 3, 7, 1e-5).is_err());
    }

    #[test]
    fn edge_probabilities_are_a_symmetric_probability_matrix() {
        let (model, _) = train_teacher(&tiny_dataset(), &quick_config()).unwrap();
        let scene = convoy_scene("probe", 3, 1.5);
        let probs = edge_probabilities(&model, &scene, 5).unwrap();
        assert_eq!((probs.rows(), probs.cols()), (3, 3));
        for u in 0..3 {
            for v in 0..3 {
                let p = probs.get(u, v);
                assert!((0.0..=1.0).contains(&p), "({u},{v}) = {p}");
                assert_eq!(p, probs.get(v, u), "decode must be symmetric");
            }
        }
    }
}
