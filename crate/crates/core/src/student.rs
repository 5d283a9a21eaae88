//! The trajectory student: encoder, social pooling, congestion head, decoder.
//!
//! Per agent, a shared LSTM encodes the observed displacement sequence. At
//! the last observed frame every agent pools its neighbors' hidden states
//! into an egocentric grid (rows along x, columns along y), sums states per
//! cell, and runs a small 3x3 convolution over the grid; the flattened
//! activation is the agent's social feature. The scene feature — the mean of
//! the social features — feeds the congestion head, which emits a Gaussian
//! mixture in the teacher's pattern space (softmax weights, linear means,
//! softplus-plus-floor variances).
//!
//! A second LSTM, initialized from each agent's encoding and social feature,
//! rolls the future out one displacement at a time; a linear head turns each
//! hidden state into a bivariate Gaussian over the next displacement (mean,
//! per-axis sigma, correlation), and positions accumulate by summing means.
//! The trajectory loss is the negative log-likelihood of the true future
//! positions under the accumulated Gaussians, averaged over agents.
//!
//! Training minimizes `L2 + gamma * L1`, where `L1` is the congestion
//! pattern-matching bound against the teacher's mixture (see [`crate::cpm`]).
//! Each batch emits one student mixture — the batch average of the per-scene
//! head outputs — and re-solves its coupling from scratch with a few
//! closed-form alpha/beta sweeps on detached values. The bound is then
//! rebuilt on the tape with alpha and beta held constant, the gradient-mode
//! analog of the closed-form p-step: gradients reach the component means and
//! variances (and everything upstream of them), while the weights enter only
//! through the next coupling solve. With `gamma = 0` the pattern-matching
//! machinery is skipped entirely and the run is bit-identical to a plain
//! encoder-pooling-decoder student.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::cpm::{kl_table, Coupling};
use crate::error::{Error, Result};
use crate::fp::LN_2PI;
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::gaussian::{DiagGaussian, GaussianMixture, VAR_FLOOR};
use crate::opt::{clip_global_norm, Adam};
use crate::rng::{child_seed, seeded, shuffle};
use crate::scene::{Dataset, Scene, Split};
use crate::tape::{grad_check, Tape, VarId};
use crate::teacher::TeacherModel;
use crate::tensor::Tensor;

/// Hyperparameters for the student network and its training run.
#[derive(Clone, Debug)]
pub struct StudentConfig {
    /// Encoder LSTM width.
    pub enc_hidden: usize,
    /// Decoder LSTM width.
    pub dec_hidden: usize,
    /// Pooling grid rows (longitudinal, along x).
    pub grid_rows: usize,
    /// Pooling grid columns (lateral, along y).
    pub grid_cols: usize,
    /// Cell extent along x, meters.
    pub cell_x: f64,
    /// Cell extent along y, meters.
    pub cell_y: f64,
    /// Output channels of the 3x3 pooling convolution.
    pub conv_channels: usize,
    /// Components of the emitted congestion mixture.
    pub m_p: usize,
    /// Dimension of the congestion pattern space; must match the teacher.
    pub d_z: usize,
    /// Width of the congestion head's hidden layer.
    pub cpm_hidden: usize,
    /// Weight of the pattern-matching loss; 0 disables it.
    pub gamma: f64,
    /// Adam learning rate.
    pub lr: f64,
    pub epochs: usize,
    /// Scenes per optimizer step.
    pub batch_scenes: usize,
    /// Alpha/beta update sweeps per scene and batch.
    pub k_inner: usize,
    /// Additive floor on the emitted step sigmas, meters.
    pub sigma_floor: f64,
    /// The correlation is squashed to `(-rho_limit, rho_limit)`.
    pub rho_limit: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Master seed for initialization and shuffling.
    pub seed: u64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            enc_hidden: 32,
            dec_hidden: 32,
            grid_rows: 13,
            grid_cols: 3,
            cell_x: 5.0,
            cell_y: 4.0,
            conv_channels: 16,
            m_p: 4,
            d_z: 16,
            cpm_hidden: 32,
            gamma: 1.0,
            lr: 3e-3,
            epochs: 40,
            batch_scenes: 8,
            k_inner: 5,
            sigma_floor: 1e-3,
            rho_limit: 0.99,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl StudentConfig {
    /// Flattened size of the social feature after the convolution.
    pub fn social_dim(&self) -> usize {
        (self.grid_rows - 2) * (self.grid_cols - 2) * self.conv_channels
    }

    fn validate(&self) -> Result<()> {
        if self.enc_hidden == 0
            || self.dec_hidden == 0
            || self.conv_channels == 0
            || self.m_p == 0
            || self.d_z == 0
            || self.cpm_hidden == 0
        {
            return Err(Error::InvalidConfig(format!("student dimensions must be positive")));
        }
        if self.grid_rows < 3 || self.grid_cols < 3 {
            return Err(Error::InvalidConfig(format!(
                "pooling grid must be at least 3x3 for the 3x3 convolution, got {}x{}",
                self.grid_rows, self.grid_cols
            )));
        }
        if !(self.cell_x > 0.0) || !(self.cell_y > 0.0) {
            return Err(Error::InvalidConfig(format!("grid cells must have positive extent")));
        }
        if !(self.lr > 0.0) || self.gamma < 0.0 || self.batch_scenes == 0 {
            return Err(Error::InvalidConfig(format!(
                "invalid training settings: lr {}, gamma {}, batch {}",
                self.lr, self.gamma, self.batch_scenes
            )));
        }
        if !(self.sigma_floor > 0.0) || !(self.rho_limit > 0.0 && self.rho_limit < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need sigma_floor > 0 and rho_limit in (0, 1), got {} and {}",
                self.sigma_floor, self.rho_limit
            )));
        }
        Ok(())
    }
}

/// Weights of one LSTM: input, recurrent, and bias for the stacked gates
/// (input, forget, cell, output).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `in_dim x 4*hidden`.
    pub wx: Tensor,
    /// `hidden x 4*hidden`.
    pub wh: Tensor,
    /// `1 x 4*hidden`.
    pub b: Tensor,
}

impl LstmParams {
    fn init<R: RngCore>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let sx = (2.0 / (in_dim + 4 * hidden) as f64).sqrt();
        let sh = (2.0 / (5 * hidden) as f64).sqrt();
        let mut b = Tensor::zeros(1, 4 * hidden);
        // Forget gates open at initialization.
        for i in hidden..2 * hidden {
            b.set(0, i, 1.0);
        }
        Self {
            wx: Tensor::randn(in_dim, 4 * hidden, sx, rng),
            wh: Tensor::randn(hidden, 4 * hidden, sh, rng),
            b,
        }
    }
}

/// All trainable tensors of the student.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentParams {
    pub encoder: LstmParams,
    /// `(3*3*enc_hidden) x conv_channels`.
    pub conv_kernel: Tensor,
    /// `1 x conv_channels`.
    pub conv_bias: Tensor,
    /// `(enc_hidden + social) x 2*dec_hidden`, producing the decoder's
    /// initial hidden and cell states.
    pub ctx_w: Tensor,
    pub ctx_b: Tensor,
    pub decoder: LstmParams,
    /// `dec_hidden x 5`: displacement mean, raw sigmas, raw correlation.
    pub head_w: Tensor,
    pub head_b: Tensor,
    /// Congestion head: social mean -> hidden -> (weights, means, variances).
    pub cpm_w1: Tensor,
    pub cpm_b1: Tensor,
    pub cpm_w_weight: Tensor,
    pub cpm_b_weight: Tensor,
    pub cpm_w_mean: Tensor,
    pub cpm_b_mean: Tensor,
    pub cpm_w_var: Tensor,
    pub cpm_b_var: Tensor,
}

impl StudentParams {
    /// Seeded initialization matching `cfg`'s dimensions.
    pub fn init(cfg: &StudentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let social = cfg.social_dim();
        let xav = |fan_in: usize, fan_out: usize| (2.0 / (fan_in + fan_out) as f64).sqrt();
        let mut head_b = Tensor::zeros(1, 5);
        // Start with a few meters of predictive spread so the first
        // likelihood evaluations are well-scaled.
        head_b.set(0, 2, 3.0);
        head_b.set(0, 3, 3.0);
        let params = Self {
            encoder: LstmParams::init(2, cfg.enc_hidden, &mut rng),
            conv_kernel: Tensor::randn(
                9 * cfg.enc_hidden,
                cfg.conv_channels,
                xav(9 * cfg.enc_hidden, cfg.conv_channels),
                &mut rng,
            ),
            conv_bias: Tensor::zeros(1, cfg.conv_channels),
            ctx_w: Tensor::randn(
                cfg.enc_hidden + social,
                2 * cfg.dec_hidden,
                xav(cfg.enc_hidden + social, 2 * cfg.dec_hidden),
                &mut rng,
            ),
            ctx_b: Tensor::zeros(1, 2 * cfg.dec_hidden),
            decoder: LstmParams::init(2, cfg.dec_hidden, &mut rng),
            head_w: Tensor::randn(cfg.dec_hidden, 5, xav(cfg.dec_hidden, 5), &mut rng),
            head_b,
            cpm_w1: Tensor::randn(social, cfg.cpm_hidden, xav(social, cfg.cpm_hidden), &mut rng),
            cpm_b1: Tensor::zeros(1, cfg.cpm_hidden),
            cpm_w_weight: Tensor::randn(
                cfg.cpm_hidden,
                cfg.m_p,
                xav(cfg.cpm_hidden, cfg.m_p),
                &mut rng,
            ),
            cpm_b_weight: Tensor::zeros(1, cfg.m_p),
            cpm_w_mean: Tensor::randn(
                cfg.cpm_hidden,
                cfg.m_p * cfg.d_z,
                xav(cfg.cpm_hidden, cfg.m_p * cfg.d_z),
                &mut rng,
            ),
            cpm_b_mean: Tensor::zeros(1, cfg.m_p * cfg.d_z),
            cpm_w_var: Tensor::randn(
                cfg.cpm_hidden,
                cfg.m_p * cfg.d_z,
                xav(cfg.cpm_hidden, cfg.m_p * cfg.d_z),
                &mut rng,
            ),
            cpm_b_var: Tensor::zeros(1, cfg.m_p * cfg.d_z),
        };
        Ok(params)
    }

    fn tensors(&self) -> [&Tensor; 20] {
        [
            &self.encoder.wx,
            &self.encoder.wh,
            &self.encoder.b,
            &self.conv_kernel,
            &self.conv_bias,
            &self.ctx_w,
            &self.ctx_b,
            &self.decoder.wx,
            &self.decoder.wh,
            &self.decoder.b,
            &self.head_w,
            &self.head_b,
            &self.cpm_w1,
            &self.cpm_b1,
            &self.cpm_w_weight,
            &self.cpm_b_weight,
            &self.cpm_w_mean,
            &self.cpm_b_mean,
            &self.cpm_w_var,
            &self.cpm_b_var,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 20] {
        [
            &mut self.encoder.wx,
            &mut self.encoder.wh,
            &mut self.encoder.b,
            &mut self.conv_kernel,
            &mut self.conv_bias,
            &mut self.ctx_w,
            &mut self.ctx_b,
            &mut self.decoder.wx,
            &mut self.decoder.wh,
            &mut self.decoder.b,
            &mut self.head_w,
            &mut self.head_b,
            &mut self.cpm_w1,
            &mut self.cpm_b1,
            &mut self.cpm_w_weight,
            &mut self.cpm_b_weight,
            &mut self.cpm_w_mean,
            &mut self.cpm_b_mean,
            &mut self.cpm_w_var,
            &mut self.cpm_b_var,
        ]
    }
}

/// Bivariate Gaussian parameters for one agent at one future frame. The mean
/// is the predicted absolute position (accumulated displacement means); sigma
/// and rho describe the per-step displacement uncertainty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivariateParams {
    pub mean: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

/// Full predictive output for one scene: `[agent][future frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionOutput {
    pub agents: Vec<Vec<BivariateParams>>,
}

impl PredictionOutput {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn horizon(&self) -> usize {
        self.agents.first().map_or(0, Vec::len)
    }

    /// Predicted positions only: `[agent][future frame] -> (x, y)`.
    pub fn positions(&self) -> Vec<Vec<[f64; 2]>> {
        self.agents
            .iter()
            .map(|steps| steps.iter().map(|p| p.mean).collect())
            .collect()
    }
}

/// Negative log-density of `target` under a bivariate Gaussian given by
/// `mean`, per-axis `sigma`, and correlation `rho`.
pub fn bivariate_nll(target: [f64; 2], mean: [f64; 2], sigma: [f64; 2], rho: f64) -> f64 {
    let dx = (target[0] - mean[0]) / sigma[0];
    let dy = (target[1] - mean[1]) / sigma[1];
    let omr = 1.0 - rho * rho;
    let z = dx * dx + dy * dy - 2.0 * rho * dx * dy;
    LN_2PI + sigma[0].ln() + sigma[1].ln() + 0.5 * omr.ln() + z / (2.0 * omr)
}

/// The egocentric grid cell `(row, col)` for a neighbor at relative offset
/// `rel`; `None` when it falls outside the grid.
pub fn grid_cell(rel: [f64; 2], cfg: &StudentConfig) -> Option<(usize, usize)> {
    let half_x = cfg.grid_rows as f64 * cfg.cell_x / 2.0;
    let half_y = cfg.grid_cols as f64 * cfg.cell_y / 2.0;
    let r = (rel[0] + half_x) / cfg.cell_x;
    let c = (rel[1] + half_y) / cfg.cell_y;
    if r < 0.0 || c < 0.0 {
        return None;
    }
    let (r, c) = (r.floor() as usize, c.floor() as usize);
    if r >= cfg.grid_rows || c >= cfg.grid_cols {
        return None;
    }
    Some((r, c))
}

struct LstmIds {
    wx: VarId,
    wh: VarId,
    b: VarId,
}

struct ParamIds {
    encoder: LstmIds,
    conv_kernel: VarId,
    conv_bias: VarId,
    ctx_w: VarId,
    ctx_b: VarId,
    decoder: LstmIds,
    head_w: VarId,
    head_b: VarId,
    cpm_w1: VarId,
    cpm_b1: VarId,
    cpm_w_weight: VarId,
    cpm_b_weight: VarId,
    cpm_w_mean: VarId,
    cpm_b_mean: VarId,
    cpm_w_var: VarId,
    cpm_b_var: VarId,
}

fn leaf_params(tape: &mut Tape, p: &StudentParams) -> ParamIds {
    leaf_params_with(tape, p, None)
}

/// Like [`leaf_params`], but with one tensor (by [`StudentParams::tensors`]
/// index) replaced by an existing tape variable — the probed leaf during
/// gradient checking.
fn leaf_params_with(
    tape: &mut Tape,
    p: &StudentParams,
    replace: Option<(usize, VarId)>,
) -> ParamIds {
    let tensors = p.tensors();
    let mut next = 0usize;
    let mut leaf = |tape: &mut Tape| {
        let idx = next;
        next += 1;
        match replace {
            Some((k, id)) if k == idx => id,
            _ => tape.leaf(tensors[idx].clone()),
        }
    };
    ParamIds {
        encoder: LstmIds { wx: leaf(tape), wh: leaf(tape), b: leaf(tape) },
        conv_kernel: leaf(tape),
        conv_bias: leaf(tape),
        ctx_w: leaf(tape),
        ctx_b: leaf(tape),
        decoder: LstmIds { wx: leaf(tape), wh: leaf(tape), b: leaf(tape) },
        head_w: leaf(tape),
        head_b: leaf(tape),
        cpm_w1: leaf(tape),
        cpm_b1: leaf(tape),
        cpm_w_weight: leaf(tape),
        cpm_b_weight: leaf(tape),
        cpm_w_mean: leaf(tape),
        cpm_b_mean: leaf(tape),
        cpm_w_var: leaf(tape),
        cpm_b_var: leaf(tape),
    }
}

impl ParamIds {
    /// Leaves in the same order as [`StudentParams::tensors_mut`].
    fn all_ids(&self) -> [VarId; 20] {
        [
            self.encoder.wx,
            self.encoder.wh,
            self.encoder.b,
            self.conv_kernel,
            self.conv_bias,
            self.ctx_w,
            self.ctx_b,
            self.decoder.wx,
            self.decoder.wh,
            self.decoder.b,
            self.head_w,
            self.head_b,
            self.cpm_w1,
            self.cpm_b1,
            self.cpm_w_weight,
            self.cpm_b_weight,
            self.cpm_w_mean,
            self.cpm_b_mean,
            self.cpm_w_var,
            self.cpm_b_var,
        ]
    }
}

/// One batched LSTM step over all agents.
fn lstm_step(
    tape: &mut Tape,
    ids: &LstmIds,
    hidden: usize,
    x: VarId,
    h: VarId,
    c: VarId,
) -> Result<(VarId, VarId)> {
    let xw = tape.matmul(x, ids.wx)?;
    let hw = tape.matmul(h, ids.wh)?;
    let z = tape.add(xw, hw)?;
    let z = tape.add_bias(z, ids.b)?;
    let i = tape.slice_cols(z, 0, hidden)?;
    let f = tape.slice_cols(z, hidden, hidden)?;
    let g = tape.slice_cols(z, 2 * hidden, hidden)?;
    let o = tape.slice_cols(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Observed per-step displacements for every agent; frame 1 copies frame 2's,
/// matching the velocity convention.
fn displacement(scene: &Scene, t: usize) -> Tensor {
    let t = if t == 1 { 2 } else { t };
    let rows: Vec<Vec<f64>> = (0..scene.n_agents())
        .map(|a| {
            let p = scene.position(a, t);
            let q = scene.position(a, t - 1);
            vec![p[0] - q[0], p[1] - q[1]]
        })
        .collect();
    Tensor::from_rows(&rows).expect("agents share frame counts")
}

struct MixtureIds {
    omega: VarId,
    means: VarId,
    vars: VarId,
}

struct StepIds {
    mean_pos: VarId,
    sigma: VarId,
    rho: VarId,
}

struct SceneForward {
    h_enc: VarId,
    social: VarId,
    scene_feat: VarId,
    mixture: MixtureIds,
    steps: Vec<StepIds>,
    /// Scene trajectory loss: summed over future frames, averaged over agents.
    nll: VarId,
}

/// The full deterministic forward pass for one scene.
fn forward_scene(
    tape: &mut Tape,
    ids: &ParamIds,
    cfg: &StudentConfig,
    scene: &Scene,
) -> Result<SceneForward> {
    let n = scene.n_agents();
    let h_dim = cfg.enc_hidden;

    // Encoder over the observed window.
    let mut h = tape.leaf(Tensor::zeros(n, h_dim));
    let mut c = tape.leaf(Tensor::zeros(n, h_dim));
    for t in 1..=scene.t_h {
        let x = tape.leaf(displacement(scene, t));
        let (nh, nc) = lstm_step(tape, &ids.encoder, h_dim, x, h, c)?;
        h = nh;
        c = nc;
    }
    let h_enc = h;

    // Social pooling at the last observed frame.
    let mut agent_social = Vec::with_capacity(n);
    for a in 0..n {
        let center = scene.position(a, scene.t_h);
        let mut pairs = Vec::new();
        for b in 0..n {
            if b == a {
                continue;
            }
            let p = scene.position(b, scene.t_h);
            if let Some((r, col)) =
                grid_cell([p[0] - center[0], p[1] - center[1]], cfg)
            {
                pairs.push((b, r * cfg.grid_cols + col));
            }
        }
        let grid = tape.scatter_rows(h_enc, &pairs, cfg.grid_rows * cfg.grid_cols)?;
        let conv = tape.conv2d_valid(
            grid,
            ids.conv_kernel,
            cfg.grid_rows,
            cfg.grid_cols,
            3,
            3,
        )?;
        let conv = tape.add_bias(conv, ids.conv_bias)?;
        let act = tape.relu(conv);
        agent_social.push(tape.reshape(act, 1, cfg.social_dim())?);
    }
    let social = tape.concat_rows(&agent_social)?;
    let scene_feat = tape.mean_rows(social);

    // Congestion head.
    let a1 = tape.affine(scene_feat, ids.cpm_w1, ids.cpm_b1)?;
    let a1 = tape.relu(a1);
    let w_logits = tape.affine(a1, ids.cpm_w_weight, ids.cpm_b_weight)?;
    let omega = tape.softmax_rows(w_logits);
    let mean_flat = tape.affine(a1, ids.cpm_w_mean, ids.cpm_b_mean)?;
    let means = tape.reshape(mean_flat, cfg.m_p, cfg.d_z)?;
    let var_flat = tape.affine(a1, ids.cpm_w_var, ids.cpm_b_var)?;
    let var_flat = tape.softplus(var_flat);
    let var_flat = tape.add_scalar(var_flat, VAR_FLOOR);
    let vars = tape.reshape(var_flat, cfg.m_p, cfg.d_z)?;
    let mixture = MixtureIds { omega, means, vars };

    // Decoder initial state from encoding and social context.
    let ctx_in = tape.concat_cols(&[h_enc, social])?;
    let ctx = tape.affine(ctx_in, ids.ctx_w, ids.ctx_b)?;
    let ctx = tape.tanh(ctx);
    let mut dh = tape.slice_cols(ctx, 0, cfg.dec_hidden)?;
    let mut dc = tape.slice_cols(ctx, cfg.dec_hidden, cfg.dec_hidden)?;

    // Rollout.
    let last_pos = Tensor::from_rows(
        &(0..n).map(|a| scene.position(a, scene.t_h).to_vec()).collect::<Vec<_>>(),
    )?;
    let mut pos = tape.leaf(last_pos);
    let mut x_in = tape.leaf(displacement(scene, scene.t_h));
    let mut steps = Vec::with_capacity(scene.horizon());
    let mut nll_acc = tape.leaf(Tensor::zeros(n, 1));
    for s in 1..=scene.horizon() {
        let (nh, nc) = lstm_step(tape, &ids.decoder, cfg.dec_hidden, x_in, dh, dc)?;
        dh = nh;
        dc = nc;
        let out = tape.affine(dh, ids.head_w, ids.head_b)?;
        let mu = tape.slice_cols(out, 0, 2)?;
        let sig_raw = tape.slice_cols(out, 2, 2)?;
        let rho_raw = tape.slice_cols(out, 4, 1)?;
        let sigma = tape.softplus(sig_raw);
        let sigma = tape.add_scalar(sigma, cfg.sigma_floor);
        let rho = tape.tanh(rho_raw);
        let rho = tape.scale(rho, cfg.rho_limit);

        let mean_pos = tape.add(pos, mu)?;
        pos = mean_pos;
        x_in = mu;

        // Negative log-likelihood of the true position at this frame.
        let target = Tensor::from_rows(
            &(0..n)
                .map(|a| scene.position(a, scene.t_h + s).to_vec())
                .collect::<Vec<_>>(),
        )?;
        let target = tape.leaf(target);
        let diff = tape.sub(target, mean_pos)?;
        let scaled = tape.div(diff, sigma)?;
        let dx = tape.slice_cols(scaled, 0, 1)?;
        let dy = tape.slice_cols(scaled, 1, 1)?;
        let dx2 = tape.mul(dx, dx)?;
        let dy2 = tape.mul(dy, dy)?;
        let cross = tape.mul(dx, dy)?;
        let rho_cross = tape.mul(rho, cross)?;
        let rho_cross = tape.scale(rho_cross, -2.0);
        let z = tape.add(dx2, dy2)?;
        let z = tape.add(z, rho_cross)?;
        let rho2 = tape.mul(rho, rho)?;
        let omr = tape.scale(rho2, -1.0);
        let omr = tape.add_scalar(omr, 1.0);
        let z_term = tape.div(z, omr)?;
        let z_term = tape.scale(z_term, 0.5);
        let log_sig = tape.log(sigma);
        let sx = tape.slice_cols(log_sig, 0, 1)?;
        let sy = tape.slice_cols(log_sig, 1, 1)?;
        let log_omr = tape.log(omr);
        let log_omr = tape.scale(log_omr, 0.5);
        let mut nll = tape.add(z_term, sx)?;
        nll = tape.add(nll, sy)?;
        nll = tape.add(nll, log_omr)?;
        nll = tape.add_scalar(nll, LN_2PI);
        nll_acc = tape.add(nll_acc, nll)?;

        steps.push(StepIds { mean_pos, sigma, rho });
    }
    let nll_sum = tape.sum(nll_acc);
    let nll = tape.scale(nll_sum, 1.0 / n as f64);

    Ok(SceneForward { h_enc, social, scene_feat, mixture, steps, nll })
}

fn check_scene(scene: &Scene) -> Result<()> {
    scene.validate()
}

/// Final encoder hidden state per agent.
pub fn encode_history(params: &StudentParams, cfg: &StudentConfig, scene: &Scene) -> Result<Tensor> {
    cfg.validate()?;
    check_scene(scene)?;
    let mut tape = Tape::new();
    let ids = leaf_params(&mut tape, params);
    let fwd = forward_scene(&mut tape, &ids, cfg, scene)?;
    Ok(tape.value(fwd.h_enc).clone())
}

/// Per-agent social features and the scene feature (their mean).
pub fn social_features(
    params: &StudentParams,
    cfg: &StudentConfig,
    scene: &Scene,
) -> Result<(Tensor, Vec<f64>)> {
    cfg.validate()?;
    check_scene(scene)?;
    let mut tape = Tape::new();
    let ids = leaf_params(&mut tape, params);
    let fwd = forward_scene(&mut tape, &ids, cfg, scene)?;
    Ok((
        tape.value(fwd.social).clone(),
        tape.value(fwd.scene_feat).data().to_vec(),
    ))
}

/// The congestion mixture the student emits for a scene.
pub fn predict_mixture(
    params: &StudentParams,
    cfg: &StudentConfig,
    scene: &Scene,
) -> Result<GaussianMixture> {
    cfg.validate()?;
    check_scene(scene)?;
    let mut tape = Tape::new();
    let ids = leaf_params(&mut tape, params);
    let fwd = forward_scene(&mut tape, &ids, cfg, scene)?;
    mixture_from_values(&tape, &fwd.mixture, cfg)
}

fn mixture_from_values(
    tape: &Tape,
    ids: &MixtureIds,
    cfg: &StudentConfig,
) -> Result<GaussianMixture> {
    let omega = tape.value(ids.omega).data().to_vec();
    let means = tape.value(ids.means);
    let vars = tape.value(ids.vars);
    let comps = (0..cfg.m_p)
        .map(|j| {
            DiagGaussian::new(means.row_slice(j).to_vec(), vars.row_slice(j).to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(omega, comps)
}

/// Deterministic trajectory prediction with full per-step uncertainty.
pub fn predict(
    params: &StudentParams,
    cfg: &StudentConfig,
    scene: &Scene,
) -> Result<PredictionOutput> {
    cfg.validate()?;
    check_scene(scene)?;
    let mut tape = Tape::new();
    let ids = leaf_params(&mut tape, params);
    let fwd = forward_scene(&mut tape, &ids, cfg, scene)?;
    let n = scene.n_agents();
    let mut agents = vec![Vec::with_capacity(fwd.steps.len()); n];
    for step in &fwd.steps {
        let mean = tape.value(step.mean_pos);
        let sigma = tape.value(step.sigma);
        let rho = tape.value(step.rho);
        for (a, out) in agents.iter_mut().enumerate() {
            out.push(BivariateParams {
                mean: [mean.get(a, 0), mean.get(a, 1)],
                sigma: [sigma.get(a, 0), sigma.get(a, 1)],
                rho: rho.get(a, 0),
            });
        }
    }
    Ok(PredictionOutput { agents })
}

/// The scene trajectory loss: NLL of the true future positions, summed over
/// frames and averaged over agents.
pub fn nll_loss(params: &StudentParams, cfg: &StudentConfig, scene: &Scene) -> Result<f64> {
    cfg.validate()?;
    check_scene(scene)?;
    let mut tape = Tape::new();
    let ids = leaf_params(&mut tape, params);
    let fwd = forward_scene(&mut tape, &ids, cfg, scene)?;
    tape.value(fwd.nll).item()
}

/// Number of parameter tensors a student carries; valid probe indices for
/// [`loss_grad_check`] are `0..PARAM_TENSOR_COUNT`.
pub const PARAM_TENSOR_COUNT: usize = 20;

/// Central finite-difference check of the training-loss gradient with
/// respect to one parameter tensor, on freshly initialized parameters.
///
/// `tensor_index` walks the parameters in declaration order: encoder LSTM
/// (wx, wh, b), pooling convolution (kernel, bias), decoder context (w, b),
/// decoder LSTM (wx, wh, b), output head (w, b), and the congestion head
/// (hidden w/b, weight w/b, mean w/b, variance w/b).
///
/// Without a teacher the probed loss is the trajectory term alone; with one
/// it is `L2 + gamma * L1`, where the coupling is solved once at the
/// unperturbed point and then held fixed — the same constant backpropagation
/// sees. Returns the worst relative error over the tensor's coordinates.
pub fn loss_grad_check(
    scene: &Scene,
    teacher: Option<&TeacherModel>,
    cfg: &StudentConfig,
    seed: u64,
    tensor_index: usize,
    h: f64,
) -> Result<f64> {
    cfg.validate()?;
    check_scene(scene)?;
    if tensor_index >= PARAM_TENSOR_COUNT {
        return Err(Error::InvalidConfig(format!(
            "tensor index {tensor_index} out of range 0..{PARAM_TENSOR_COUNT}"
        )));
    }
    let params = StudentParams::init(cfg, seed)?;
    let consts = match teacher {
        Some(t) => {
            if t.d_z() != cfg.d_z || t.q_mixture.dim() != cfg.d_z {
                return Err(Error::LatentDimMismatch {
                    teacher: t.d_z(),
                    student: cfg.d_z,
                });
            }
            Some(TeacherConsts::new(&t.q_mixture))
        }
        None => None,
    };
    // Solve the coupling once at the base point; every probe reuses it.
    let coupling = match &consts {
        Some(consts) => {
            let mut tape = Tape::new();
            let ids = leaf_params(&mut tape, &params);
            let fwd = forward_scene(&mut tape, &ids, cfg, scene)?;
            let batch = batch_mixture(&mut tape, &[fwd.mixture])?;
            let p = detached_mixture(&tape, &batch, cfg)?;
            let table = kl_table(&p, &consts.mixture)?;
            let mut c = Coupling::independence(&consts.lambda, p.weights())?;
            for _ in 0..cfg.k_inner {
                c.update_alpha(&table, p.weights())?;
                c.update_beta(&consts.lambda)?;
            }
            Some(c)
        }
        None => None,
    };

    let at = params.tensors()[tensor_index].clone();
    grad_check(
        |tape, x| {
            let ids = leaf_params_with(tape, &params, Some((tensor_index, x)));
            let fwd = forward_scene(tape, &ids, cfg, scene)?;
            match (&coupling, &consts) {
                (Some(c), Some(consts)) => {
                    let batch = batch_mixture(tape, &[fwd.mixture])?;
                    let bound = batch_cpm_bound_on_tape(tape, &batch, consts, c, cfg)?;
                    let scaled = tape.scale(bound, cfg.gamma);
                    tape.add(fwd.nll, scaled)
                }
                _ => Ok(fwd.nll),
            }
        },
        &at,
        h,
    )
}

/// Teacher-mixture constants reused across every scene of a batch.
struct TeacherConsts {
    lambda: Vec<f64>,
    mixture: GaussianMixture,
    q_means: Vec<Tensor>,
    q_vars: Vec<Tensor>,
    q_log_var_sums: Vec<f64>,
}

impl TeacherConsts {
    fn new(q: &GaussianMixture) -> Self {
        let q_means = q
            .components()
            .iter()
            .map(|c| Tensor::row(c.mean().to_vec()))
            .collect();
        let q_vars: Vec<Tensor> = q
            .components()
            .iter()
            .map(|c| Tensor::row(c.var().to_vec()))
            .collect();
        let q_log_var_sums = q
            .components()
            .iter()
            .map(|c| c.var().iter().map(|v| v.ln()).sum())
            .collect();
        Self {
            lambda: q.weights().to_vec(),
            mixture: q.clone(),
            q_means,
            q_vars,
            q_log_var_sums,
        }
    }
}

/// The batch's student mixture: component means and variances averaged on
/// the tape (so gradients fan back to every scene's head), weights averaged
/// on detached values (the coupling solve consumes them as constants).
struct BatchMixture {
    means: VarId,
    vars: VarId,
    omega: Vec<f64>,
}

fn batch_mixture(tape: &mut Tape, mixes: &[MixtureIds]) -> Result<BatchMixture> {
    let b = mixes.len();
    let inv = 1.0 / b as f64;
    let mut means = mixes[0].means;
    let mut vars = mixes[0].vars;
    for m in &mixes[1..] {
        means = tape.add(means, m.means)?;
        vars = tape.add(vars, m.vars)?;
    }
    let means = tape.scale(means, inv);
    let vars = tape.scale(vars, inv);
    let m_p = tape.value(mixes[0].omega).cols();
    let mut omega = vec![0.0; m_p];
    for m in mixes {
        for (o, &w) in omega.iter_mut().zip(tape.value(m.omega).data()) {
            *o += w * inv;
        }
    }
    Ok(BatchMixture { means, vars, omega })
}

/// Build the pattern-matching bound for one batch on the tape.
///
/// The coupling is solved on detached values (`k_inner` alpha/beta sweeps
/// from the independence initialization) and then held constant, so the
/// tape expression
///
/// ```text
/// L1 = sum_ij alpha_ij KL(p_j || q_i) + KL(alpha || beta)
/// ```
///
/// has its second term as a constant and differentiates only through the
/// component parameters of `p` — the gradient-mode p-step.
fn batch_cpm_on_tape(
    tape: &mut Tape,
    mixes: &[MixtureIds],
    consts: &TeacherConsts,
    cfg: &StudentConfig,
) -> Result<VarId> {
    let batch = batch_mixture(tape, mixes)?;
    let p_det = detached_mixture(tape, &batch, cfg)?;
    let mut coupling = Coupling::independence(&consts.lambda, p_det.weights())?;
    let table = kl_table(&p_det, &consts.mixture)?;
    for _ in 0..cfg.k_inner {
        coupling.update_alpha(&table, p_det.weights())?;
        coupling.update_beta(&consts.lambda)?;
    }
    batch_cpm_bound_on_tape(tape, &batch, consts, &coupling, cfg)
}

fn detached_mixture(
    tape: &Tape,
    batch: &BatchMixture,
    cfg: &StudentConfig,
) -> Result<GaussianMixture> {
    let means = tape.value(batch.means);
    let vars = tape.value(batch.vars);
    let comps = (0..cfg.m_p)
        .map(|j| {
            DiagGaussian::new(means.row_slice(j).to_vec(), vars.row_slice(j).to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(batch.omega.clone(), comps)
}

/// The bound expression for a fixed coupling.
fn batch_cpm_bound_on_tape(
    tape: &mut Tape,
    batch: &BatchMixture,
    consts: &TeacherConsts,
    coupling: &Coupling,
    cfg: &StudentConfig,
) -> Result<VarId> {
    let m_q = consts.lambda.len();
    let mut total: Option<VarId> = None;
    for j in 0..cfg.m_p {
        let p_mean = tape.slice_rows(batch.means, j, 1)?;
        let p_var = tape.slice_rows(batch.vars, j, 1)?;
        let log_p_var = tape.log(p_var);
        let neg_log_p = tape.scale(log_p_var, -1.0);
        for i in 0..m_q {
            let a = coupling.alpha(i, j);
            if a == 0.0 {
                continue;
            }
            // alpha_ij * KL(p_j || q_i) for diagonal Gaussians:
            // 1/2 sum_d [ ln v_q - ln v_p + (v_p + (m_p - m_q)^2)/v_q - 1 ].
            let q_mean = tape.leaf(consts.q_means[i].clone());
            let q_var = tape.leaf(consts.q_vars[i].clone());
            let diff = tape.sub(p_mean, q_mean)?;
            let diff2 = tape.mul(diff, diff)?;
            let num = tape.add(p_var, diff2)?;
            let ratio = tape.div(num, q_var)?;
            let inner = tape.add(ratio, neg_log_p)?;
            let inner_sum = tape.sum(inner);
            let kl = tape.add_scalar(
                inner_sum,
                consts.q_log_var_sums[i] - cfg.d_z as f64,
            );
            let kl = tape.scale(kl, 0.5 * a);
            total = Some(match total {
                Some(acc) => tape.add(acc, kl)?,
                None => kl,
            });
        }
    }
    let weighted = total.ok_or(Error::InvalidCoupling(format!(
        "coupling carries no mass on any component pair"
    )))?;
    // The assignment's own divergence is constant under the fixed coupling.
    Ok(tape.add_scalar(weighted, coupling.coupling_kl()))
}

/// Per-epoch averages of the training objectives.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean trajectory loss over batches.
    pub nll: f64,
    /// Mean pattern-matching bound over batches (0 when disabled).
    pub cpm: f64,
    pub total: f64,
}

/// Training curve of a student run.
#[derive(Clone, Debug)]
pub struct StudentReport {
    pub epochs: Vec<EpochStats>,
}

/// Train the student on the train split.
///
/// With `gamma > 0` a teacher must be supplied and its latent dimension has
/// to match `cfg.d_z`; the loss is `L2 + gamma * L1` against the teacher's
/// mixture. With `gamma = 0` the teacher (if any) is ignored and the run is
/// bit-identical to one without a teacher.
pub fn train_student(
    dataset: &Dataset,
    teacher: Option<&TeacherModel>,
    cfg: &StudentConfig,
) -> Result<(StudentParams, StudentReport)> {
    cfg.validate()?;
    let use_cpm = cfg.gamma > 0.0;
    let consts = if use_cpm {
        let teacher = teacher.ok_or_else(|| {
            Error::InvalidConfig(format!("gamma = {} requires a teacher", cfg.gamma))
        })?;
        if teacher.d_z() != cfg.d_z {
            return Err(Error::LatentDimMismatch {
                teacher: teacher.d_z(),
                student: cfg.d_z,
            });
        }
        if teacher.q_mixture.dim() != cfg.d_z {
            return Err(Error::LatentDimMismatch {
                teacher: teacher.q_mixture.dim(),
                student: cfg.d_z,
            });
        }
        Some(TeacherConsts::new(&teacher.q_mixture))
    } else {
        None
    };

    let train: Vec<&Scene> = dataset.side(Split::Train);
    if train.is_empty() {
        return Err(Error::InvalidDataset(format!("train split is empty")));
    }
    for scene in &train {
        check_scene(scene)?;
    }

    let mut params = StudentParams::init(cfg, child_seed(cfg.seed, 0))?;
    let shapes: Vec<(usize, usize)> =
        params.tensors().map(|t| (t.rows(), t.cols())).to_vec();
    let mut adam = Adam::new(cfg.lr, &shapes)?;
    let mut order_rng = seeded(child_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut report = StudentReport { epochs: Vec::with_capacity(cfg.epochs) };
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut order_rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_scenes) {
            let mut tape = Tape::new();
            let ids = leaf_params(&mut tape, &params);
            let mut nll_terms = Vec::with_capacity(chunk.len());
            let mut mixtures = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let fwd = forward_scene(&mut tape, &ids, cfg, train[idx])?;
                nll_terms.push(fwd.nll);
                mixtures.push(fwd.mixture);
            }
            let nll_stack = tape.concat_cols(&nll_terms)?;
            let nll_mean = tape.mean(nll_stack);
            let (loss, cpm_val) = if let Some(consts) = &consts {
                let bound = batch_cpm_on_tape(&mut tape, &mixtures, consts, cfg)?;
                let cpm_val = tape.value(bound).item()?;
                let weighted = tape.scale(bound, cfg.gamma);
                (tape.add(nll_mean, weighted)?, cpm_val)
            } else {
                (nll_mean, 0.0)
            };
            let nll_val = tape.value(nll_mean).item()?;
            let loss_val = tape.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(Error::NonFinite { op: "train_student", iteration: epoch });
            }
            sums.0 += nll_val;
            sums.1 += cpm_val;
            sums.2 += loss_val;
            batches += 1;

            let grads = tape.backward(loss)?;
            let param_ids = ids.all_ids();
            let mut grad_tensors: Vec<Tensor> =
                param_ids.iter().map(|&id| grads.wrt(id).clone()).collect();
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grad_tensors, cfg.grad_clip);
            }
            let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
            let mut tensors = params.tensors_mut();
            adam.step(&mut tensors, &grad_refs)?;
        }
        let b = batches.max(1) as f64;
        report.epochs.push(EpochStats {
            epoch,
            nll: sums.0 / b,
            cpm: sums.1 / b,
            total: sums.2 / b,
        });
    }
    Ok((params, report))
}
