//! Diagonal Gaussians, Gaussian mixtures, and expectation-maximization.
//!
//! These are the distributions the teacher fits over its latent codes and the
//! student emits from its congestion head. Variances are floored at
//! [`VAR_FLOOR`] everywhere so that densities, KL divergences, and EM updates
//! stay finite no matter how degenerate the data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::fp::{logsumexp, LN_2PI};
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::rng::{seeded, RngExt};

/// Smallest admissible variance in any coordinate.
pub const VAR_FLOOR: f64 = 1e-6;

/// A Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    /// Build from mean and per-coordinate variance; variances are floored,
    /// non-finite input is rejected.
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimMismatch {
                op: "DiagGaussian::new",
                left: mean.len(),
                right: var.len(),
            });
        }
        if mean.is_empty() {
            return Err(Error::InvalidConfig(format!("Gaussian needs dimension >= 1")));
        }
        if !mean.iter().chain(var.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite Gaussian parameters")));
        }
        let var = var.into_iter().map(|v| v.max(VAR_FLOOR)).collect();
        Ok(Self { mean, var })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                op: "DiagGaussian::log_pdf",
                left: x.len(),
                right: self.dim(),
            });
        }
        let mut acc = 0.0;
        for ((&xi, &mi), &vi) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xi - mi;
            acc += -0.5 * (LN_2PI + vi.ln() + d * d / vi);
        }
        Ok(acc)
    }

    /// Draw one sample; consumes exactly `dim` normal draws from `rng`.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| m + v.sqrt() * rng.normal())
            .collect()
    }
}

/// KL(p || q) between diagonal Gaussians, in nats. Always >= 0 and zero
/// exactly when the distributions coincide.
pub fn gaussian_kl(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch {
            op: "gaussian_kl",
            left: p.dim(),
            right: q.dim(),
        });
    }
    let mut acc = 0.0;
    for i in 0..p.dim() {
        let (mp, vp) = (p.mean[i], p.var[i]);
        let (mq, vq) = (q.mean[i], q.var[i]);
        let d = mp - mq;
        acc += 0.5 * ((vq / vp).ln() + (vp + d * d) / vq - 1.0);
    }
    Ok(acc)
}

/// Differential entropy of a diagonal Gaussian, in nats.
pub fn gaussian_entropy(p: &DiagGaussian) -> f64 {
    p.var.iter().map(|&v| 0.5 * (LN_2PI + 1.0 + v.ln())).sum()
}

/// Cross-entropy H(p, q) = H(p) + KL(p || q), in nats.
pub fn gaussian_cross_entropy(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    Ok(gaussian_entropy(p) + gaussian_kl(p, q)?)
}

/// A finite mixture of diagonal Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<DiagGaussian>,
}

impl GaussianMixture {
    /// Build from weights and components. Weights must be non-negative with
    /// positive total mass and are normalized to sum to one; components must
    /// share a dimension.
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::InvalidWeights {
                reason: format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                ),
            });
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidWeights {
                reason: format!("weights must be finite and non-negative"),
            });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeights { reason: format!("zero total mass") });
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::DimMismatch {
                op: "GaussianMixture::new",
                left: dim,
                right: components.iter().map(DiagGaussian::dim).find(|&d| d != dim).unwrap_or(dim),
            });
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { weights, components })
    }

    /// Number of components.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagGaussian] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &DiagGaussian {
        &self.components[k]
    }

    /// Log density under the mixture.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.len());
        for (w, c) in self.weights.iter().zip(&self.components) {
            let lw = if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
            terms.push(lw + c.log_pdf(x)?);
        }
        Ok(logsumexp(&terms))
    }

    /// Posterior responsibilities of each component for the point `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut logs = Vec::with_capacity(self.len());
        for (w, c) in self.weights.iter().zip(&self.components) {
            let lw = if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
            logs.push(lw + c.log_pdf(x)?);
        }
        let z = logsumexp(&logs);
        Ok(logs.into_iter().map(|l| (l - z).exp()).collect())
    }

    /// Overall mean of the mixture.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (o, &m) in out.iter_mut().zip(c.mean()) {
                *o += w * m;
            }
        }
        out
    }

    /// Draw one sample: pick a component by weight, then sample it.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> Vec<f64> {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut pick = self.len() - 1;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = k;
                break;
            }
        }
        self.components[pick].sample(rng)
    }
}

/// Which flavour of EM to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmMode {
    /// Full-data E and M steps; log-likelihood is monotone.
    Batch,
    /// Mini-batch E-steps blended into running sufficient statistics.
    Stochastic,
}

/// Settings for [`fit_em`].
#[derive(Clone, Debug)]
pub struct EmConfig {
    /// Number of mixture components.
    pub components: usize,
    /// Iteration cap (full passes in batch mode, mini-batches otherwise).
    pub max_iters: usize,
    /// Relative log-likelihood change below which batch EM stops early.
    pub tol: f64,
    /// Seed for initialization and mini-batch order.
    pub seed: u64,
    pub mode: EmMode,
    /// Mini-batch size for [`EmMode::Stochastic`]; ignored in batch mode.
    pub batch_size: usize,
}

impl EmConfig {
    pub fn new(components: usize, seed: u64) -> Self {
        Self {
            components,
            max_iters: 200,
            tol: 1e-8,
            seed,
            mode: EmMode::Batch,
            batch_size: 64,
        }
    }
}

/// What happened during an EM fit.
#[derive(Clone, Debug)]
pub struct EmReport {
    /// Mean log-likelihood of the full data after each iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit a Gaussian mixture to `samples` with expectation-maximization.
///
/// Initialization picks `components` distinct samples as means (seeded),
/// per-dimension data variance as the starting variance, and uniform weights.
/// In batch mode the reported log-likelihood trace is non-decreasing up to
/// floating-point noise; stochastic mode trades that guarantee for cheap
/// mini-batch updates.
pub fn fit_em(samples: &[Vec<f64>], cfg: &EmConfig) -> Result<(GaussianMixture, EmReport)> {
    let m = cfg.components;
    let n = samples.len();
    if m == 0 {
        return Err(Error::InvalidConfig(format!("EM needs at least one component")));
    }
    if n < m {
        return Err(Error::InvalidConfig(format!(
            "EM needs at least as many samples ({n}) as components ({m})"
        )));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidConfig(format!(
            "EM samples must share a positive dimension"
        )));
    }

    let mut rng = seeded(cfg.seed);

    // Data variance for the initial spread.
    let mut data_mean = vec![0.0; dim];
    for s in samples {
        for (a, &x) in data_mean.iter_mut().zip(s) {
            *a += x;
        }
    }
    for a in data_mean.iter_mut() {
        *a /= n as f64;
    }
    let mut data_var = vec![0.0; dim];
    for s in samples {
        for ((a, &x), &mu) in data_var.iter_mut().zip(s).zip(&data_mean) {
            let d = x - mu;
            *a += d * d;
        }
    }
    for a in data_var.iter_mut() {
        *a = (*a / n as f64).max(VAR_FLOOR);
    }

    // Means from distinct seed samples.
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    while chosen.len() < m {
        let idx = rng.below(n);
        if !chosen.contains(&idx) {
            chosen.push(idx);
        }
    }
    let mut mixture = GaussianMixture::new(
        vec![1.0; m],
        chosen
            .iter()
            .map(|&i| DiagGaussian::new(samples[i].clone(), data_var.clone()))
            .collect::<Result<Vec<_>>>()?,
    )?;

    match cfg.mode {
        EmMode::Batch => fit_em_batch(samples, cfg, mixture),
        EmMode::Stochastic => {
            let report = fit_em_stochastic(samples, cfg, &mut mixture, &mut rng)?;
            Ok((mixture, report))
        }
    }
}

/// Mean log-likelihood of the data under the mixture.
pub fn mean_log_likelihood(samples: &[Vec<f64>], mixture: &GaussianMixture) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        acc += mixture.log_pdf(s)?;
    }
    Ok(acc / samples.len() as f64)
}

fn fit_em_batch(
    samples: &[Vec<f64>],
    cfg: &EmConfig,
    mut mixture: GaussianMixture,
) -> Result<(GaussianMixture, EmReport)> {
    let n = samples.len();
    let m = cfg.components;
    let dim = samples[0].len();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        // E-step: responsibilities in the log domain.
        let mut resp = vec![0.0; n * m];
        for (s_idx, s) in samples.iter().enumerate() {
            let r = mixture.responsibilities(s)?;
            resp[s_idx * m..(s_idx + 1) * m].copy_from_slice(&r);
        }
        // M-step.
        let mut counts = vec![0.0; m];
        let mut sums = vec![0.0; m * dim];
        for (s_idx, s) in samples.iter().enumerate() {
            for k in 0..m {
                let r = resp[s_idx * m + k];
                counts[k] += r;
                for (d, &x) in s.iter().enumerate() {
                    sums[k * dim + d] += r * x;
                }
            }
        }
        let mut new_components = Vec::with_capacity(m);
        let mut new_weights = Vec::with_capacity(m);
        for k in 0..m {
            if counts[k] <= 1e-12 {
                // Starved component: keep it where it is with vanishing weight.
                new_components.push(mixture.component(k).clone());
                new_weights.push(1e-12);
                continue;
            }
            let mean: Vec<f64> =
                (0..dim).map(|d| sums[k * dim + d] / counts[k]).collect();
            let mut var = vec![0.0; dim];
            for (s_idx, s) in samples.iter().enumerate() {
                let r = resp[s_idx * m + k];
                for (d, &x) in s.iter().enumerate() {
                    let diff = x - mean[d];
                    var[d] += r * diff * diff;
                }
            }
            for v in var.iter_mut() {
                *v /= counts[k];
            }
            new_components.push(DiagGaussian::new(mean, var)?);
            new_weights.push(counts[k] / n as f64);
        }
        mixture = GaussianMixture::new(new_weights, new_components)?;

        let ll = mean_log_likelihood(samples, &mixture)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite { op: "fit_em", iteration: it });
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= cfg.tol * (1.0 + ll.abs()));
        trace.push(ll);
        if done {
            converged = true;
            break;
        }
    }
    Ok((mixture, EmReport { log_likelihood: trace, iterations, converged }))
}

fn fit_em_stochastic<R: RngCore>(
    samples: &[Vec<f64>],
    cfg: &EmConfig,
    mixture: &mut GaussianMixture,
    rng: &mut R,
) -> Result<EmReport> {
    let n = samples.len();
    let m = cfg.components;
    let dim = samples[0].len();
    let bs = cfg.batch_size.max(1).min(n);

    // Running per-sample sufficient statistics, seeded from one full E-step
    // estimate scaled down to a single batch's worth of confidence.
    let mut counts = vec![1.0 / m as f64; m];
    let mut sums = vec![0.0; m * dim];
    let mut sqs = vec![0.0; m * dim];
    for k in 0..m {
        for d in 0..dim {
            let mu = mixture.component(k).mean()[d];
            let v = mixture.component(k).var()[d];
            sums[k * dim + d] = counts[k] * mu;
            sqs[k * dim + d] = counts[k] * (v + mu * mu);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut cursor = n; // force an initial shuffle
    for it in 0..cfg.max_iters {
        if cursor + bs > n {
            crate::rng::shuffle(&mut order, rng);
            cursor = 0;
        }
        let batch = &order[cursor..cursor + bs];
        cursor += bs;

        let eta = libm::pow((it + 2) as f64, -0.7);
        let mut b_counts = vec![0.0; m];
        let mut b_sums = vec![0.0; m * dim];
        let mut b_sqs = vec![0.0; m * dim];
        for &s_idx in batch {
            let s = &samples[s_idx];
            let r = mixture.responsibilities(s)?;
            for k in 0..m {
                b_counts[k] += r[k];
                for (d, &x) in s.iter().enumerate() {
                    b_sums[k * dim + d] += r[k] * x;
                    b_sqs[k * dim + d] += r[k] * x * x;
                }
            }
        }
        let scale = 1.0 / bs as f64;
        for k in 0..m {
            counts[k] = (1.0 - eta) * counts[k] + eta * b_counts[k] * scale;
            for d in 0..dim {
                let i = k * dim + d;
                sums[i] = (1.0 - eta) * sums[i] + eta * b_sums[i] * scale;
                sqs[i] = (1.0 - eta) * sqs[i] + eta * b_sqs[i] * scale;
            }
        }

        let mut new_components = Vec::with_capacity(m);
        let mut new_weights = Vec::with_capacity(m);
        for k in 0..m {
            if counts[k] <= 1e-12 {
                new_components.push(mixture.component(k).clone());
                new_weights.push(1e-12);
                continue;
            }
            let mean: Vec<f64> = (0..dim).map(|d| sums[k * dim + d] / counts[k]).collect();
            let var: Vec<f64> = (0..dim)
                .map(|d| sqs[k * dim + d] / counts[k] - mean[d] * mean[d])
                .collect();
            new_components.push(DiagGaussian::new(mean, var)?);
            new_weights.push(counts[k]);
        }
        *mixture = GaussianMixture::new(new_weights, new_components)?;

        // Report the full-data likelihood once per simulated epoch.
        if (it + 1) % n.div_ceil(bs) == 0 || it + 1 == cfg.max_iters {
            let ll = mean_log_likelihood(samples, mixture)?;
            if !ll.is_finite() {
                return Err(Error::NonFinite { op: "fit_em", iteration: it });
            }
            trace.push(ll);
        }
    }
    Ok(EmReport { log_likelihood: trace, iterations: cfg.max_iters, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), var.to_vec()).unwrap()
    }

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        let p = g(&[0.3, -1.2, 5.0], &[0.5, 2.0, 1.0]);
        assert!(gaussian_kl(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kl_known_value_unit_variance_shift() {
        // Unit variances, mean shift d: KL = d^2 / 2.
        let p = g(&[1.0], &[1.0]);
        let q = g(&[0.0], &[1.0]);
        assert!((gaussian_kl(&p, &q).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_is_asymmetric_and_nonnegative() {
        let p = g(&[0.0, 0.0], &[1.0, 0.2]);
        let q = g(&[0.7, -0.3], &[0.4, 1.5]);
        let pq = gaussian_kl(&p, &q).unwrap();
        let qp = gaussian_kl(&q, &p).unwrap();
        assert!(pq > 0.0 && qp > 0.0);
        assert!((pq - qp).abs() > 1e-3);
    }

    #[test]
    fn kl_rejects_dimension_mismatch() {
        let p = g(&[0.0], &[1.0]);
        let q = g(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(
            gaussian_kl(&p, &q),
            Err(Error::DimMismatch { op: "gaussian_kl", .. })
        ));
    }

    #[test]
    fn entropy_matches_closed_form() {
        // H = 0.5 * sum(log(2 pi e var)).
        let p = g(&[3.0, -1.0], &[1.0, 4.0]);
        let expected = 0.5 * (LN_2PI + 1.0) + 0.5 * (LN_2PI + 1.0 + (4.0f64).ln());
        assert!((gaussian_entropy(&p) - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_decomposition() {
        let p = g(&[0.2, 0.9], &[0.7, 1.3]);
        let q = g(&[-0.4, 1.5], &[2.0, 0.6]);
        let h = gaussian_cross_entropy(&p, &q).unwrap();
        assert!((h - gaussian_entropy(&p) - gaussian_kl(&p, &q).unwrap()).abs() < 1e-12);
        // Cross-entropy of p with itself is its entropy.
        let hp = gaussian_cross_entropy(&p, &p).unwrap();
        assert!((hp - gaussian_entropy(&p)).abs() < 1e-12);
    }

    #[test]
    fn variance_floor_applies() {
        let p = g(&[0.0], &[0.0]);
        assert_eq!(p.var()[0], VAR_FLOOR);
        let q = g(&[0.0], &[-5.0]);
        assert_eq!(q.var()[0], VAR_FLOOR);
    }

    #[test]
    fn log_pdf_standard_normal_at_origin() {
        let p = DiagGaussian::standard(2);
        let expected = -LN_2PI; // -0.5 * 2 * ln(2 pi)
        assert!((p.log_pdf(&[0.0, 0.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mixture_weights_normalize_and_validate() {
        let comps = vec![DiagGaussian::standard(1), DiagGaussian::standard(1)];
        let m = GaussianMixture::new(vec![2.0, 6.0], comps.clone()).unwrap();
        assert!((m.weights()[0] - 0.25).abs() < 1e-15);
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(GaussianMixture::new(vec![1.0, -0.1], comps.clone()).is_err());
        assert!(GaussianMixture::new(vec![0.0, 0.0], comps).is_err());
    }

    #[test]
    fn mixture_log_pdf_matches_direct_sum() {
        let m = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![g(&[0.0], &[1.0]), g(&[4.0], &[2.0])],
        )
        .unwrap();
        let x = [1.3];
        let direct = 0.3 * m.component(0).log_pdf(&x).unwrap().exp()
            + 0.7 * m.component(1).log_pdf(&x).unwrap().exp();
        assert!((m.log_pdf(&x).unwrap() - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_sum_to_one_and_favor_near_component() {
        let m = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![g(&[-3.0], &[1.0]), g(&[3.0], &[1.0])],
        )
        .unwrap();
        let r = m.responsibilities(&[2.8]).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r[1] > 0.99);
    }

    #[test]
    fn sampling_tracks_mixture_moments() {
        let m = GaussianMixture::new(
            vec![0.25, 0.75],
            vec![g(&[-2.0, 0.0], &[0.5, 1.0]), g(&[2.0, 1.0], &[1.0, 0.25])],
        )
        .unwrap();
        let mut rng = seeded(77);
        let n = 100_000;
        let mut mean = [0.0, 0.0];
        for _ in 0..n {
            let s = m.sample(&mut rng);
            mean[0] += s[0];
            mean[1] += s[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        let expected = m.mean();
        assert!((mean[0] - expected[0]).abs() < 0.03, "{mean:?} vs {expected:?}");
        assert!((mean[1] - expected[1]).abs() < 0.03, "{mean:?} vs {expected:?}");
    }

    fn two_cluster_data(seed: u64, n_each: usize) -> Vec<Vec<f64>> {
        let mut rng = seeded(seed);
        let a = g(&[-2.0, 0.5], &[0.3, 0.2]);
        let b = g(&[2.5, -1.0], &[0.4, 0.3]);
        let mut out = Vec::with_capacity(2 * n_each);
        for _ in 0..n_each {
            out.push(a.sample(&mut rng));
            out.push(b.sample(&mut rng));
        }
        out
    }

    #[test]
    fn batch_em_recovers_separated_clusters() {
        let data = two_cluster_data(5, 400);
        let cfg = EmConfig::new(2, 17);
        let (mix, report) = fit_em(&data, &cfg).unwrap();
        assert!(report.converged, "EM did not converge in {} iters", report.iterations);

        // Match fitted components to the true means in either order.
        let truth = [[-2.0, 0.5], [2.5, -1.0]];
        let m0 = mix.component(0).mean();
        let close = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).all(|(x, y)| (x - y).abs() < 0.3)
        };
        let (first, second) = if close(m0, &truth[0]) { (0, 1) } else { (1, 0) };
        assert!(close(mix.component(first).mean(), &truth[0]), "means {:?}", mix);
        assert!(close(mix.component(second).mean(), &truth[1]), "means {:?}", mix);
        for w in mix.weights() {
            assert!((w - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn batch_em_log_likelihood_is_monotone() {
        let data = two_cluster_data(6, 250);
        let cfg = EmConfig::new(3, 23);
        let (_, report) = fit_em(&data, &cfg).unwrap();
        for pair in report.log_likelihood.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-9,
                "log-likelihood decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn stochastic_em_lands_near_batch_solution() {
        let data = two_cluster_data(7, 400);
        let mut cfg = EmConfig::new(2, 31);
        cfg.mode = EmMode::Stochastic;
        cfg.batch_size = 50;
        cfg.max_iters = 400;
        let (mix, _) = fit_em(&data, &cfg).unwrap();
        let ll = mean_log_likelihood(&data, &mix).unwrap();

        let (batch_mix, _) = fit_em(&data, &EmConfig::new(2, 31)).unwrap();
        let batch_ll = mean_log_likelihood(&data, &batch_mix).unwrap();
        assert!(
            ll > batch_ll - 0.15,
            "stochastic ll {ll} far below batch ll {batch_ll}"
        );
    }

    #[test]
    fn em_rejects_bad_input() {
        assert!(fit_em(&[vec![0.0]], &EmConfig::new(2, 1)).is_err());
        assert!(fit_em(&[vec![0.0], vec![1.0]], &EmConfig::new(0, 1)).is_err());
        let ragged = vec![vec![0.0, 1.0], vec![2.0]];
        assert!(fit_em(&ragged, &EmConfig::new(1, 1)).is_err());
    }

    #[test]
    fn em_is_deterministic_given_seed() {
        let data = two_cluster_data(9, 150);
        let (a, _) = fit_em(&data, &EmConfig::new(2, 3)).unwrap();
        let (b, _) = fit_em(&data, &EmConfig::new(2, 3)).unwrap();
        assert_eq!(a, b);
    }
}
