//! Congestion pattern matching: a variational upper bound on the KL
//! divergence between two Gaussian mixtures, minimized by coordinate descent.
//!
//! The KL divergence between mixtures has no closed form. With a teacher
//! mixture `Q = sum_i lambda_i q_i` and a student mixture
//! `P = sum_j omega_j p_j`, the bound used here is
//!
//! ```text
//! L1(alpha, beta) = sum_ij alpha_ij KL(p_j || q_i) + KL(alpha || beta)
//! ```
//!
//! over coupling matrices `alpha, beta >= 0` (indexed teacher-component by
//! student-component) with column sums of `alpha` fixed to `omega` and row
//! sums of `beta` fixed to `lambda`; `KL(alpha || beta)` is the entrywise
//! joint KL with the `0 log 0 = 0` convention. `L1 >= KL(P || Q)` for every
//! feasible pair, with the gap closing as the couplings approach the optimal
//! transport-like assignment.
//!
//! Each coordinate update is an exact constrained minimizer, so the bound
//! never increases:
//!
//! * alpha-step: `alpha_ij ∝ beta_ij exp(-KL(p_j || q_i))`, normalized per
//!   column to mass `omega_j`;
//! * beta-step: `beta_ij ∝ alpha_ij`, normalized per row to mass `lambda_i`;
//! * p-step (when the `p_j` are free parameters rather than network output):
//!   component `j` moves to the precision-weighted average of the teacher
//!   components, weights `alpha_ij / omega_j`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fp::logsumexp;
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::gaussian::{gaussian_kl, DiagGaussian, GaussianMixture};

/// Alpha-column shares below this fraction of the column are treated as
/// zero. Keeping them would let deep descent runs drift into subnormals,
/// where the beta rescale can underflow to an exact zero beneath positive
/// alpha mass and blow the coupling KL up to infinity.
const ALPHA_SHARE_CUTOFF: f64 = 1e-290;

/// Pairwise divergences `KL(p_j || q_i)`, laid out row-major by teacher
/// component `i`.
#[derive(Clone, Debug)]
pub struct KlTable {
    m_q: usize,
    m_p: usize,
    vals: Vec<f64>,
}

impl KlTable {
    pub fn m_q(&self) -> usize {
        self.m_q
    }

    pub fn m_p(&self) -> usize {
        self.m_p
    }

    /// `KL(p_j || q_i)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.vals[i * self.m_p + j]
    }
}

/// All pairwise divergences between the components of `p` and `q`;
/// entry `(i, j)` is `KL(p_j || q_i)`.
pub fn kl_table(p: &GaussianMixture, q: &GaussianMixture) -> Result<KlTable> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch { op: "kl_table", left: p.dim(), right: q.dim() });
    }
    let (m_q, m_p) = (q.len(), p.len());
    let mut vals = Vec::with_capacity(m_q * m_p);
    for i in 0..m_q {
        for j in 0..m_p {
            vals.push(gaussian_kl(p.component(j), q.component(i))?);
        }
    }
    Ok(KlTable { m_q, m_p, vals })
}

/// The pair of coupling matrices the bound is optimized over.
///
/// Both are `m_q x m_p`, non-negative; feasibility means the column sums of
/// `alpha` equal the student weights and the row sums of `beta` equal the
/// teacher weights. Updates preserve feasibility exactly (they normalize).
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    m_q: usize,
    m_p: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Coupling {
    /// Independence initialization: `alpha = beta = lambda omega^T`, the
    /// product coupling. Feasible by construction with `KL(alpha||beta) = 0`.
    pub fn independence(lambda: &[f64], omega: &[f64]) -> Result<Self> {
        if lambda.is_empty() || omega.is_empty() {
            return Err(Error::InvalidCoupling(format!("empty weight vector")));
        }
        let (m_q, m_p) = (lambda.len(), omega.len());
        let mut alpha = Vec::with_capacity(m_q * m_p);
        for &l in lambda {
            for &w in omega {
                alpha.push(l * w);
            }
        }
        Ok(Self { m_q, m_p, alpha: alpha.clone(), beta: alpha })
    }

    pub fn m_q(&self) -> usize {
        self.m_q
    }

    pub fn m_p(&self) -> usize {
        self.m_p
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.m_p + j]
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.beta[i * self.m_p + j]
    }

    /// Column sums of `alpha`; feasibility pins these to the student weights.
    pub fn alpha_column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.m_p];
        for i in 0..self.m_q {
            for j in 0..self.m_p {
                sums[j] += self.alpha[i * self.m_p + j];
            }
        }
        sums
    }

    /// Row sums of `beta`; feasibility pins these to the teacher weights.
    pub fn beta_row_sums(&self) -> Vec<f64> {
        (0..self.m_q)
            .map(|i| self.beta[i * self.m_p..(i + 1) * self.m_p].iter().sum())
            .collect()
    }

    /// Verify feasibility against the given weights within `tol`.
    pub fn check_marginals(&self, lambda: &[f64], omega: &[f64], tol: f64) -> Result<()> {
        if lambda.len() != self.m_q || omega.len() != self.m_p {
            return Err(Error::InvalidCoupling(format!(
                "coupling is {}x{} but got {} teacher and {} student weights",
                self.m_q,
                self.m_p,
                lambda.len(),
                omega.len()
            )));
        }
        for (j, (&got, &want)) in
            self.alpha_column_sums().iter().zip(omega).enumerate()
        {
            if (got - want).abs() > tol {
                return Err(Error::InvalidCoupling(format!(
                    "alpha column {j} sums to {got}, expected {want}"
                )));
            }
        }
        for (i, (&got, &want)) in self.beta_row_sums().iter().zip(lambda).enumerate() {
            if (got - want).abs() > tol {
                return Err(Error::InvalidCoupling(format!(
                    "beta row {i} sums to {got}, expected {want}"
                )));
            }
        }
        Ok(())
    }

    /// Exact alpha-step: per column `j`,
    /// `alpha_ij = omega_j * beta_ij exp(-KL_ij) / sum_i' beta_i'j exp(-KL_i'j)`,
    /// computed in the log domain. A column whose weight is zero stays zero;
    /// a column with positive weight but no usable `beta` mass is an error
    /// (degenerate initialization).
    pub fn update_alpha(&mut self, table: &KlTable, omega: &[f64]) -> Result<()> {
        self.check_table(table)?;
        if omega.len() != self.m_p {
            return Err(Error::InvalidCoupling(format!(
                "expected {} student weights, got {}",
                self.m_p,
                omega.len()
            )));
        }
        for j in 0..self.m_p {
            if omega[j] <= 0.0 {
                for i in 0..self.m_q {
                    self.alpha[i * self.m_p + j] = 0.0;
                }
                continue;
            }
            let logits: Vec<f64> = (0..self.m_q)
                .map(|i| {
                    let b = self.beta[i * self.m_p + j];
                    if b > 0.0 {
                        b.ln() - table.get(i, j)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let z = logsumexp(&logits);
            if !z.is_finite() {
                return Err(Error::DegenerateCoupling { column: j });
            }
            // Vanishing shares are dropped outright: a subnormal alpha entry
            // would make the next beta rescale underflow to an exact zero
            // under positive alpha mass, turning the coupling KL infinite.
            // The discarded mass is at most m_q * 1e-290.
            let shares: Vec<f64> = logits.iter().map(|&l| (l - z).exp()).collect();
            let kept: f64 = shares.iter().filter(|&&s| s >= ALPHA_SHARE_CUTOFF).sum();
            for (i, &s) in shares.iter().enumerate() {
                self.alpha[i * self.m_p + j] = if s >= ALPHA_SHARE_CUTOFF {
                    omega[j] * s / kept
                } else {
                    0.0
                };
            }
        }
        Ok(())
    }

    /// Exact beta-step: per row `i`, `beta_ij = lambda_i alpha_ij / sum_j'
    /// alpha_ij'`. A row of `alpha` with no mass leaves every feasible `beta`
    /// row optimal (its KL terms vanish), so the uniform row is used.
    pub fn update_beta(&mut self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.m_q {
            return Err(Error::InvalidCoupling(format!(
                "expected {} teacher weights, got {}",
                self.m_q,
                lambda.len()
            )));
        }
        for i in 0..self.m_q {
            let row = &self.alpha[i * self.m_p..(i + 1) * self.m_p];
            let total: f64 = row.iter().sum();
            let out = &mut self.beta[i * self.m_p..(i + 1) * self.m_p];
            if total > 0.0 {
                for (b, &a) in out.iter_mut().zip(row) {
                    *b = lambda[i] * a / total;
                }
            } else {
                let u = lambda[i] / self.m_p as f64;
                out.fill(u);
            }
        }
        Ok(())
    }

    /// Entrywise `KL(alpha || beta)` with the `0 log 0 = 0` convention;
    /// `+inf` if `alpha` has mass where `beta` has none.
    pub fn coupling_kl(&self) -> f64 {
        let mut acc = 0.0;
        for (&a, &b) in self.alpha.iter().zip(&self.beta) {
            if a > 0.0 {
                if b > 0.0 {
                    acc += a * (a.ln() - b.ln());
                } else {
                    return f64::INFINITY;
                }
            }
        }
        acc
    }

    fn check_table(&self, table: &KlTable) -> Result<()> {
        if table.m_q != self.m_q || table.m_p != self.m_p {
            return Err(Error::InvalidCoupling(format!(
                "KL table is {}x{} but coupling is {}x{}",
                table.m_q, table.m_p, self.m_q, self.m_p
            )));
        }
        Ok(())
    }
}

/// The bound value for given mixtures and couplings.
pub fn upper_bound(
    p: &GaussianMixture,
    q: &GaussianMixture,
    c: &Coupling,
) -> Result<f64> {
    let table = kl_table(p, q)?;
    upper_bound_with(&table, c)
}

/// The bound value when the KL table is already available.
pub fn upper_bound_with(table: &KlTable, c: &Coupling) -> Result<f64> {
    c.check_table(table)?;
    let mut acc = 0.0;
    for i in 0..c.m_q {
        for j in 0..c.m_p {
            let a = c.alpha(i, j);
            if a > 0.0 {
                acc += a * table.get(i, j);
            }
        }
    }
    Ok(acc + c.coupling_kl())
}

/// Closed-form p-step: move every student component with positive weight to
/// the precision-weighted average of the teacher components,
/// `Lambda_j = sum_i (alpha_ij / omega_j) Lambda_i` and
/// `mu_j = Lambda_j^{-1} sum_i (alpha_ij / omega_j) Lambda_i mu_i`.
/// Components with zero weight (or an alpha column with no mass) are frozen.
pub fn p_step(
    p: &GaussianMixture,
    q: &GaussianMixture,
    c: &Coupling,
) -> Result<GaussianMixture> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch { op: "p_step", left: p.dim(), right: q.dim() });
    }
    if c.m_q() != q.len() || c.m_p() != p.len() {
        return Err(Error::InvalidCoupling(format!(
            "coupling is {}x{} but mixtures have {} and {} components",
            c.m_q(),
            c.m_p(),
            q.len(),
            p.len()
        )));
    }
    let dim = p.dim();
    let omega = p.weights();
    let mut components = Vec::with_capacity(p.len());
    for j in 0..p.len() {
        let mass: f64 = (0..q.len()).map(|i| c.alpha(i, j)).sum();
        if omega[j] <= 0.0 || mass <= 0.0 {
            components.push(p.component(j).clone());
            continue;
        }
        let mut precision = vec![0.0; dim];
        let mut weighted_mean = vec![0.0; dim];
        for i in 0..q.len() {
            let w = c.alpha(i, j) / omega[j];
            if w == 0.0 {
                continue;
            }
            let qc = q.component(i);
            for d in 0..dim {
                let lam = 1.0 / qc.var()[d];
                precision[d] += w * lam;
                weighted_mean[d] += w * lam * qc.mean()[d];
            }
        }
        let var: Vec<f64> = precision.iter().map(|&l| 1.0 / l).collect();
        let mean: Vec<f64> =
            weighted_mean.iter().zip(&var).map(|(&m, &v)| m * v).collect();
        components.push(DiagGaussian::new(mean, var)?);
    }
    GaussianMixture::new(omega.to_vec(), components)
}

/// Settings for [`cpm_solve`].
#[derive(Clone, Debug)]
pub struct CpmConfig {
    /// Cap on full coordinate-descent iterations.
    pub max_iters: usize,
    /// Relative bound decrease below which the solve stops.
    pub rel_tol: f64,
}

impl Default for CpmConfig {
    fn default() -> Self {
        Self { max_iters: 200, rel_tol: 1e-9 }
    }
}

/// Trace of a coordinate-descent solve.
#[derive(Clone, Debug)]
pub struct CpmReport {
    /// Bound before any update, then after each full iteration; never
    /// increases.
    pub bound_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize the bound over both couplings and the student components, holding
/// the student weights fixed at `p0.weights()`.
///
/// Each iteration runs the alpha-, beta-, and p-steps once in that order.
/// Returns the optimized mixture, the final couplings, and the bound trace.
pub fn cpm_solve(
    p0: &GaussianMixture,
    q: &GaussianMixture,
    cfg: &CpmConfig,
) -> Result<(GaussianMixture, Coupling, CpmReport)> {
    let mut p = p0.clone();
    let mut c = Coupling::independence(q.weights(), p.weights())?;
    let mut table = kl_table(&p, q)?;
    let mut bound = upper_bound_with(&table, &c)?;
    let mut trace = vec![bound];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        c.update_alpha(&table, p.weights())?;
        c.update_beta(q.weights())?;
        p = p_step(&p, q, &c)?;
        table = kl_table(&p, q)?;
        let next = upper_bound_with(&table, &c)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { op: "cpm_solve", iteration: it });
        }
        trace.push(next);
        if (bound - next).abs() <= cfg.rel_tol * (1.0 + bound.abs()) {
            converged = true;
            break;
        }
        bound = next;
    }
    Ok((p, c, CpmReport { bound_trace: trace, iterations, converged }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, RngExt};

    fn mix(weights: &[f64], means: &[&[f64]], vars: &[&[f64]]) -> GaussianMixture {
        let comps = means
            .iter()
            .zip(vars)
            .map(|(m, v)| DiagGaussian::new(m.to_vec(), v.to_vec()).unwrap())
            .collect();
        GaussianMixture::new(weights.to_vec(), comps).unwrap()
    }

    fn random_mixture(m: usize, dim: usize, spread: f64, seed: u64) -> GaussianMixture {
        let mut rng = seeded(seed);
        let weights: Vec<f64> = (0..m).map(|_| rng.uniform_in(0.2, 1.0)).collect();
        let comps = (0..m)
            .map(|_| {
                let mean: Vec<f64> =
                    (0..dim).map(|_| rng.uniform_in(-spread, spread)).collect();
                let var: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.2, 1.5)).collect();
                DiagGaussian::new(mean, var).unwrap()
            })
            .collect();
        GaussianMixture::new(weights, comps).unwrap()
    }

    #[test]
    fn independence_coupling_is_feasible_with_zero_kl() {
        let lambda = [0.2, 0.3, 0.5];
        let omega = [0.6, 0.4];
        let c = Coupling::independence(&lambda, &omega).unwrap();
        c.check_marginals(&lambda, &omega, 1e-12).unwrap();
        assert_eq!(c.coupling_kl(), 0.0);
        assert!((c.alpha(2, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn initial_bound_is_weighted_average_of_kls() {
        let p = random_mixture(2, 3, 2.0, 1);
        let q = random_mixture(3, 3, 2.0, 2);
        let c = Coupling::independence(q.weights(), p.weights()).unwrap();
        let table = kl_table(&p, &q).unwrap();
        let mut expected = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                expected += q.weights()[i] * p.weights()[j] * table.get(i, j);
            }
        }
        let got = upper_bound(&p, &q, &c).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn alpha_step_preserves_marginals_and_lowers_bound() {
        let p = random_mixture(3, 2, 3.0, 3);
        let q = random_mixture(4, 2, 3.0, 4);
        let mut c = Coupling::independence(q.weights(), p.weights()).unwrap();
        let table = kl_table(&p, &q).unwrap();
        let before = upper_bound_with(&table, &c).unwrap();
        c.update_alpha(&table, p.weights()).unwrap();
        for (j, (&got, &want)) in
            c.alpha_column_sums().iter().zip(p.weights()).enumerate()
        {
            assert!((got - want).abs() < 1e-12, "column {j}: {got} vs {want}");
        }
        let after = upper_bound_with(&table, &c).unwrap();
        assert!(after <= before + 1e-12, "{after} > {before}");
    }

    #[test]
    fn beta_step_restores_feasibility_and_minimizes_kl() {
        let p = random_mixture(2, 2, 2.5, 5);
        let q = random_mixture(3, 2, 2.5, 6);
        let mut c = Coupling::independence(q.weights(), p.weights()).unwrap();
        let table = kl_table(&p, &q).unwrap();
        c.update_alpha(&table, p.weights()).unwrap();
        let mid = upper_bound_with(&table, &c).unwrap();
        c.update_beta(q.weights()).unwrap();
        c.check_marginals(q.weights(), p.weights(), 1e-12).unwrap();
        let after = upper_bound_with(&table, &c).unwrap();
        assert!(after <= mid + 1e-12);
    }

    #[test]
    fn solve_trace_is_monotone_on_random_instances() {
        for seed in 0..5 {
            let p0 = random_mixture(3, 4, 3.0, 100 + seed);
            let q = random_mixture(4, 4, 3.0, 200 + seed);
            let (_, c, report) =
                cpm_solve(&p0, &q, &CpmConfig::default()).unwrap();
            for w in report.bound_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "bound increased: {} -> {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
            c.check_marginals(q.weights(), p0.weights(), 1e-12).unwrap();
        }
    }

    #[test]
    fn identical_separated_mixtures_converge_immediately() {
        // Components far apart: cross-KLs are enormous, so the couplings
        // snap onto the diagonal and the bound collapses to ~0.
        let q = mix(
            &[0.3, 0.7],
            &[&[-20.0, 0.0], &[20.0, 5.0]],
            &[&[0.5, 0.5], &[0.8, 0.3]],
        );
        let (p, _, report) = cpm_solve(&q.clone(), &q, &CpmConfig::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "took {} iterations", report.iterations);
        let last = *report.bound_trace.last().unwrap();
        assert!(last >= -1e-15 && last < 1e-9, "final bound {last}");
        // Components did not move.
        for j in 0..2 {
            for d in 0..2 {
                assert!((p.component(j).mean()[d] - q.component(j).mean()[d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn p_step_is_stationary_for_the_column_objective() {
        // After the closed-form p-step, numerically perturbing any mean or
        // variance coordinate of a column must not lower the weighted KL sum.
        let p0 = random_mixture(2, 3, 2.0, 7);
        let q = random_mixture(3, 3, 2.0, 8);
        let mut c = Coupling::independence(q.weights(), p0.weights()).unwrap();
        let table = kl_table(&p0, &q).unwrap();
        c.update_alpha(&table, p0.weights()).unwrap();
        let p = p_step(&p0, &q, &c).unwrap();

        let column_cost = |j: usize, comp: &DiagGaussian| -> f64 {
            (0..q.len())
                .map(|i| c.alpha(i, j) * gaussian_kl(comp, q.component(i)).unwrap())
                .sum()
        };
        for j in 0..p.len() {
            let base = column_cost(j, p.component(j));
            for d in 0..p.dim() {
                for delta in [-1e-4, 1e-4] {
                    let mut mean = p.component(j).mean().to_vec();
                    mean[d] += delta;
                    let moved =
                        DiagGaussian::new(mean, p.component(j).var().to_vec()).unwrap();
                    assert!(column_cost(j, &moved) >= base - 1e-12);

                    let mut var = p.component(j).var().to_vec();
                    var[d] *= 1.0 + delta;
                    let scaled =
                        DiagGaussian::new(p.component(j).mean().to_vec(), var).unwrap();
                    assert!(column_cost(j, &scaled) >= base - 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_weight_component_is_frozen_without_error() {
        let p0 = mix(
            &[0.5, 0.5, 0.0],
            &[&[0.0], &[1.0], &[50.0]],
            &[&[1.0], &[1.0], &[1.0]],
        );
        let q = random_mixture(2, 1, 1.0, 9);
        let (p, c, report) = cpm_solve(&p0, &q, &CpmConfig::default()).unwrap();
        assert_eq!(p.component(2).mean()[0], 50.0);
        assert!(report.bound_trace.iter().all(|b| b.is_finite()));
        let sums = c.alpha_column_sums();
        assert_eq!(sums[2], 0.0);
    }

    #[test]
    fn degenerate_beta_column_is_an_error() {
        let p = random_mixture(2, 1, 1.0, 10);
        let q = random_mixture(2, 1, 1.0, 11);
        let mut c = Coupling::independence(q.weights(), p.weights()).unwrap();
        // Zero out beta's first column by hand.
        for i in 0..2 {
            c.beta[i * 2] = 0.0;
        }
        let table = kl_table(&p, &q).unwrap();
        let err = c.update_alpha(&table, p.weights()).unwrap_err();
        assert_eq!(err, Error::DegenerateCoupling { column: 0 });
    }

    #[test]
    fn bound_dominates_monte_carlo_kl() {
        // L1 >= KL(P || Q); check against a Monte-Carlo estimate of the true
        // mixture KL with a 3-sigma allowance.
        let p = mix(&[0.4, 0.6], &[&[-1.0, 0.5], &[1.5, -0.5]], &[&[0.6, 1.0], &[0.9, 0.4]]);
        let q = mix(&[0.5, 0.5], &[&[-0.5, 0.0], &[1.0, 0.2]], &[&[1.0, 1.0], &[0.7, 0.9]]);
        let (_, _, report) = cpm_solve(&p, &q, &CpmConfig::default()).unwrap();
        let bound = *report.bound_trace.last().unwrap();

        let mut rng = seeded(12);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let x = p.sample(&mut rng);
            let t = p.log_pdf(&x).unwrap() - q.log_pdf(&x).unwrap();
            sum += t;
            sumsq += t * t;
        }
        let kl_mc = sum / n as f64;
        let se = ((sumsq / n as f64 - kl_mc * kl_mc) / n as f64).sqrt();
        // Coupling optimization tightens the bound but moving P breaks the
        // comparison with KL(P || Q), so optimize the couplings alone here.
        let table = kl_table(&p, &q).unwrap();
        let mut c = Coupling::independence(q.weights(), p.weights()).unwrap();
        for _ in 0..50 {
            c.update_alpha(&table, p.weights()).unwrap();
            c.update_beta(q.weights()).unwrap();
        }
        let bound_fixed_p = upper_bound_with(&table, &c).unwrap();
        assert!(
            bound_fixed_p >= kl_mc - 3.0 * se,
            "bound {bound_fixed_p} below MC KL {kl_mc} (se {se})"
        );
        assert!(bound.is_finite() && bound >= -1e-12);
    }
}
