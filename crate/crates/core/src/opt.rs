//! Adam optimizer with bias correction.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;
use crate::tensor::Tensor;

/// Adam state over a fixed list of parameter tensors.
///
/// The optimizer is constructed against the parameter shapes and must be
/// stepped with tensors in the same order each time; first and second moment
/// estimates are kept per coordinate with the standard bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// Standard coefficients (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) with
    /// the given learning rate.
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
        }
        let m = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        let v = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Ok(Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m, v })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update in place. `params` and `grads` must match the shapes
    /// given at construction, in order.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidConfig(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, grad), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v))
        {
            if param.len() != m.len() || grad.len() != m.len() {
                return Err(Error::ShapeMismatch {
                    op: "Adam::step",
                    detail: format!(
                        "state has {} values, param {} and grad {}",
                        m.len(),
                        param.len(),
                        grad.len()
                    ),
                });
            }
            for i in 0..m.len() {
                let g = grad.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                param.data_mut()[i] -= update;
            }
        }
        Ok(())
    }
}

/// Scale `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &x in g.data() {
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= k;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = sum((x - target)^2); gradient 2(x - target).
        let target = [3.0, -1.0, 0.5];
        let mut x = Tensor::row(vec![0.0; 3]);
        let mut adam = Adam::new(0.05, &[(1, 3)]).unwrap();
        for _ in 0..2000 {
            let grad = Tensor::row(
                x.data().iter().zip(&target).map(|(&xi, &t)| 2.0 * (xi - t)).collect(),
            );
            adam.step(&mut [&mut x], &[&grad]).unwrap();
        }
        for (xi, t) in x.data().iter().zip(&target) {
            assert!((xi - t).abs() < 1e-4, "{xi} vs {t}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut x = Tensor::row(vec![1.0, 2.0]);
        let before = x.clone();
        let mut adam = Adam::new(0.1, &[(1, 2)]).unwrap();
        let zero = Tensor::zeros(1, 2);
        for _ in 0..5 {
            adam.step(&mut [&mut x], &[&zero]).unwrap();
        }
        assert_eq!(x, before);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With bias correction the very first update is lr * sign(g).
        let mut x = Tensor::row(vec![0.0]);
        let mut adam = Adam::new(0.01, &[(1, 1)]).unwrap();
        let grad = Tensor::row(vec![12.3]);
        adam.step(&mut [&mut x], &[&grad]).unwrap();
        assert!((x.data()[0] + 0.01).abs() < 1e-6, "{}", x.data()[0]);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let mut adam = Adam::new(0.1, &[(1, 2)]).unwrap();
        let mut x = Tensor::zeros(1, 2);
        let g_bad = Tensor::zeros(2, 2);
        assert!(adam.step(&mut [&mut x], &[&g_bad]).is_err());
        let g = Tensor::zeros(1, 2);
        assert!(adam.step(&mut [], &[&g]).is_err());
        assert!(Adam::new(0.0, &[]).is_err());
    }

    #[test]
    fn clip_rescales_only_when_needed() {
        let mut grads = vec![Tensor::row(vec![3.0, 0.0]), Tensor::row(vec![0.0, 4.0])];
        let norm = clip_global_norm(&mut grads, 10.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert_eq!(grads[0].data()[0], 3.0);
        let norm2 = clip_global_norm(&mut grads, 1.0);
        assert!((norm2 - 5.0).abs() < 1e-12);
        assert!((grads[0].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads[1].data()[1] - 0.8).abs() < 1e-12);
    }
}
