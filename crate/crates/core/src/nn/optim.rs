use super::layer::Param;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Epochs at which the learning rate is multiplied by [`LR_DECAY`].
pub const LR_MILESTONES: [u32; 6] = [4, 7, 10, 13, 16, 18];
pub const LR_DECAY: f64 = 0.9;

/// Learning rate in effect during `epoch` (1-based).
pub fn lr_schedule(initial_lr: f64, epoch: u32) -> f64 {
    lr_schedule_with(initial_lr, epoch, &LR_MILESTONES)
}

/// [`lr_schedule`] with custom milestones.
pub fn lr_schedule_with(initial_lr: f64, epoch: u32, milestones: &[u32]) -> f64 {
    let passed = milestones.iter().filter(|&&m| m <= epoch).count();
    initial_lr * LR_DECAY.powi(passed as i32)
}

/// Bias-corrected Adam with per-parameter moments in visitor order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of every parameter from its accumulated gradient.
    /// Moments are created lazily on the first call.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::domain(format!(
                "adam: state tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.m) {
            p.grad.expect_shape(p.value.shape(), "adam_step")?;
            m.expect_shape(p.value.shape(), "adam_step")?;
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        let step = T::from_f64_lossy(self.lr / c1);
        let inv_c2 = T::from_f64_lossy(1.0 / c2);
        let eps = T::from_f64_lossy(self.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grads = p.grad.data();
            let vals = p.value.data_mut();
            for (((w, &g), mi), vi) in vals.iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = b1 * *mi + ob1 * g;
                *vi = b2 * *vi + ob2 * g * g;
                *w = *w - step * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Standalone form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(params: &mut [&mut Param<T>], state: &mut AdamState<T>) -> Result<()> {
    state.step(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0.001, 1), 0.001);
        assert!((lr_schedule(0.001, 3) - 0.001).abs() < 1e-18);
        assert!((lr_schedule(0.001, 4) - 0.0009).abs() < 1e-15);
        assert!((lr_schedule(0.001, 20) - 5.3144e-4).abs() < 1e-8);
    }

    fn param(v: Vec<f64>, g: Vec<f64>) -> Param<f64> {
        let n = v.len();
        Param {
            value: Tensor::new(&[n], v).unwrap(),
            grad: Tensor::new(&[n], g).unwrap(),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = param(vec![1.0, -2.0], vec![0.0, 0.0]);
        let mut s = AdamState::new(0.01);
        adam_step(&mut [&mut p], &mut s).unwrap();
        assert_eq!(p.value.data(), &[1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_sign() {
        let mut p = param(vec![0.0, 0.0, 0.0], vec![3.0, -0.5, 100.0]);
        let mut s = AdamState::new(0.001);
        s.step(&mut [&mut p]).unwrap();
        for (w, g) in p.value.data().iter().zip([3.0f64, -0.5, 100.0]) {
            assert!((w + 0.001 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_with_cloned_state() {
        let mut a = param(vec![0.3, 0.1], vec![0.2, -0.7]);
        let mut s = AdamState::new(0.01);
        s.step(&mut [&mut a]).unwrap();
        let (mut b, mut s2) = (a.clone(), s.clone());
        s.step(&mut [&mut a]).unwrap();
        s2.step(&mut [&mut b]).unwrap();
        assert_eq!(a, b);
        assert_eq!(s, s2);
    }

    #[test]
    fn mismatched_param_count() {
        let mut a = param(vec![0.0], vec![1.0]);
        let mut b = param(vec![0.0], vec![1.0]);
        let mut s = AdamState::new(0.01);
        s.step(&mut [&mut a]).unwrap();
        assert!(s.step(&mut [&mut a, &mut b]).is_err());
    }
}
