//! Adam over flat parameter vectors with per-parameter learning rates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: Vec<T>,
    m: Vec<T>,
    v: Vec<T>,
    step: u32,
}

impl<T: Scalar> Adam<T> {
    /// One learning rate per parameter slot.
    pub fn new(lr: Vec<T>) -> Self {
        let n = lr.len();
        Adam { lr, m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0 }
    }

    /// `groups` lists `(count, lr)` blocks repeated `repeat` times, e.g. one
    /// block per keypoint.
    pub fn grouped(groups: &[(usize, T)], repeat: usize) -> Self {
        let lr = (0..repeat).flat_map(|_| groups.iter().flat_map(|&(n, lr)| std::iter::repeat_n(lr, n))).collect();
        Self::new(lr)
    }

    pub fn len(&self) -> usize {
        self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.lr.len() || grads.len() != self.lr.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer has {} slots, got {} params and {} grads",
                self.lr.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let eps = T::lit(EPS);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr[i] * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
