use super::params::ParamStore;
use super::Real;
use crate::error::Result;

/// Applies accumulated gradients to a parameter store. Gradients are left
/// untouched; callers zero them between steps.
pub trait Optimizer<T: Real> {
    fn step(&mut self, params: &mut ParamStore<T>) -> Result<()>;
}

/// Plain gradient descent: `theta -= lr * grad`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl<T: Real> Optimizer<T> for Sgd {
    fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        params.check_finite_grads()?;
        let lr = T::of(self.lr);
        for p in params.iter_mut() {
            for (v, g) in p.value.iter_mut().zip(&p.grad) {
                *v -= lr * *g;
            }
        }
        Ok(())
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
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

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl<T: Real> Optimizer<T> for Adam {
    fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        params.check_finite_grads()?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i].as_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let update = self.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                p.value[i] -= T::of(update);
            }
        }
        Ok(())
    }
}
