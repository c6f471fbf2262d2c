use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with L2 weight decay folded into the gradient (`g + wd * θ`).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros = || params.values().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads[i] = None` means a zero gradient. Any
    /// non-finite gradient aborts before touching the parameters.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params.values()[i].shape() {
                    return Err(Error::shape(format!("gradient shape mismatch for {}", params.name(i))));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", params.name(i))));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, theta) in params.values_mut().iter_mut().enumerate() {
            let g = grads[i].as_ref();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..theta.len() {
                let x = theta.data()[j];
                let gj = g.map_or(0.0, |g| g.data()[j]) + self.weight_decay * x;
                let mj = self.beta1 * m.data()[j] + (1.0 - self.beta1) * gj;
                let vj = self.beta2 * v.data()[j] + (1.0 - self.beta2) * gj * gj;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                theta.data_mut()[j] = x - self.lr * (mj / bc1) / ((vj / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
