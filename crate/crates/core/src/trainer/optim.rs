//! ADAM with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{HgnError, Result};
use crate::netcore::ParamSet;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-5 }
    }
}

/// First/second moment buffers shaped like the parameters, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    /// One update: `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
    pub fn update(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64, cfg: &AdamConfig) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.m) {
            return Err(HgnError::Contract("optimizer buffers do not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
        let c1 = T::lit(1.0 / (1.0 - cfg.beta1.powi(t)));
        let c2 = T::lit(1.0 / (1.0 - cfg.beta2.powi(t)));
        let (lr_t, eps, wd) = (T::lit(lr), T::lit(cfg.eps), T::lit(cfg.weight_decay));
        for (((p, g), m), v) in params
            .params
            .iter_mut()
            .zip(&grads.params)
            .zip(&mut self.m.params)
            .zip(&mut self.v.params)
        {
            for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let step = (*m * c1) / ((*v * c2).sqrt() + eps) + wd * *p;
                *p -= lr_t * step;
            }
        }
        Ok(())
    }
}
