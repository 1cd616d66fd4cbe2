//! Adam with L2-coupled weight decay and bias-corrected moments.

use crate::vit::model::ViTModel;
use crate::vit::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.001,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &ViTModel) -> Self {
        let shapes: Vec<Tensor> = model
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One optimizer step. The decay term is folded into the gradient
/// (g <- g + wd * theta) before the moment updates.
pub fn adam_step(model: &mut ViTModel, grads: &ViTModel, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let grad_tensors = grads.tensors();
    let mut params = model.tensors_mut();
    for (((param, grad), m), v) in params
        .iter_mut()
        .zip(grad_tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let p = param.data_mut();
        let g = grad.data();
        let m = m.data_mut();
        let v = v.data_mut();
        for i in 0..p.len() {
            let gi = g[i] + cfg.weight_decay * p[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
