use serde::{Deserialize, Serialize};

use super::graph::Grads;
use super::params::{ParamId, Params};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64, momentum: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Sgd { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &Params) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.rows, t.cols)).collect::<Vec<_>>();
        let v = if matches!(cfg, OptimizerConfig::Adam { .. }) { zeros() } else { Vec::new() };
        Self { cfg, m: zeros(), v, t: 0 }
    }

    /// Applies one update; parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut Params, grads: &Grads) {
        self.step_with_lr(params, grads, self.cfg.lr());
    }

    pub fn step_with_lr(&mut self, params: &mut Params, grads: &Grads, lr: f64) {
        self.t += 1;
        for i in 0..params.len() {
            let Some(g) = grads.get(ParamId(i)) else { continue };
            let p = params.get_mut(ParamId(i));
            let m = &mut self.m[i].data;
            match self.cfg {
                OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                    let v = &mut self.v[i].data;
                    let c1 = 1.0 - beta1.powi(self.t as i32);
                    let c2 = 1.0 - beta2.powi(self.t as i32);
                    for j in 0..g.data.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g.data[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g.data[j] * g.data[j];
                        p.data[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
                OptimizerConfig::Sgd { momentum, .. } => {
                    for j in 0..g.data.len() {
                        m[j] = momentum * m[j] + g.data[j];
                        p.data[j] -= lr * m[j];
                    }
                }
            }
        }
    }
}

/// Rescales `grads` to global norm at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let n = grads.norm();
    if n > max_norm && n.is_finite() {
        grads.scale(max_norm / n);
    }
    n
}
