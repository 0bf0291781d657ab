use ndarray::{Array, Dimension, Zip};
use serde::{Deserialize, Serialize};

use super::gradients::Gradients;
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments<D: Dimension> {
    m: Array<f64, D>,
    v: Array<f64, D>,
}

impl<D: Dimension> Moments<D> {
    fn new(shape: D) -> Self {
        Self {
            m: Array::zeros(shape.clone()),
            v: Array::zeros(shape),
        }
    }
}

/// Adam with decoupled weight decay over the trainable blocks only. Frozen
/// encoder layers have no optimizer state and are never written.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    layers: Vec<(Moments<ndarray::Ix2>, Moments<ndarray::Ix1>)>,
    proj_w: Moments<ndarray::Ix2>,
    proj_b: Option<Moments<ndarray::Ix1>>,
    codebook: Moments<ndarray::Ix2>,
    n_frozen: usize,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        let n_frozen = params.encoder.n_frozen;
        Self {
            config,
            step: 0,
            layers: params.encoder.layers[n_frozen..]
                .iter()
                .map(|l| (Moments::new(l.weight.raw_dim()), Moments::new(l.bias.raw_dim())))
                .collect(),
            proj_w: Moments::new(params.projection.weight.raw_dim()),
            proj_b: params.projection.bias.as_ref().map(|b| Moments::new(b.raw_dim())),
            codebook: Moments::new(params.codebook.codewords.raw_dim()),
            n_frozen,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Codewords are left off the sphere;
    /// the caller renormalizes.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) {
        self.step += 1;
        let cfg = self.config.clone();
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (i, (mw, mb)) in self.layers.iter_mut().enumerate() {
            let l = self.n_frozen + i;
            let layer = &mut params.encoder.layers[l];
            update(&mut layer.weight, &grads.encoder[l].weight, mw, &cfg, lr, bc1, bc2);
            update(&mut layer.bias, &grads.encoder[l].bias, mb, &cfg, lr, bc1, bc2);
        }
        update(
            &mut params.projection.weight,
            &grads.projection_weight,
            &mut self.proj_w,
            &cfg,
            lr,
            bc1,
            bc2,
        );
        if let (Some(b), Some(gb), Some(mb)) = (
            params.projection.bias.as_mut(),
            grads.projection_bias.as_ref(),
            self.proj_b.as_mut(),
        ) {
            update(b, gb, mb, &cfg, lr, bc1, bc2);
        }
        update(
            &mut params.codebook.codewords,
            &grads.codebook,
            &mut self.codebook,
            &cfg,
            lr,
            bc1,
            bc2,
        );
    }
}

fn update<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    mom: &mut Moments<D>,
    cfg: &AdamConfig,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    Zip::from(param)
        .and(grad)
        .and(&mut mom.m)
        .and(&mut mom.v)
        .for_each(|p, &g, m, v| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
        });
}
