use super::network::{Gradients, Sequential};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

/// Adam with bias correction. Moments are allocated lazily per layer, the
/// first time that layer receives a gradient.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Option<Moments>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState { config, step: 0, moments: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Frozen layers and layers without a gradient are
    /// skipped entirely; their moments do not advance. A non-finite gradient
    /// aborts before any parameter is touched.
    pub fn step(&mut self, net: &mut Sequential, grads: &Gradients) -> Result<()> {
        if grads.per_layer.len() != net.layers.len() {
            return Err(Error::Shape(format!(
                "gradients cover {} layers, network has {}",
                grads.per_layer.len(),
                net.layers.len()
            )));
        }
        for (i, g) in grads.per_layer.iter().enumerate() {
            let Some(g) = g else { continue };
            if !g.weight.all_finite() || !g.bias.all_finite() {
                let name = net.layers[i].name().unwrap_or("?");
                return Err(Error::Numeric(format!("non-finite gradient in layer {i} ({name})")));
            }
            let p = net.layers[i]
                .params()
                .ok_or_else(|| Error::State(format!("gradient for parameterless layer {i}")))?;
            if p.weight.shape() != g.weight.shape() || p.bias.shape() != g.bias.shape() {
                return Err(Error::Shape(format!("gradient shape mismatch in layer {i}")));
            }
        }
        if self.moments.len() < net.layers.len() {
            self.moments.resize(net.layers.len(), None);
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, g) in grads.per_layer.iter().enumerate() {
            let Some(g) = g else { continue };
            let Some(p) = net.layers[i].params_mut() else { continue };
            if p.frozen {
                continue;
            }
            let m = self.moments[i].get_or_insert_with(|| Moments {
                m_w: vec![0.0; g.weight.len()],
                v_w: vec![0.0; g.weight.len()],
                m_b: vec![0.0; g.bias.len()],
                v_b: vec![0.0; g.bias.len()],
            });
            let update = |theta: &mut Tensor, grad: &Tensor, mm: &mut [f64], vv: &mut [f64]| {
                for (((th, &gr), m), v) in theta.data_mut().iter_mut().zip(grad.data()).zip(mm).zip(vv) {
                    *m = beta1 * *m + (1.0 - beta1) * gr;
                    *v = beta2 * *v + (1.0 - beta2) * gr * gr;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *th -= lr * mhat / (vhat.sqrt() + epsilon);
                }
            };
            update(&mut p.weight, &g.weight, &mut m.m_w, &mut m.v_w);
            update(&mut p.bias, &g.bias, &mut m.m_b, &mut m.v_b);
        }
        Ok(())
    }
}
