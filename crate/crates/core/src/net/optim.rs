use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::network::{Gradients, Network};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone)]
struct AdamState {
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Optimizer bound to one network's parameter layout.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    adam: Option<AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &Network) -> Self {
        let adam = (kind == OptimizerKind::Adam).then(|| {
            let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
            AdamState {
                step: 0,
                m: zeros.clone(),
                v: zeros,
            }
        });
        Self { kind, adam }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Apply one update with learning rate `lr`. Non-finite gradients leave
    /// the network untouched and return an error naming the first bad entry.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.dense.len() != net.params().len() {
            return Err(Error::dim(format!(
                "{} gradient blocks for {} parameter blocks",
                grads.dense.len(),
                net.params().len()
            )));
        }
        for (b, (g, p)) in grads.dense.iter().zip(net.params()).enumerate() {
            if g.weights.len() != p.weights.len() || g.bias.len() != p.bias.len() {
                return Err(Error::dim(format!("gradient block {b} shape mismatch")));
            }
            if let Some(i) = g.weights.iter().chain(&g.bias).position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of dense block {b}, entry {i} is {}",
                    g.weights.iter().chain(&g.bias).nth(i).unwrap()
                )));
            }
        }

        match (&self.kind, &mut self.adam) {
            (OptimizerKind::Sgd, _) => {
                for (p, g) in net.params_mut().iter_mut().zip(&grads.dense) {
                    let params = p.weights.iter_mut().chain(p.bias.iter_mut());
                    for (w, &gw) in params.zip(g.weights.iter().chain(&g.bias)) {
                        *w = (*w as f64 - lr * gw as f64) as f32;
                    }
                }
            }
            (OptimizerKind::Adam, Some(state)) => {
                state.step += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(state.step);
                let bc2 = 1.0 - ADAM_BETA2.powi(state.step);
                for (b, (p, g)) in net.params_mut().iter_mut().zip(&grads.dense).enumerate() {
                    let m = &mut state.m[b];
                    let v = &mut state.v[b];
                    let params = p.weights.iter_mut().chain(p.bias.iter_mut());
                    for (k, (w, &gw)) in params.zip(g.weights.iter().chain(&g.bias)).enumerate() {
                        let gw = gw as f64;
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gw;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gw * gw;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *w = (*w as f64 - lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON)) as f32;
                    }
                }
            }
            (OptimizerKind::Adam, None) => unreachable!("adam state is built in new"),
        }
        Ok(())
    }
}
