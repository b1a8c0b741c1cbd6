use serde::{Deserialize, Serialize};

use crate::softgrad::Gradients;
use crate::tree::{LeafMode, ObliqueTree};

/// Update rule applied to every trainable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `theta <- theta - eta * grad`
    GradientDescent,
    /// First/second-moment adaptive steps.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub(crate) struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, tree: &ObliqueTree) -> Self {
        let len = match kind {
            OptimizerKind::GradientDescent => 0,
            OptimizerKind::Adam { .. } => {
                tree.weights.len() + tree.thresholds.len() + tree.coefs.len() + tree.intercepts.len()
            }
        };
        Optimizer {
            kind,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Applies one update with learning rate `eta`. `scale` multiplies every
    /// gradient component first.
    pub fn apply(&mut self, tree: &mut ObliqueTree, grads: &Gradients, eta: f64, scale: f64) {
        let linear = tree.leaf_mode == LeafMode::Linear;
        let groups: [(&mut [f64], &[f64], bool); 4] = [
            (tree.weights.as_slice_mut().unwrap(), &grads.weights, true),
            (tree.thresholds.as_slice_mut().unwrap(), &grads.thresholds, true),
            (tree.coefs.as_slice_mut().unwrap(), &grads.coefs, linear),
            (tree.intercepts.as_slice_mut().unwrap(), &grads.intercepts, true),
        ];
        self.step += 1;
        let mut offset = 0;
        for (params, g, trainable) in groups {
            let len = params.len();
            if trainable {
                match self.kind {
                    OptimizerKind::GradientDescent => {
                        for (p, g) in params.iter_mut().zip(g) {
                            *p -= eta * scale * g;
                        }
                    }
                    OptimizerKind::Adam { beta1, beta2, eps } => {
                        let bc1 = 1.0 - beta1.powi(self.step);
                        let bc2 = 1.0 - beta2.powi(self.step);
                        let m = &mut self.m[offset..offset + len];
                        let v = &mut self.v[offset..offset + len];
                        for i in 0..len {
                            let gi = scale * g[i];
                            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                            let mh = m[i] / bc1;
                            let vh = v[i] / bc2;
                            params[i] -= eta * mh / (vh.sqrt() + eps);
                        }
                    }
                }
            }
            offset += len;
        }
    }
}
