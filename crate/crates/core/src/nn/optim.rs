use super::model::{Gradients, Model};
use super::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(model: &Model, learning_rate: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Matrix> = model.tensors().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        Adam {
            learning_rate,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.learning_rate;
        let decay = 1.0 - lr * self.weight_decay;
        for (((p, g), m), v) in model
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let p = p.as_mut_slice();
            let g = g.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
                p[i] = p[i] * decay - update;
            }
        }
    }
}
