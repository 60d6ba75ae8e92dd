//! Adaptive-moment optimizer with decoupled weight decay.

use crate::encoders::{ParamSet, LOGIT_SCALE_MAX};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW over a [`ParamSet`]. Moment buffers align with registry order;
/// frozen parameters (no gradient) are skipped entirely, so their values
/// stay bit-identical to initialization. Decay applies only to matrices
/// (both dims > 1); vectors, gains and the temperature scalar are exempt.
pub struct AdamW {
    hp: OptimizerParams,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(hp: OptimizerParams, params: &ParamSet) -> Self {
        let m = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        AdamW { hp, step: 0, m, v }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Vec<f64>>]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.hp.beta1.powi(t);
        let bc2 = 1.0 - self.hp.beta2.powi(t);
        for (pi, param) in params.iter_mut().enumerate() {
            let grad = match &grads[pi] {
                Some(g) => g,
                None => continue,
            };
            // decay matrices only; gains, biases, the temperature and the
            // attention-mixing gate stay unregularized (decaying a_raw would
            // pull the mixing fraction toward 1/2 rather than toward zero)
            let decay = param.tensor.dims().iter().all(|&d| d > 1) && !param.name.ends_with(".a_raw");
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            let data = param.tensor.data_mut();
            for i in 0..data.len() {
                m[i] = self.hp.beta1 * m[i] + (1.0 - self.hp.beta1) * grad[i];
                v[i] = self.hp.beta2 * v[i] + (1.0 - self.hp.beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                let mut upd = self.hp.lr * mhat / (vhat.sqrt() + self.hp.eps);
                if decay {
                    upd += self.hp.lr * self.hp.weight_decay * data[i];
                }
                data[i] -= upd;
            }
            if param.name == "logit_scale" && data[0] > LOGIT_SCALE_MAX {
                data[0] = LOGIT_SCALE_MAX;
            }
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}
