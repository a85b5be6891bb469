//! AdamW with decoupled weight decay and bias correction.

use crate::model::Model;

use super::{TrainConfig, TrainError};

/// Optimizer state: first and second moment estimates per parameter, in
/// model parameter order, plus the step counter driving bias correction.
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    grad_clip: Option<f64>,
}

impl AdamW {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Self {
        let sizes: Vec<usize> = model.parameters().iter().map(|(_, t)| t.numel()).collect();
        AdamW {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            grad_clip: cfg.grad_clip,
        }
    }

    /// One update over every model parameter. `grads` follows model
    /// parameter order; `None` means the parameter received no gradient
    /// this step and is treated as zero. Weight decay is decoupled from
    /// the adaptive term, so a zero gradient still shrinks the parameter
    /// by `lr * weight_decay`.
    pub fn step(
        &mut self,
        model: &mut Model,
        grads: &[Option<&[f64]>],
        lr: f64,
    ) -> Result<(), TrainError> {
        assert_eq!(grads.len(), self.m.len(), "gradient list shape drift");
        for ((name, _), g) in model.parameters().iter().zip(grads) {
            if let Some(g) = g {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(TrainError::BadGradient { name: name.clone() });
                }
            }
        }
        let clip_scale = match self.grad_clip {
            Some(c) => {
                let sq: f64 = grads
                    .iter()
                    .flatten()
                    .flat_map(|g| g.iter())
                    .map(|x| x * x)
                    .sum();
                let norm = sq.sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (_, tensor)) in model.parameters_mut().iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let data = tensor.data_mut();
            for j in 0..data.len() {
                let g = grads[i].map_or(0.0, |g| g[j]) * clip_scale;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * data[j]);
            }
        }
        Ok(())
    }
}
