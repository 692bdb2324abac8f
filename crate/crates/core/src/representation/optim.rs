use serde::{Deserialize, Serialize};

/// Step size after `epoch` completed epochs: halved every `period` epochs.
pub fn lr_schedule(epoch: usize, initial: f64, period: usize) -> f64 {
    if period == 0 {
        return initial;
    }
    initial * 0.5f64.powi((epoch / period) as i32)
}

/// SGD with momentum and decoupled-mask weight decay, in the
/// `buf = m·buf + (g + wd·θ)`, `θ -= lr·buf` form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    buffer: Vec<f64>,
}

impl Momentum {
    pub fn zeros(len: usize) -> Self {
        Self { buffer: vec![0.0; len] }
    }

    pub fn buffer(&self) -> &[f64] {
        &self.buffer
    }

    /// Applies one update. `decay_mask[k]` selects which entries receive weight decay.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        decay_mask: Option<&[bool]>,
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.buffer.len());
        for (k, ((p, g), b)) in params.iter_mut().zip(grads).zip(&mut self.buffer).enumerate() {
            let decay = match decay_mask {
                Some(mask) if mask[k] => weight_decay * *p,
                _ => 0.0,
            };
            *b = momentum * *b + g + decay;
            *p -= lr * *b;
        }
    }
}
