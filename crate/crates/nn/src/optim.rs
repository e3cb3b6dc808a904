use crate::{NnError, ParamStore};

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update from the gradients accumulated in `store`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64, weight_decay: f64) -> Result<(), NnError> {
        assert_eq!(self.m.len(), store.len(), "optimizer state does not match the parameter store");
        if let Some((_, p)) = store.iter().find(|(_, p)| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(NnError::NonFiniteGradient(p.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let decay = (lr * weight_decay) as f32;
        let step_size = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = self.eps as f32;
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..m.len() {
                let g = p.grad[i];
                let w = &mut p.value.data[i];
                *w -= decay * *w;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                *w -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup to `base`, then a step decay by `factor` at each listed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: u64,
    pub decay_epochs: Vec<u32>,
    pub factor: f64,
    pub iters_per_epoch: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-4,
            warmup: 10_000,
            decay_epochs: vec![30, 35],
            factor: 0.1,
            iters_per_epoch: 1,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, iteration: u64, epoch: u32) -> f64 {
        let warm = if iteration < self.warmup {
            iteration as f64 / self.warmup as f64
        } else {
            1.0
        };
        let passed = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.base * warm * self.factor.powi(passed as i32)
    }

    pub fn epoch_of(&self, iteration: u64) -> u32 {
        (iteration / self.iters_per_epoch.max(1)) as u32
    }
}
