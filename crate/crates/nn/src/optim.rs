use serde::{Deserialize, Serialize};

use crate::{Mlp, NnError, Result};

/// Adam over a flat parameter vector. Components with several networks
/// concatenate their flattened parameters in a fixed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    timestep: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            timestep: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// One bias-corrected update. With zero gradients the parameters are
    /// left exactly unchanged.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NnError::DimMismatch {
                context: "adam_step",
                expected: self.first_moment.len(),
                actual: params.len().min(grads.len()),
            });
        }
        self.timestep += 1;
        let t = self.timestep as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = &mut self.first_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.second_moment[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SyncMode {
    /// Copy online parameters into the target every `period` steps.
    HardEvery { period: u64 },
    /// `target <- tau * online + (1 - tau) * target` after every step.
    Polyak { tau: f64 },
}

/// Exact copy of the online network into the target.
pub fn hard_sync(online: &Mlp, target: &mut Mlp) -> Result<()> {
    if !online.same_arch(target) {
        return Err(NnError::ArchMismatch("hard_sync across different architectures".into()));
    }
    target.set_params_flat(&online.params_flat())
}

pub fn polyak_sync(online: &Mlp, target: &mut Mlp, tau: f64) -> Result<()> {
    if !online.same_arch(target) {
        return Err(NnError::ArchMismatch("polyak_sync across different architectures".into()));
    }
    let o = online.params_flat();
    let mut t = target.params_flat();
    for (tv, ov) in t.iter_mut().zip(&o) {
        *tv = tau * ov + (1.0 - tau) * *tv;
    }
    target.set_params_flat(&t)
}
