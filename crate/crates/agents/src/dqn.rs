//! Dueling double DQN training loop over the prioritized buffer.

use serde::{Deserialize, Serialize};
use tsc_nn::{kl_divergence, redistribute_to_unflagged, softmax, Adam, SeededRng, KL_FLOOR};

use crate::dueling::{DuelingGrads, DuelingQNetwork};
use crate::replay::{PrioritizedReplayBuffer, Transition};
use crate::{AgentError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync_period: u64,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub per_beta_steps: u64,
    pub per_epsilon: f64,
    /// Learning starts once the buffer holds this many transitions.
    pub warmup: usize,
    pub hidden: Vec<usize>,
    /// Safety-embedding width; 0 disables the embedding input.
    pub embed_dim: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
            lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 20_000,
            target_sync_period: 500,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            per_beta_steps: 20_000,
            per_epsilon: 1e-3,
            warmup: 64,
            hidden: vec![128, 128],
            embed_dim: 0,
        }
    }
}

/// The divergence term of the safety-integrated loss: weight and the cached
/// per-transition flags drive the desired distribution.
#[derive(Clone, Copy, Debug)]
pub struct SafetyPenalty {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for SafetyPenalty {
    fn default() -> Self {
        SafetyPenalty {
            lambda1: 1.0,
            lambda2: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainStats {
    pub loss: f64,
    pub mse_term: f64,
    pub kl_term: f64,
    /// True when every sampled action was safe under its cached flags.
    pub batch_all_safe: bool,
    pub synced_target: bool,
}

/// `Q_target = r + gamma * Q(s', argmax_a' Q(s', a'; online); target)`,
/// with terminal transitions bootstrapping nothing.
pub fn double_q_target(
    transition: &Transition,
    online: &DuelingQNetwork,
    target: &DuelingQNetwork,
    gamma: f64,
) -> Result<f64> {
    if transition.terminal {
        return Ok(transition.reward);
    }
    let next: Vec<f64> = transition.next_state.iter().map(|&v| f64::from(v)).collect();
    let next_flags: Option<Vec<f64>> = transition
        .next_safety_flags
        .as_ref()
        .map(|f| f.iter().map(|&v| f64::from(v)).collect());
    let online_q = online.q_values(&next, next_flags.as_deref())?;
    let best = argmax_lowest(&online_q);
    let target_q = target.q_values(&next, next_flags.as_deref())?;
    Ok(transition.reward + gamma * target_q[best])
}

/// Ties break toward the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DqnCheckpoint {
    pub online: DuelingQNetwork,
    pub target: DuelingQNetwork,
    pub adam: Adam,
    pub config: DqnConfig,
    pub env_steps: u64,
    pub train_steps: u64,
    pub rng: tsc_nn::RngState,
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub online: DuelingQNetwork,
    pub target: DuelingQNetwork,
    pub buffer: PrioritizedReplayBuffer,
    pub adam: Adam,
    pub config: DqnConfig,
    rng: SeededRng,
    env_steps: u64,
    train_steps: u64,
}

impl DqnAgent {
    pub fn new(state_dim: usize, action_count: usize, config: DqnConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let online = DuelingQNetwork::new(state_dim, &config.hidden, action_count, config.embed_dim, &mut rng)?;
        let mut target = online.clone();
        target.copy_from(&online)?;
        let adam = Adam::new(online.param_count(), config.lr);
        let buffer = PrioritizedReplayBuffer::new(config.buffer_capacity, config.per_alpha, config.per_epsilon);
        Ok(DqnAgent {
            online,
            target,
            buffer,
            adam,
            config,
            rng,
            env_steps: 0,
            train_steps: 0,
        })
    }

    pub fn action_count(&self) -> usize {
        self.online.action_count
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn epsilon(&self) -> f64 {
        let c = &self.config;
        if c.epsilon_decay_steps == 0 {
            return c.epsilon_end;
        }
        let frac = (self.env_steps as f64 / c.epsilon_decay_steps as f64).min(1.0);
        c.epsilon_start + (c.epsilon_end - c.epsilon_start) * frac
    }

    pub fn beta(&self) -> f64 {
        let c = &self.config;
        if c.per_beta_steps == 0 {
            return c.per_beta_end;
        }
        let frac = (self.train_steps as f64 / c.per_beta_steps as f64).min(1.0);
        c.per_beta_start + (c.per_beta_end - c.per_beta_start) * frac
    }

    /// Epsilon-greedy action selection; greedy mode never draws from the
    /// RNG and never advances the exploration schedule.
    pub fn select_action(&mut self, state: &[f64], flags: Option<&[f64]>, greedy: bool) -> Result<usize> {
        let q = self.online.q_values(state, flags)?;
        if greedy {
            return Ok(argmax_lowest(&q));
        }
        let eps = self.epsilon();
        self.env_steps += 1;
        let coin = self.rng.next_f64();
        if coin < eps {
            Ok(self.rng.gen_range_usize(q.len()))
        } else {
            Ok(argmax_lowest(&q))
        }
    }

    pub fn observe(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One gradient step over a prioritized batch.
    ///
    /// The loss is `lambda1 * weighted MSE + lambda2 * mean KL(desired ||
    /// softmax(A))`, where the divergence term of a sample vanishes exactly
    /// when its cached action was safe; with `lambda2 = 0` the extra term
    /// contributes no arithmetic at all, so such runs are bitwise identical
    /// to the plain backbone.
    pub fn train_step(&mut self, penalty: SafetyPenalty) -> Result<Option<TrainStats>> {
        if self.buffer.len() < self.config.batch_size.max(self.config.warmup) {
            return Ok(None);
        }
        let beta = self.beta();
        let batch = self.buffer.sample(self.config.batch_size, beta, &mut self.rng);
        let b = batch.indices.len();
        let mut grads = DuelingGrads::zeros_like(&self.online);
        let mut td_errors = Vec::with_capacity(b);
        let mut mse_term = 0.0;
        let mut kl_term = 0.0;
        let mut batch_all_safe = true;

        for (k, &idx) in batch.indices.iter().enumerate() {
            let transition = self.buffer.get(idx).clone();
            let state: Vec<f64> = transition.state.iter().map(|&v| f64::from(v)).collect();
            let flags_f64: Option<Vec<f64>> = transition
                .safety_flags
                .as_ref()
                .map(|f| f.iter().map(|&v| f64::from(v)).collect());
            let trace = self.online.forward_trace(&state, flags_f64.as_deref())?;
            let target = double_q_target(&transition, &self.online, &self.target, self.config.gamma)?;
            let delta = target - trace.q[transition.action];
            td_errors.push(delta);
            let w = batch.weights[k];
            mse_term += w * delta * delta;

            // dL/dQ(s, a): only the taken action carries the MSE seed.
            let mut d_q = vec![0.0; trace.q.len()];
            d_q[transition.action] = penalty.lambda1 * (-2.0) * w * delta / b as f64;

            // Divergence seed on the advantage logits. Skipped entirely for
            // safe samples and when lambda2 is zero.
            let mut d_a_extra: Option<Vec<f64>> = None;
            if penalty.lambda2 != 0.0 {
                if let Some(flags) = &flags_f64 {
                    let unsafe_flags: Vec<bool> = flags.iter().map(|&f| f > 0.5).collect();
                    if unsafe_flags[transition.action] {
                        batch_all_safe = false;
                        if unsafe_flags.iter().any(|&f| !f) {
                            let q_dist = softmax(&trace.a)?;
                            let desired = redistribute_to_unflagged(&q_dist, &unsafe_flags, KL_FLOOR);
                            let q_floored = tsc_nn::floor_distribution(&q_dist, KL_FLOOR);
                            let (kl, _) = kl_divergence(&desired, &q_floored)?;
                            kl_term += kl;
                            d_a_extra = Some(
                                q_dist
                                    .iter()
                                    .zip(&desired)
                                    .map(|(qi, di)| penalty.lambda2 * (qi - di) / b as f64)
                                    .collect(),
                            );
                        }
                    }
                }
            }
            let sample_grads = self.online.backward(&trace, &d_q, d_a_extra.as_deref())?;
            grads.add(&sample_grads);
        }

        let mut params = self.online.params_flat();
        self.adam.step(&mut params, &grads.flat())?;
        self.online.set_params_flat(&params)?;
        self.buffer.update_priorities(&batch.indices, &td_errors);
        self.train_steps += 1;

        let synced = self.train_steps % self.config.target_sync_period == 0;
        if synced {
            self.target.copy_from(&self.online)?;
        }
        mse_term /= b as f64;
        kl_term /= b as f64;
        Ok(Some(TrainStats {
            loss: penalty.lambda1 * mse_term + penalty.lambda2 * kl_term,
            mse_term,
            kl_term,
            batch_all_safe,
            synced_target: synced,
        }))
    }

    pub fn checkpoint(&self) -> DqnCheckpoint {
        DqnCheckpoint {
            online: self.online.clone(),
            target: self.target.clone(),
            adam: self.adam.clone(),
            config: self.config.clone(),
            env_steps: self.env_steps,
            train_steps: self.train_steps,
            rng: self.rng.state(),
        }
    }

    pub fn restore(ck: DqnCheckpoint) -> Result<Self> {
        let buffer = PrioritizedReplayBuffer::new(ck.config.buffer_capacity, ck.config.per_alpha, ck.config.per_epsilon);
        if !ck.online.same_arch(&ck.target) {
            return Err(AgentError::Config("checkpoint online/target architectures differ".into()));
        }
        Ok(DqnAgent {
            online: ck.online,
            target: ck.target,
            adam: ck.adam,
            buffer,
            config: ck.config,
            rng: SeededRng::restore(&ck.rng),
            env_steps: ck.env_steps,
            train_steps: ck.train_steps,
        })
    }
}
