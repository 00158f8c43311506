//! Dueling Q-network: shared trunk, scalar value head, per-action advantage
//! head, combined as `Q(s,a) = V(s) + A(s,a) - mean(A)`. Optionally an
//! extra learned ReLU layer embeds the per-action unsafe flags and the
//! embedding is concatenated to the trunk input.

use serde::{Deserialize, Serialize};
use tsc_nn::{softmax, Activation, ForwardTrace, Matrix, Mlp, MlpGrads, NnError, SeededRng};

use crate::{AgentError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuelingQNetwork {
    pub trunk: Mlp,
    pub value_head: Mlp,
    pub advantage_head: Mlp,
    /// Safety-flag embedding; its output feeds the trunk alongside the
    /// state encoding.
    pub embed: Option<Mlp>,
    pub state_dim: usize,
    pub action_count: usize,
    pub embed_dim: usize,
}

#[derive(Clone, Debug)]
pub struct DuelTrace {
    embed: Option<ForwardTrace>,
    trunk: ForwardTrace,
    value: ForwardTrace,
    advantage: ForwardTrace,
    pub q: Vec<f64>,
    pub v: f64,
    pub a: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DuelingGrads {
    pub trunk: MlpGrads,
    pub value: MlpGrads,
    pub advantage: MlpGrads,
    pub embed: Option<MlpGrads>,
}

impl DuelingGrads {
    pub fn zeros_like(net: &DuelingQNetwork) -> Self {
        DuelingGrads {
            trunk: MlpGrads::zeros_like(&net.trunk),
            value: MlpGrads::zeros_like(&net.value_head),
            advantage: MlpGrads::zeros_like(&net.advantage_head),
            embed: net.embed.as_ref().map(MlpGrads::zeros_like),
        }
    }

    pub fn add(&mut self, other: &DuelingGrads) {
        self.trunk.add(&other.trunk);
        self.value.add(&other.value);
        self.advantage.add(&other.advantage);
        if let (Some(e), Some(o)) = (&mut self.embed, &other.embed) {
            e.add(o);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.trunk.scale(s);
        self.value.scale(s);
        self.advantage.scale(s);
        if let Some(e) = &mut self.embed {
            e.scale(s);
        }
    }

    /// Flat layout matches [`DuelingQNetwork::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.trunk.flat();
        out.extend(self.value.flat());
        out.extend(self.advantage.flat());
        if let Some(e) = &self.embed {
            out.extend(e.flat());
        }
        out
    }
}

impl DuelingQNetwork {
    /// `hidden` sets the trunk layer widths; the last entry is the feature
    /// width the heads read. `embed_dim = 0` disables the safety embedding.
    pub fn new(
        state_dim: usize,
        hidden: &[usize],
        action_count: usize,
        embed_dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if hidden.is_empty() {
            return Err(AgentError::Config("trunk needs at least one hidden layer".into()));
        }
        let mut trunk_dims = vec![state_dim + embed_dim];
        trunk_dims.extend_from_slice(hidden);
        let trunk_acts = vec![Activation::Relu; hidden.len()];
        let trunk = Mlp::new(&trunk_dims, &trunk_acts, rng)?;
        let feat = *hidden.last().unwrap();
        let value_head = Mlp::new(&[feat, 1], &[Activation::Identity], rng)?;
        let advantage_head = Mlp::new(&[feat, action_count], &[Activation::Identity], rng)?;
        let embed = if embed_dim > 0 {
            Some(Mlp::new(&[action_count, embed_dim], &[Activation::Relu], rng)?)
        } else {
            None
        };
        Ok(DuelingQNetwork {
            trunk,
            value_head,
            advantage_head,
            embed,
            state_dim,
            action_count,
            embed_dim,
        })
    }

    pub fn same_arch(&self, other: &DuelingQNetwork) -> bool {
        self.state_dim == other.state_dim
            && self.action_count == other.action_count
            && self.embed_dim == other.embed_dim
            && self.trunk.same_arch(&other.trunk)
            && self.value_head.same_arch(&other.value_head)
            && self.advantage_head.same_arch(&other.advantage_head)
    }

    fn trunk_input(&self, state: &[f64], flags: Option<&[f64]>) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
        if state.len() != self.state_dim {
            return Err(AgentError::Nn(NnError::DimMismatch {
                context: "dueling state",
                expected: self.state_dim,
                actual: state.len(),
            }));
        }
        match &self.embed {
            None => Ok((state.to_vec(), None)),
            Some(embed) => {
                let flags = flags.ok_or_else(|| {
                    AgentError::Config("embedding-enabled network needs safety flags".into())
                })?;
                let trace = embed.forward_trace(flags)?;
                let mut input = state.to_vec();
                input.extend_from_slice(trace.output());
                Ok((input, Some(trace)))
            }
        }
    }

    pub fn forward_trace(&self, state: &[f64], flags: Option<&[f64]>) -> Result<DuelTrace> {
        let (input, embed_trace) = self.trunk_input(state, flags)?;
        let trunk = self.trunk.forward_trace(&input)?;
        let value = self.value_head.forward_trace(trunk.output())?;
        let advantage = self.advantage_head.forward_trace(trunk.output())?;
        let v = value.output()[0];
        let a = advantage.output().to_vec();
        let mean_a: f64 = a.iter().sum::<f64>() / a.len() as f64;
        let q: Vec<f64> = a.iter().map(|ai| v + ai - mean_a).collect();
        Ok(DuelTrace {
            embed: embed_trace,
            trunk,
            value,
            advantage,
            q,
            v,
            a,
        })
    }

    pub fn q_values(&self, state: &[f64], flags: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(self.forward_trace(state, flags)?.q)
    }

    /// Softmax over the advantage stream; shares its argmax with Q because
    /// the value head shifts every action equally.
    pub fn advantage_distribution(&self, state: &[f64], flags: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward_trace(state, flags)?.a)?)
    }

    /// Backpropagates `d_q` (dL/dQ per action) plus an optional extra
    /// gradient injected directly on the advantage logits (the divergence
    /// term of the safety loss).
    pub fn backward(
        &self,
        trace: &DuelTrace,
        d_q: &[f64],
        d_a_extra: Option<&[f64]>,
    ) -> Result<DuelingGrads> {
        let n = self.action_count as f64;
        let sum_dq: f64 = d_q.iter().sum();
        let d_v = [sum_dq];
        let mut d_a: Vec<f64> = d_q.iter().map(|g| g - sum_dq / n).collect();
        if let Some(extra) = d_a_extra {
            for (da, e) in d_a.iter_mut().zip(extra) {
                *da += e;
            }
        }
        let (value_grads, d_feat_v) = self.value_head.backward(&trace.value, &d_v)?;
        let (advantage_grads, d_feat_a) = self.advantage_head.backward(&trace.advantage, &d_a)?;
        let d_feat: Vec<f64> = d_feat_v.iter().zip(&d_feat_a).map(|(a, b)| a + b).collect();
        let (trunk_grads, d_input) = self.trunk.backward(&trace.trunk, &d_feat)?;
        let embed_grads = match (&self.embed, &trace.embed) {
            (Some(embed), Some(etrace)) => {
                let (egrads, _) = embed.backward(etrace, &d_input[self.state_dim..])?;
                Some(egrads)
            }
            _ => None,
        };
        Ok(DuelingGrads {
            trunk: trunk_grads,
            value: value_grads,
            advantage: advantage_grads,
            embed: embed_grads,
        })
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self.value_head.param_count()
            + self.advantage_head.param_count()
            + self.embed.as_ref().map_or(0, Mlp::param_count)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = self.trunk.params_flat();
        out.extend(self.value_head.params_flat());
        out.extend(self.advantage_head.params_flat());
        if let Some(e) = &self.embed {
            out.extend(e.params_flat());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut i = 0;
        for part in [&mut self.trunk, &mut self.value_head, &mut self.advantage_head] {
            let n = part.param_count();
            part.set_params_flat(&flat[i..i + n])?;
            i += n;
        }
        if let Some(e) = &mut self.embed {
            let n = e.param_count();
            e.set_params_flat(&flat[i..i + n])?;
            i += n;
        }
        if i != flat.len() {
            return Err(AgentError::Nn(NnError::DimMismatch {
                context: "dueling set_params_flat",
                expected: i,
                actual: flat.len(),
            }));
        }
        Ok(())
    }

    pub fn copy_from(&mut self, other: &DuelingQNetwork) -> Result<()> {
        if !self.same_arch(other) {
            return Err(AgentError::Config("architecture mismatch in copy_from".into()));
        }
        self.set_params_flat(&other.params_flat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_q_equals_value_head() {
        let mut rng = SeededRng::new(2);
        for _ in 0..200 {
            let net = DuelingQNetwork::new(6, &[16, 8], 5, 0, &mut rng).unwrap();
            let state: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let trace = net.forward_trace(&state, None).unwrap();
            let mean_q: f64 = trace.q.iter().sum::<f64>() / trace.q.len() as f64;
            assert!((mean_q - trace.v).abs() < 1e-9);
            assert_eq!(trace.q.len(), 5);
        }
    }

    #[test]
    fn advantage_distribution_shares_argmax_with_q() {
        let mut rng = SeededRng::new(5);
        for _ in 0..1000 {
            let net = DuelingQNetwork::new(4, &[12], 6, 0, &mut rng).unwrap();
            let state: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let trace = net.forward_trace(&state, None).unwrap();
            let dist = softmax(&trace.a).unwrap();
            let argmax = |xs: &[f64]| {
                xs.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                        if v > bv {
                            (i, v)
                        } else {
                            (bi, bv)
                        }
                    })
                    .0
            };
            assert_eq!(argmax(&dist), argmax(&trace.q));
        }
    }

    #[test]
    fn all_zero_advantages_give_uniform_distribution() {
        let mut rng = SeededRng::new(6);
        let mut net = DuelingQNetwork::new(3, &[8], 3, 0, &mut rng).unwrap();
        // Zero the advantage head entirely.
        let zeroed = Mlp::zeros(&[8, 3], &[Activation::Identity]).unwrap();
        net.advantage_head = zeroed;
        let dist = net.advantage_distribution(&[0.1, -0.2, 0.3], None).unwrap();
        for p in dist {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn value_shift_does_not_change_advantage_distribution() {
        let mut rng = SeededRng::new(7);
        let mut net = DuelingQNetwork::new(3, &[8], 4, 0, &mut rng).unwrap();
        let state = [0.4, -0.1, 0.9];
        let before = net.advantage_distribution(&state, None).unwrap();
        // Shift the value head bias; advantages must be untouched.
        let mut flat = net.value_head.params_flat();
        *flat.last_mut().unwrap() += 17.0;
        net.value_head.set_params_flat(&flat).unwrap();
        let after = net.advantage_distribution(&state, None).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn embedding_changes_input_width_and_requires_flags() {
        let mut rng = SeededRng::new(8);
        let net = DuelingQNetwork::new(4, &[8], 3, 5, &mut rng).unwrap();
        assert!(net.q_values(&[0.0; 4], None).is_err());
        let q = net.q_values(&[0.0; 4], Some(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(q.len(), 3);
        // All-safe flags through a zeroed embedding give a zero embedding.
        let mut zeroed = net.clone();
        zeroed.embed = Some(Mlp::zeros(&[3, 5], &[Activation::Relu]).unwrap());
        let qa = zeroed.q_values(&[0.2; 4], Some(&[0.0, 0.0, 0.0])).unwrap();
        let qb = zeroed.q_values(&[0.2; 4], Some(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(qa, qb, "zero embedding layer ignores the flags");
    }

    #[test]
    fn zero_embed_dim_matches_plain_network_bitwise() {
        let mut rng_a = SeededRng::new(9);
        let mut rng_b = SeededRng::new(9);
        let plain = DuelingQNetwork::new(4, &[8], 3, 0, &mut rng_a).unwrap();
        let zero_embed = DuelingQNetwork::new(4, &[8], 3, 0, &mut rng_b).unwrap();
        assert_eq!(plain.params_flat(), zero_embed.params_flat());
        let state = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(
            plain.q_values(&state, None).unwrap(),
            zero_embed.q_values(&state, None).unwrap()
        );
    }
}
