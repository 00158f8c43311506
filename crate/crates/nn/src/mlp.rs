use serde::{Deserialize, Serialize};

use crate::{Matrix, NnError, Result, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `out = act(W x + b)` with `W` of shape (out, in).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Fixed-architecture multilayer perceptron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Intermediates cached by [`Mlp::forward_trace`]; required by `backward`.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input given to each layer (index i feeds layer i).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation vector of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Per-parameter gradients, shape-matched to an [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.weight.rows(), l.weight.cols()), vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            for v in w.data_mut() {
                *v *= s;
            }
            for v in b {
                *v *= s;
            }
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (v, o) in w.data_mut().iter_mut().zip(ow.data()) {
                *v += o;
            }
            for (v, o) in b.iter_mut().zip(ob) {
                *v += o;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.is_finite() && b.iter().all(|v| v.is_finite()))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

impl Mlp {
    /// Builds a network with uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// initialization drawn from the run's seeded RNG.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NnError::ArchMismatch(format!(
                "need dims.len()-1 activations, got dims={:?} activations={}",
                dims,
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform(-bound, bound));
            let bias = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            layers.push(Layer {
                weight,
                bias,
                activation: *act,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NnError::ArchMismatch(format!(
                "need dims.len()-1 activations, got dims={:?} activations={}",
                dims,
                activations.len()
            )));
        }
        let layers = activations
            .iter()
            .enumerate()
            .map(|(i, act)| Layer {
                weight: Matrix::zeros(dims[i + 1], dims[i]),
                bias: vec![0.0; dims[i + 1]],
                activation: *act,
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].weight.rows() != pair[1].weight.cols() {
                return Err(NnError::ArchMismatch(format!(
                    "layer output dim {} does not feed next layer input dim {}",
                    pair[0].weight.rows(),
                    pair[1].weight.cols()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.cols())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows())
    }

    pub fn same_arch(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.same_shape(&b.weight) && a.activation == b.activation)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.output)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimMismatch {
                context: "forward",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("forward input"));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut pre = layer.weight.matvec(&x)?;
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            let out = pre.iter().map(|&p| layer.activation.apply(p)).collect();
            inputs.push(x);
            pres.push(pre);
            x = out;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("forward output"));
        }
        Ok(ForwardTrace {
            inputs,
            pre: pres,
            output: x,
        })
    }

    /// Backpropagates `upstream` (dL/d output) through the cached forward
    /// pass. Returns parameter gradients and dL/d input.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if trace.inputs.len() != self.layers.len() {
            return Err(NnError::ArchMismatch(
                "forward trace does not match this network".into(),
            ));
        }
        if upstream.len() != self.output_dim() {
            return Err(NnError::DimMismatch {
                context: "backward upstream",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = upstream.to_vec();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let pre = &trace.pre[idx];
            let input = &trace.inputs[idx];
            let mut dpre = vec![0.0; pre.len()];
            for i in 0..pre.len() {
                dpre[i] = g[i] * layer.activation.derivative(pre[i]);
            }
            let (gw, gb) = &mut grads.layers[idx];
            gw.add_outer(&dpre, input)?;
            for (b, d) in gb.iter_mut().zip(&dpre) {
                *b += d;
            }
            g = layer.weight.t_matvec(&dpre)?;
        }
        Ok((grads, g))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(NnError::DimMismatch {
                context: "set_params_flat",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut i = 0;
        for l in &mut self.layers {
            let wlen = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[i..i + wlen]);
            i += wlen;
            let blen = l.bias.len();
            l.bias.copy_from_slice(&flat[i..i + blen]);
            i += blen;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_maps_to_zero() {
        let net = Mlp::zeros(&[2, 2], &[Activation::Relu]).unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::zeros(&[2, 2], &[Activation::Identity]).unwrap();
        net.layers[0].weight.set(0, 0, 1.0);
        net.layers[0].weight.set(1, 1, 1.0);
        assert_eq!(net.forward(&[3.0, -2.0]).unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = Mlp::zeros(&[3, 2], &[Activation::Identity]).unwrap();
        let err = net.forward(&[1.0]).unwrap_err();
        assert!(matches!(err, NnError::DimMismatch { expected: 3, actual: 1, .. }));
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let net = Mlp::zeros(&[2, 2], &[Activation::Identity]).unwrap();
        assert!(matches!(
            net.forward(&[f64::NAN, 0.0]),
            Err(NnError::NonFinite(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(1);
        let net = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let trace = net.forward_trace(&[0.3, -0.1, 0.7]).unwrap();
        let (grads, ginput) = net.backward(&trace, &[0.0, 0.0]).unwrap();
        assert!(grads.flat().iter().all(|&g| g == 0.0));
        assert!(ginput.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_linear_gradient_is_input() {
        // y = w * x with x = 2, upstream 1 -> dL/dw = 2.
        let mut net = Mlp::zeros(&[1, 1], &[Activation::Identity]).unwrap();
        net.layers[0].weight.set(0, 0, 0.5);
        let trace = net.forward_trace(&[2.0]).unwrap();
        let (grads, _) = net.backward(&trace, &[1.0]).unwrap();
        assert_eq!(grads.layers[0].0.get(0, 0), 2.0);
        assert_eq!(grads.layers[0].1[0], 1.0);
    }

    #[test]
    fn params_flat_roundtrip() {
        let mut rng = SeededRng::new(3);
        let mut net =
            Mlp::new(&[4, 5, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let flat = net.params_flat();
        let mut restored = Mlp::zeros(&[4, 5, 2], &[Activation::Relu, Activation::Identity]).unwrap();
        restored.set_params_flat(&flat).unwrap();
        net.set_params_flat(&flat).unwrap();
        assert_eq!(net, restored);
    }
}
