//! Small tanh multilayer perceptron.
//!
//! Two evaluation paths share one parameter layout:
//! [`Mlp::forward_tape`] records every scalar operation on a [`Tape`], and
//! [`Mlp::forward_cached`] / [`Mlp::backward_cached`] run dense loops for the
//! trainer's inner loop. Tests pin the two paths to each other.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    inputs: usize,
    outputs: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid_argument("layer sizes must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::invalid_argument(format!(
                "layer {inputs}->{outputs} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(
            inputs,
            outputs,
            vec![T::zero(); inputs * outputs],
            vec![T::zero(); outputs],
        )
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            out.push(acc);
        }
    }
}

/// Activations saved by [`Mlp::forward_cached`]: `activations[0]` is the
/// input, `activations[k]` the output of layer `k - 1`.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("cache holds the input at least")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid_argument("mlp needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid_argument(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// All-zero network with the given layer sizes (`[input, hidden.., output]`).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid_argument("need at least input and output sizes"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    /// Gaussian init with standard deviation `1/sqrt(fan_in)`; the output layer
    /// is further scaled by `output_gain`. Biases start at zero.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], output_gain: T, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let last = net.layers.len() - 1;
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let mut std = T::one() / T::from_usize_lossy(layer.inputs).sqrt();
            if k == last {
                std *= output_gain;
            }
            for w in &mut layer.weights {
                let z: f64 = rng.sample(StandardNormal);
                *w = T::lit(z) * std;
            }
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Flat parameters: per layer, weights (row-major) then biases.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid_argument(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Applies `f(param, index)` to every flat parameter in place.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut T)) {
        let mut at = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                f(at, w);
                at += 1;
            }
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "input has length {len}, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_cached(input)?.activations.pop().unwrap_or_default())
    }

    pub fn forward_cached(&self, input: &[T]) -> Result<MlpCache<T>> {
        self.check_input(input.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.affine(&activations[k], &mut out);
            if k != last {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            activations.push(out);
        }
        Ok(MlpCache { activations })
    }

    /// Accumulates `∂(grad_output · output)/∂params` into `grad_params`.
    pub fn backward_cached(&self, cache: &MlpCache<T>, grad_output: &[T], grad_params: &mut [T]) -> Result<()> {
        if grad_output.len() != self.output_dim() || grad_params.len() != self.n_params() {
            return Err(Error::invalid_argument("gradient buffer shapes do not match network"));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            offsets.push(at);
            at += layer.n_params();
        }
        let last = self.layers.len() - 1;
        let mut delta = grad_output.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &cache.activations[k];
            if k != last {
                // delta is w.r.t. the tanh output; move it to the pre-activation.
                for (d, &y) in delta.iter_mut().zip(&cache.activations[k + 1]) {
                    *d *= T::one() - y * y;
                }
            }
            let base = offsets[k];
            let (gw, gb) = grad_params[base..base + layer.n_params()].split_at_mut(layer.weights.len());
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if k > 0 {
                let mut next = vec![T::zero(); layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
        Ok(())
    }

    /// Puts every parameter on `tape` as a leaf, in flat order.
    pub fn leaves<'t>(&self, tape: &'t Tape<T>) -> Vec<Var<'t, T>> {
        tape.vars(&self.params())
    }

    /// Tape-tracked forward pass using `params` from [`Mlp::leaves`] (or any
    /// variables in the same flat layout).
    pub fn forward_tape<'t>(&self, params: &[Var<'t, T>], input: &[T]) -> Result<Vec<Var<'t, T>>> {
        self.check_input(input.len())?;
        if params.len() != self.n_params() {
            return Err(Error::invalid_argument(format!(
                "expected {} parameter variables, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let tape = params
            .first()
            .map(|p| p.tape())
            .ok_or_else(|| Error::invalid_argument("network has no parameters"))?;
        let mut current: Vec<Var<'t, T>> = input.iter().map(|&x| tape.constant(x)).collect();
        let last = self.layers.len() - 1;
        let mut at = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let weights = &params[at..at + layer.weights.len()];
            let bias = &params[at + layer.weights.len()..at + layer.n_params()];
            at += layer.n_params();
            let mut next = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let row = &weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut acc = bias[o];
                for (&w, &x) in row.iter().zip(&current) {
                    acc = acc + w * x;
                }
                next.push(if k == last { acc } else { acc.tanh() });
            }
            current = next;
        }
        Ok(current)
    }
}
