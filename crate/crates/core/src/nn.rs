//! Small fully connected networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Affine layer `y = x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// ReLU hidden layers followed by a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

/// Activations saved by [`Mlp::forward_cached`]: the input of every layer.
pub struct ForwardCache<T> {
    inputs: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    /// He-normal weights, zero biases. With `zero_head` the output layer
    /// starts at exactly zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], zero_head: bool, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidDimension(format!("bad layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight = if zero_head && i == last {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(normal.sample(rng)))
                };
                Dense { weight, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidDimension("network without layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch { expected: l.outputs(), actual: l.bias.len() });
            }
            if i > 0 && l.inputs() != layers[i - 1].outputs() {
                return Err(Error::DimensionMismatch { expected: layers[i - 1].outputs(), actual: l.inputs() });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// `[inputs, hidden…, outputs]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(Dense::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.ncols() });
        }
        Ok(())
    }

    /// Batch forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weight) + &l.bias;
            if i + 1 < self.layers.len() {
                h.mapv_inplace(relu);
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let next = h.dot(&l.weight) + &l.bias;
            inputs.push(h);
            h = next;
            if i + 1 < self.layers.len() {
                h.mapv_inplace(relu);
            }
        }
        Ok((h, ForwardCache { inputs }))
    }

    /// Gradient of `Σ dout ⊙ output` with respect to every parameter, in
    /// the same flat order as [`Mlp::to_flat`].
    pub fn backward(&self, cache: &ForwardCache<T>, dout: ArrayView2<'_, T>) -> Vec<T> {
        let mut grads: Vec<(Array2<T>, Array1<T>)> = Vec::with_capacity(self.layers.len());
        let mut delta = dout.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            grads.push((input.t().dot(&delta), delta.sum_axis(Axis(0))));
            if i > 0 {
                let mut back = delta.dot(&l.weight.t());
                // The input of layer i is relu(z), so relu'(z) = [input > 0].
                back.zip_mut_with(input, |d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (w, b) in grads {
            flat.extend(w.iter().copied());
            flat.extend(b.iter().copied());
        }
        flat
    }

    /// Weights (row-major) then biases, layer by layer.
    pub fn to_flat(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            flat.extend(l.weight.iter().copied());
            flat.extend(l.bias.iter().copied());
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), actual: flat.len() });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = flat[k];
                k += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self { config, m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    /// One bias-corrected step. A zero gradient leaves parameters untouched
    /// only while the moments are still zero.
    pub fn update(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), actual: grad.len().min(params.len()) });
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::lit(c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.eps));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Convenience wrapper: flatten, step, write back.
pub fn adam_update<T: Real>(net: &mut Mlp<T>, opt: &mut Adam<T>, grad: &[T]) -> Result<()> {
    let mut flat = net.to_flat();
    opt.update(&mut flat, grad)?;
    net.set_flat(&flat)
}
