//! Feed-forward encoder: flattened pixels -> backbone -> projection head.
//!
//! The backbone (ReLU after every layer) produces the representation used by
//! the probes and kNN selection; the 2-layer head maps it to the normalized
//! contrastive embedding. Parameters live in one flat `Vec<f64>` laid out
//! layer by layer (row-major weights, then biases), which keeps momentum
//! updates, SGD, and finite-difference checks trivial.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderArch {
    pub input_dim: usize,
    /// Backbone widths; the last entry is the representation dimension.
    pub hidden: Vec<usize>,
    pub proj_hidden: usize,
    pub embed_dim: usize,
}

impl EncoderArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("encoder.input_dim", "must be >= 1"));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("encoder.hidden", "widths must be >= 1"));
        }
        if self.proj_hidden == 0 || self.embed_dim == 0 {
            return Err(Error::config("encoder.head", "widths must be >= 1"));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of every linear layer, backbone then head.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.proj_hidden));
        dims.push((self.proj_hidden, self.embed_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    pub fn repr_dim(&self) -> usize {
        *self.hidden.last().expect("validated arch has hidden layers")
    }

    /// Number of backbone layers (the layers before the projection head).
    fn backbone_layers(&self) -> usize {
        self.hidden.len()
    }
}

/// Xavier-uniform weights. Biases start at a small positive constant so
/// ReLU units are active at init and the head output cannot be exactly zero
/// (which would make normalization undefined).
pub fn init_params(arch: &EncoderArch, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out) in arch.layer_dims() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            params.push(rng.random_range(-bound..=bound));
        }
        params.extend(std::iter::repeat(0.01).take(fan_out));
    }
    params
}

/// A parameter vector viewed through an architecture.
#[derive(Debug, Clone)]
pub struct Mlp<'a> {
    pub arch: &'a EncoderArch,
    pub params: &'a [f64],
}

/// Layer activations cached during a forward pass; `inputs[i]` is the input
/// to linear layer `i`, `output` the head output before normalization.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl<'a> Mlp<'a> {
    pub fn new(arch: &'a EncoderArch, params: &'a [f64]) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        Ok(Mlp { arch, params })
    }

    fn layer(&self, index: usize) -> (&[f64], &[f64], usize, usize) {
        let dims = self.arch.layer_dims();
        let mut offset = 0;
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w_len = fan_in * fan_out;
            if i == index {
                let weights = &self.params[offset..offset + w_len];
                let biases = &self.params[offset + w_len..offset + w_len + fan_out];
                return (weights, biases, fan_in, fan_out);
            }
            offset += w_len + fan_out;
        }
        unreachable!("layer index out of range")
    }

    fn linear(&self, index: usize, input: &[f64]) -> Vec<f64> {
        let (weights, biases, fan_in, fan_out) = self.layer(index);
        debug_assert_eq!(input.len(), fan_in);
        let mut out = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut acc = biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
        out
    }

    /// Full forward pass with cached activations (ReLU after every layer but
    /// the last).
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.arch.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_dim,
                got: input.len(),
            });
        }
        let n_layers = self.arch.layer_dims().len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut current = input.to_vec();
        for layer in 0..n_layers {
            inputs.push(current.clone());
            let mut out = self.linear(layer, &current);
            if layer + 1 < n_layers {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            current = out;
        }
        Ok(ForwardCache {
            inputs,
            output: current,
        })
    }

    /// Backbone-only forward; returns the representation (post-ReLU).
    pub fn forward_repr(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.arch.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_dim,
                got: input.len(),
            });
        }
        let mut current = input.to_vec();
        for layer in 0..self.arch.backbone_layers() {
            let mut out = self.linear(layer, &current);
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            current = out;
        }
        Ok(current)
    }

    /// Backbone forward with cached activations, for end-to-end fine-tuning.
    pub fn forward_repr_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.arch.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_dim,
                got: input.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.arch.backbone_layers());
        let mut current = input.to_vec();
        for layer in 0..self.arch.backbone_layers() {
            inputs.push(current.clone());
            let mut out = self.linear(layer, &current);
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            current = out;
        }
        Ok(ForwardCache {
            inputs,
            output: current,
        })
    }

    /// Accumulates parameter gradients from `d_output` (gradient w.r.t. the
    /// pre-normalization head output) into `grad`, backpropagating through
    /// the whole network.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grad: &mut [f64]) {
        self.backward_layers(cache, d_output, self.arch.layer_dims().len(), true, grad);
    }

    /// Accumulates backbone gradients from `d_repr` (gradient w.r.t. the
    /// representation produced by `forward_repr_cached`).
    pub fn backward_repr(&self, cache: &ForwardCache, d_repr: &[f64], grad: &mut [f64]) {
        self.backward_layers(cache, d_repr, self.arch.backbone_layers(), false, grad);
    }

    /// Shared backward over the first `n_layers` layers. `last_is_linear`
    /// marks whether the final layer of the slice has no ReLU (the head
    /// output); backbone layers always end in ReLU, so the incoming delta is
    /// first masked by the final activation.
    fn backward_layers(
        &self,
        cache: &ForwardCache,
        d_out: &[f64],
        n_layers: usize,
        last_is_linear: bool,
        grad: &mut [f64],
    ) {
        let dims = self.arch.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &(fan_in, fan_out) in &dims {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }

        let mut delta = d_out.to_vec();
        if !last_is_linear {
            // ReLU at the representation output
            for (d, &a) in delta.iter_mut().zip(&cache.output) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        for layer in (0..n_layers).rev() {
            let (fan_in, fan_out) = dims[layer];
            let base = offsets[layer];
            let input = &cache.inputs[layer];
            debug_assert_eq!(input.len(), fan_in);
            debug_assert_eq!(delta.len(), fan_out);
            // weight and bias gradients
            for o in 0..fan_out {
                let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
                let d = delta[o];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let bias_base = base + fan_in * fan_out;
            for o in 0..fan_out {
                grad[bias_base + o] += delta[o];
            }
            if layer == 0 {
                break;
            }
            // propagate to the previous layer through W^T and the ReLU mask
            let weights = &self.params[base..base + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let d = delta[o];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, &a) in prev.iter_mut().zip(&cache.inputs[layer]) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = l2_norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Gradient of the loss w.r.t. the pre-normalization vector `y`, given the
/// gradient w.r.t. `q = y / ||y||`.
pub fn normalize_backward(y: &[f64], q: &[f64], d_q: &[f64]) -> Vec<f64> {
    let n = l2_norm(y);
    let dot: f64 = q.iter().zip(d_q).map(|(a, b)| a * b).sum();
    q.iter()
        .zip(d_q)
        .map(|(&qi, &gi)| (gi - qi * dot) / n)
        .collect()
}

/// Forward pass through encoder and projection head, then L2 normalization.
pub fn encode(arch: &EncoderArch, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    let mlp = Mlp::new(arch, params)?;
    let cache = mlp.forward_cached(input)?;
    Ok(normalize(&cache.output))
}

/// Backbone representation of an input (what the probes consume).
pub fn representation(arch: &EncoderArch, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    let mlp = Mlp::new(arch, params)?;
    mlp.forward_repr(input)
}
