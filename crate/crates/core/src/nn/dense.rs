use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, glorot, Activation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

/// Hidden layers of the given widths with one activation, then a linear output layer.
pub fn stack(hidden: &[usize], activation: Activation, outputs: usize) -> Vec<LayerSpec> {
    hidden
        .iter()
        .map(|&w| LayerSpec::new(w, activation))
        .chain(std::iter::once(LayerSpec::new(outputs, Activation::Identity)))
        .collect()
}

/// Fully connected feed-forward stack. Each layer stores an `out x in` row-major
/// weight matrix followed by its bias, all in one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(skip)]
    pub params: Vec<f64>,
}

/// Activations of every layer for one batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new<R: Rng>(input: usize, layers: Vec<LayerSpec>, rng: &mut R) -> Self {
        let mut net = Self { input, layers, params: Vec::new() };
        net.params = vec![0.0; net.param_count()];
        let mut fan_in = input;
        let mut off = 0;
        for layer in &net.layers {
            let n = layer.width * fan_in;
            glorot(&mut net.params[off..off + n], fan_in, layer.width, rng);
            off += n + layer.width;
            fan_in = layer.width;
        }
        net
    }

    pub fn param_count(&self) -> usize {
        let mut fan_in = self.input;
        let mut n = 0;
        for layer in &self.layers {
            n += layer.width * fan_in + layer.width;
            fan_in = layer.width;
        }
        n
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.width)
    }

    /// Weight and bias slices of layer `l`.
    pub fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        let (off, fan_in) = self.offset(l);
        let w = self.layers[l].width;
        (&self.params[off..off + w * fan_in], &self.params[off + w * fan_in..off + w * fan_in + w])
    }

    pub fn layer_params_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (off, fan_in) = self.offset(l);
        let w = self.layers[l].width;
        let (weights, rest) = self.params[off..].split_at_mut(w * fan_in);
        (weights, &mut rest[..w])
    }

    fn offset(&self, l: usize) -> (usize, usize) {
        let mut fan_in = self.input;
        let mut off = 0;
        for layer in &self.layers[..l] {
            off += layer.width * fan_in + layer.width;
            fan_in = layer.width;
        }
        (off, fan_in)
    }

    pub fn forward_trace(&self, x: &[f64], batch: usize) -> MlpTrace {
        debug_assert_eq!(x.len(), batch * self.input);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let mut fan_in = self.input;
        let mut off = 0;
        for layer in &self.layers {
            let out = layer.width;
            let w = &self.params[off..off + out * fan_in];
            let b = &self.params[off + out * fan_in..off + out * fan_in + out];
            let mut z = vec![0.0; batch * out];
            for row in z.chunks_exact_mut(out) {
                row.copy_from_slice(b);
            }
            let prev = acts.last().unwrap();
            if batch == 1 {
                // Packing dominates a single row; plain dot products are faster.
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo += w[o * fan_in..(o + 1) * fan_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                }
            } else {
                // z (B x out) += prev (B x in) * w^T (in x out)
                gemm(batch, fan_in, out, prev, fan_in, 1, w, 1, fan_in, &mut z, out, 1, 1.0);
            }
            layer.activation.apply_in_place(&mut z);
            acts.push(z);
            off += out * fan_in + out;
            fan_in = out;
        }
        MlpTrace { batch, acts }
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut trace = self.forward_trace(x, batch);
        trace.acts.pop().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_batch(x, 1)
    }

    /// Backpropagates `dout` (gradient of the loss w.r.t. the batch output) through the
    /// trace. Parameter gradients are added to `grad`; the input gradient is returned.
    pub fn backward(&self, trace: &MlpTrace, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let batch = trace.batch;
        let mut delta = dout.to_vec();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut fan_in = self.input;
        let mut off = 0;
        for layer in &self.layers {
            offsets.push((off, fan_in));
            off += layer.width * fan_in + layer.width;
            fan_in = layer.width;
        }
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (off, fan_in) = offsets[l];
            let out = layer.width;
            let a_out = &trace.acts[l + 1];
            for (d, &a) in delta.iter_mut().zip(a_out) {
                *d *= layer.activation.derivative_from_output(a);
            }
            let a_in = &trace.acts[l];
            let (gw, gb) = grad[off..off + out * fan_in + out].split_at_mut(out * fan_in);
            // gw (out x in) += delta^T (out x B) * a_in (B x in)
            gemm(out, batch, fan_in, &delta, 1, out, a_in, fan_in, 1, gw, fan_in, 1, 1.0);
            for row in delta.chunks_exact(out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let w = &self.params[off..off + out * fan_in];
            let mut prev = vec![0.0; batch * fan_in];
            // prev (B x in) = delta (B x out) * w (out x in)
            gemm(batch, out, fan_in, &delta, out, 1, w, fan_in, 1, &mut prev, fan_in, 1, 0.0);
            delta = prev;
        }
        delta
    }
}
