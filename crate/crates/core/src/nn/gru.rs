//! Stacked GRU over a fixed input window with a linear readout.
//!
//! Gates follow the usual reset/update/candidate layout:
//!
//! ```text
//! r = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```
//!
//! The readout sees the last hidden state of the top layer and, when `highway` is
//! set, the raw input window as well (a linear autoregressive skip path).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, glorot, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruStack {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub window: usize,
    pub outputs: usize,
    pub highway: bool,
    #[serde(skip)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    w_in: usize,
    w_hid: usize,
    b_in: usize,
    b_hid: usize,
    fan_in: usize,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    /// `(window + 1) x batch x hidden`, starting with the zero state.
    hs: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`, needed by the reset-gate gradient.
    ghn: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GruTrace {
    batch: usize,
    layers: Vec<LayerTrace>,
    readout_in: Vec<f64>,
    pub output: Vec<f64>,
}

impl GruStack {
    pub fn new<R: Rng>(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        window: usize,
        outputs: usize,
        highway: bool,
        rng: &mut R,
    ) -> Self {
        assert!(window >= 1 && num_layers >= 1 && hidden_size >= 1 && input_size >= 1);
        let mut net = Self { input_size, hidden_size, num_layers, window, outputs, highway, params: Vec::new() };
        net.params = vec![0.0; net.param_count()];
        let h = hidden_size;
        for l in 0..num_layers {
            let o = net.layer_offsets(l);
            glorot(&mut net.params[o.w_in..o.w_in + 3 * h * o.fan_in], o.fan_in, h, rng);
            glorot(&mut net.params[o.w_hid..o.w_hid + 3 * h * h], h, h, rng);
        }
        // The skip weights on the raw window start at zero so the initial output is
        // driven by the recurrent state alone.
        let (w_out, _) = net.readout_offsets();
        let r = net.readout_width();
        let mut w = vec![0.0; outputs * hidden_size];
        glorot(&mut w, hidden_size, outputs, rng);
        for o in 0..outputs {
            net.params[w_out + o * r..w_out + o * r + hidden_size].copy_from_slice(&w[o * hidden_size..(o + 1) * hidden_size]);
        }
        net
    }

    pub fn input_len(&self) -> usize {
        self.window * self.input_size
    }

    fn readout_width(&self) -> usize {
        self.hidden_size + if self.highway { self.input_len() } else { 0 }
    }

    fn layer_offsets(&self, l: usize) -> LayerOffsets {
        let h = self.hidden_size;
        let mut off = 0;
        for k in 0..l {
            let fan_in = if k == 0 { self.input_size } else { h };
            off += 3 * h * fan_in + 3 * h * h + 6 * h;
        }
        let fan_in = if l == 0 { self.input_size } else { h };
        let w_in = off;
        let w_hid = w_in + 3 * h * fan_in;
        let b_in = w_hid + 3 * h * h;
        let b_hid = b_in + 3 * h;
        LayerOffsets { w_in, w_hid, b_in, b_hid, fan_in }
    }

    fn readout_offsets(&self) -> (usize, usize) {
        let o = self.layer_offsets(self.num_layers - 1);
        let w_out = o.b_hid + 3 * self.hidden_size;
        (w_out, w_out + self.outputs * self.readout_width())
    }

    pub fn param_count(&self) -> usize {
        let (_, b_out) = self.readout_offsets();
        b_out + self.outputs
    }

    /// Forward pass over a batch of windows laid out sample-major, `window x input_size` each.
    pub fn forward_trace(&self, x: &[f64], batch: usize) -> GruTrace {
        let (h, w, isz) = (self.hidden_size, self.window, self.input_size);
        debug_assert_eq!(x.len(), batch * self.input_len());
        let p = &self.params;
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.num_layers);
        let mut gi = vec![0.0; batch * 3 * h];
        let mut gh = vec![0.0; batch * 3 * h];
        for l in 0..self.num_layers {
            let o = self.layer_offsets(l);
            let mut tr = LayerTrace {
                hs: vec![0.0; (w + 1) * batch * h],
                r: vec![0.0; w * batch * h],
                z: vec![0.0; w * batch * h],
                n: vec![0.0; w * batch * h],
                ghn: vec![0.0; w * batch * h],
            };
            let b_in = &p[o.b_in..o.b_in + 3 * h];
            let b_hid = &p[o.b_hid..o.b_hid + 3 * h];
            for t in 0..w {
                for row in gi.chunks_exact_mut(3 * h) {
                    row.copy_from_slice(b_in);
                }
                for row in gh.chunks_exact_mut(3 * h) {
                    row.copy_from_slice(b_hid);
                }
                let w_in = &p[o.w_in..o.w_in + 3 * h * o.fan_in];
                if l == 0 {
                    gemm(batch, isz, 3 * h, &x[t * isz..], w * isz, 1, w_in, 1, isz, &mut gi, 3 * h, 1, 1.0);
                } else {
                    let below = &layers[l - 1].hs[(t + 1) * batch * h..(t + 2) * batch * h];
                    gemm(batch, h, 3 * h, below, h, 1, w_in, 1, h, &mut gi, 3 * h, 1, 1.0);
                }
                let w_hid = &p[o.w_hid..o.w_hid + 3 * h * h];
                let (prev_all, next_all) = tr.hs.split_at_mut((t + 1) * batch * h);
                let prev = &prev_all[t * batch * h..];
                gemm(batch, h, 3 * h, prev, h, 1, w_hid, 1, h, &mut gh, 3 * h, 1, 1.0);
                let next = &mut next_all[..batch * h];
                let base = t * batch * h;
                for b in 0..batch {
                    let gi_row = &gi[b * 3 * h..(b + 1) * 3 * h];
                    let gh_row = &gh[b * 3 * h..(b + 1) * 3 * h];
                    for j in 0..h {
                        let k = b * h + j;
                        let r = sigmoid(gi_row[j] + gh_row[j]);
                        let z = sigmoid(gi_row[h + j] + gh_row[h + j]);
                        let ghn = gh_row[2 * h + j];
                        let n = (gi_row[2 * h + j] + r * ghn).tanh();
                        next[k] = (1.0 - z) * n + z * prev[k];
                        tr.r[base + k] = r;
                        tr.z[base + k] = z;
                        tr.n[base + k] = n;
                        tr.ghn[base + k] = ghn;
                    }
                }
            }
            layers.push(tr);
        }

        let rw = self.readout_width();
        let top = &layers[self.num_layers - 1].hs[w * batch * h..];
        let mut readout_in = vec![0.0; batch * rw];
        for b in 0..batch {
            let row = &mut readout_in[b * rw..(b + 1) * rw];
            row[..h].copy_from_slice(&top[b * h..(b + 1) * h]);
            if self.highway {
                row[h..].copy_from_slice(&x[b * self.input_len()..(b + 1) * self.input_len()]);
            }
        }
        let (w_out, b_out) = self.readout_offsets();
        let mut output = vec![0.0; batch * self.outputs];
        for row in output.chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&p[b_out..b_out + self.outputs]);
        }
        gemm(batch, rw, self.outputs, &readout_in, rw, 1, &p[w_out..b_out], 1, rw, &mut output, self.outputs, 1, 1.0);
        GruTrace { batch, layers, readout_in, output }
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Vec<f64> {
        self.forward_trace(x, batch).output
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_batch(x, 1)
    }

    /// Backpropagation through time. Adds parameter gradients of `<dout, output>` to `grad`.
    pub fn backward(&self, trace: &GruTrace, x: &[f64], dout: &[f64], grad: &mut [f64]) {
        let (h, w, isz, batch) = (self.hidden_size, self.window, self.input_size, trace.batch);
        let p = &self.params;
        let rw = self.readout_width();
        let (w_out, b_out) = self.readout_offsets();

        // Readout.
        gemm(self.outputs, batch, rw, dout, 1, self.outputs, &trace.readout_in, rw, 1, &mut grad[w_out..b_out], rw, 1, 1.0);
        for row in dout.chunks_exact(self.outputs) {
            for (g, d) in grad[b_out..b_out + self.outputs].iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut d_readout = vec![0.0; batch * rw];
        gemm(batch, self.outputs, rw, dout, self.outputs, 1, &p[w_out..b_out], rw, 1, &mut d_readout, rw, 1, 0.0);

        // Gradient w.r.t. each output step of the current layer: w x batch x h.
        let mut d_hs = vec![0.0; w * batch * h];
        for b in 0..batch {
            d_hs[(w - 1) * batch * h + b * h..(w - 1) * batch * h + (b + 1) * h]
                .copy_from_slice(&d_readout[b * rw..b * rw + h]);
        }

        let mut dgi = vec![0.0; batch * 3 * h];
        let mut dgh = vec![0.0; batch * 3 * h];
        let mut dh_next = vec![0.0; batch * h];
        for l in (0..self.num_layers).rev() {
            let o = self.layer_offsets(l);
            let tr = &trace.layers[l];
            let mut d_below = if l > 0 { vec![0.0; w * batch * h] } else { Vec::new() };
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for t in (0..w).rev() {
                let base = t * batch * h;
                let prev = &tr.hs[t * batch * h..(t + 1) * batch * h];
                let mut dh_prev = vec![0.0; batch * h];
                for b in 0..batch {
                    for j in 0..h {
                        let k = b * h + j;
                        let dh = d_hs[base + k] + dh_next[k];
                        let (r, z, n, ghn) = (tr.r[base + k], tr.z[base + k], tr.n[base + k], tr.ghn[base + k]);
                        let dn = dh * (1.0 - z);
                        let dz = dh * (prev[k] - n);
                        let dan = dn * (1.0 - n * n);
                        let dar = dan * ghn * r * (1.0 - r);
                        let daz = dz * z * (1.0 - z);
                        let row = b * 3 * h;
                        dgi[row + j] = dar;
                        dgi[row + h + j] = daz;
                        dgi[row + 2 * h + j] = dan;
                        dgh[row + j] = dar;
                        dgh[row + h + j] = daz;
                        dgh[row + 2 * h + j] = dan * r;
                        dh_prev[k] = dh * z;
                    }
                }
                // Weight gradients for this step.
                {
                    let (g_in, rest) = grad[o.w_in..].split_at_mut(3 * h * o.fan_in);
                    if l == 0 {
                        gemm(3 * h, batch, isz, &dgi, 1, 3 * h, &x[t * isz..], w * isz, 1, g_in, isz, 1, 1.0);
                    } else {
                        let below = &trace.layers[l - 1].hs[(t + 1) * batch * h..(t + 2) * batch * h];
                        gemm(3 * h, batch, h, &dgi, 1, 3 * h, below, h, 1, g_in, h, 1, 1.0);
                    }
                    let g_hid = &mut rest[..3 * h * h];
                    gemm(3 * h, batch, h, &dgh, 1, 3 * h, prev, h, 1, g_hid, h, 1, 1.0);
                }
                for b in 0..batch {
                    let row = b * 3 * h;
                    for j in 0..3 * h {
                        grad[o.b_in + j] += dgi[row + j];
                        grad[o.b_hid + j] += dgh[row + j];
                    }
                }
                // Recurrent and downward gradients.
                gemm(batch, 3 * h, h, &dgh, 3 * h, 1, &p[o.w_hid..o.w_hid + 3 * h * h], h, 1, &mut dh_prev, h, 1, 1.0);
                dh_next.copy_from_slice(&dh_prev);
                if l > 0 {
                    gemm(
                        batch,
                        3 * h,
                        h,
                        &dgi,
                        3 * h,
                        1,
                        &p[o.w_in..o.w_in + 3 * h * h],
                        h,
                        1,
                        &mut d_below[base..base + batch * h],
                        h,
                        1,
                        0.0,
                    );
                }
            }
            if l > 0 {
                d_hs = d_below;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar single-sample recomputation of the same equations.
    fn reference(net: &GruStack, x: &[f64]) -> Vec<f64> {
        let h = net.hidden_size;
        let p = &net.params;
        let mut inputs: Vec<Vec<f64>> = x.chunks(net.input_size).map(|c| c.to_vec()).collect();
        for l in 0..net.num_layers {
            let o = net.layer_offsets(l);
            let mut state = vec![0.0; h];
            let mut outs = Vec::new();
            for xt in &inputs {
                let lin = |w: usize, b: usize, v: &[f64], row: usize| -> f64 {
                    p[b + row] + (0..v.len()).map(|i| p[w + row * v.len() + i] * v[i]).sum::<f64>()
                };
                let mut next = vec![0.0; h];
                for j in 0..h {
                    let r = sigmoid(lin(o.w_in, o.b_in, xt, j) + lin(o.w_hid, o.b_hid, &state, j));
                    let z = sigmoid(lin(o.w_in, o.b_in, xt, h + j) + lin(o.w_hid, o.b_hid, &state, h + j));
                    let n = (lin(o.w_in, o.b_in, xt, 2 * h + j) + r * lin(o.w_hid, o.b_hid, &state, 2 * h + j)).tanh();
                    next[j] = (1.0 - z) * n + z * state[j];
                }
                state = next;
                outs.push(state.clone());
            }
            inputs = outs;
        }
        let mut feat = inputs.last().unwrap().clone();
        if net.highway {
            feat.extend_from_slice(x);
        }
        let (w_out, b_out) = net.readout_offsets();
        (0..net.outputs)
            .map(|o| p[b_out + o] + (0..feat.len()).map(|i| p[w_out + o * feat.len() + i] * feat[i]).sum::<f64>())
            .collect()
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for highway in [false, true] {
            let mut net = GruStack::new(2, 5, 2, 6, 3, highway, &mut rng);
            for v in net.params.iter_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = net.forward(&x);
            for (g, e) in got.iter().zip(reference(&net, &x)) {
                assert!((g - e).abs() < 1e-12, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn unrolls_over_the_whole_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = GruStack::new(1, 4, 1, 5, 1, false, &mut rng);
        let x = [0.0, 0.0, 0.0, 0.0, 1.0];
        let mut y = x;
        y[0] = 1.0;
        assert_ne!(net.forward(&x), net.forward(&y));
    }
}
