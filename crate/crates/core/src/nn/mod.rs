//! Small trainable function approximators: dense stacks, GRU stacks, MSE loss,
//! backpropagation and Adam.

mod adam;
mod dense;
mod gru;
mod io;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use dense::{stack, LayerSpec, Mlp, MlpTrace};
pub use gru::{GruStack, GruTrace};
pub use io::{load_network, read_network, save_network, write_network};
pub use train::{grad_check, mse_loss_grad, train, Dataset, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn apply_in_place(self, xs: &mut [f64]) {
        if self != Activation::Identity {
            xs.iter_mut().for_each(|x| *x = self.apply(*x));
        }
    }

    /// Derivative expressed through the activation's output `a = f(x)`.
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `C = A·B + beta·C` for strided row/column layouts. `A` is `m x k`, `B` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: A out of range");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: B out of range");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: C out of range");
    // SAFETY: every element addressed through the strides lies inside the slices,
    // checked above, and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot<R: Rng>(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    for v in w.iter_mut() {
        *v = rng.gen_range(-limit..=limit);
    }
}

/// Per-feature affine standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    /// Fits on row-major data of the given width. Features with (near) zero spread get
    /// unit scale so they pass through centred.
    pub fn fit(rows: &[f64], width: usize) -> Self {
        assert!(width > 0 && rows.len() % width == 0);
        let n = (rows.len() / width).max(1) as f64;
        let mut mean = vec![0.0; width];
        for row in rows.chunks_exact(width) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for row in rows.chunks_exact(width) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, std }
    }

    /// Same statistics for every feature, for inputs that are windows of one quantity.
    pub fn shared(mean: f64, std: f64, width: usize) -> Self {
        let std = if std > 1e-12 { std } else { 1.0 };
        Self { mean: vec![mean; width], std: vec![std; width] }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &mut [f64]) {
        let w = self.width();
        for row in rows.chunks_exact_mut(w) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn invert(&self, rows: &mut [f64]) {
        let w = self.width();
        for row in rows.chunks_exact_mut(w) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Arch {
    Dense(Mlp),
    Gru(GruStack),
}

/// A dense or GRU stack together with its standardizers and optimizer state.
///
/// `forward` works in natural units: inputs are standardized and outputs mapped
/// back. Training works in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: Arch,
    pub input_scaler: Standardizer,
    pub output_scaler: Standardizer,
    pub optimizer: Adam,
    pub seed: u64,
}

impl Network {
    pub fn dense<R: Rng>(input: usize, layers: Vec<LayerSpec>, seed: u64, rng: &mut R) -> Self {
        Self::from_arch(Arch::Dense(Mlp::new(input, layers, rng)), seed)
    }

    pub fn from_arch(arch: Arch, seed: u64) -> Self {
        let (i, o) = match &arch {
            Arch::Dense(m) => (m.input, m.output_len()),
            Arch::Gru(g) => (g.input_len(), g.outputs),
        };
        let n = match &arch {
            Arch::Dense(m) => m.params.len(),
            Arch::Gru(g) => g.params.len(),
        };
        Self {
            arch,
            input_scaler: Standardizer::identity(i),
            output_scaler: Standardizer::identity(o),
            optimizer: Adam::new(n),
            seed,
        }
    }

    pub fn input_len(&self) -> usize {
        match &self.arch {
            Arch::Dense(m) => m.input,
            Arch::Gru(g) => g.input_len(),
        }
    }

    pub fn output_len(&self) -> usize {
        match &self.arch {
            Arch::Dense(m) => m.output_len(),
            Arch::Gru(g) => g.outputs,
        }
    }

    pub fn params(&self) -> &[f64] {
        match &self.arch {
            Arch::Dense(m) => &m.params,
            Arch::Gru(g) => &g.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.arch {
            Arch::Dense(m) => &mut m.params,
            Arch::Gru(g) => &mut g.params,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Batch forward pass in standardized units.
    pub fn forward_scaled(&self, x: &[f64], batch: usize) -> Vec<f64> {
        match &self.arch {
            Arch::Dense(m) => m.forward_batch(x, batch),
            Arch::Gru(g) => g.forward_batch(x, batch),
        }
    }

    /// Batch forward pass in natural units.
    pub fn predict_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.input_len() {
            return Err(Error::domain(format!(
                "expected {} inputs per row, got {} values for {batch} rows",
                self.input_len(),
                x.len()
            )));
        }
        let mut xs = x.to_vec();
        self.input_scaler.apply(&mut xs);
        let mut y = self.forward_scaled(&xs, batch);
        self.output_scaler.invert(&mut y);
        Ok(y)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_batch(x, 1)
    }

    /// Mean-squared error over a standardized batch, adding its parameter gradient to `grad`.
    pub fn loss_grad(&self, x: &[f64], y: &[f64], batch: usize, grad: &mut [f64]) -> f64 {
        match &self.arch {
            Arch::Dense(m) => {
                let trace = m.forward_trace(x, batch);
                let (loss, dout) = mse_loss_grad(trace.output(), y);
                m.backward(&trace, &dout, grad);
                loss
            }
            Arch::Gru(g) => {
                let trace = g.forward_trace(x, batch);
                let (loss, dout) = mse_loss_grad(&trace.output, y);
                g.backward(&trace, x, &dout, grad);
                loss
            }
        }
    }

    /// One Adam update from an already computed gradient.
    pub fn adam_step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let mut opt = std::mem::replace(&mut self.optimizer, Adam::new(0));
        let out = opt.step(self.params_mut(), grad, lr);
        self.optimizer = opt;
        out
    }
}
