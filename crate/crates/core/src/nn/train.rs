use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Network, Standardizer};
use crate::error::{Error, Result};

/// Row-major supervised pairs in natural units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub input_width: usize,
    pub target_width: usize,
}

impl Dataset {
    pub fn new(input_width: usize, target_width: usize) -> Self {
        Self { inputs: Vec::new(), targets: Vec::new(), input_width, target_width }
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) {
        assert_eq!(x.len(), self.input_width);
        assert_eq!(y.len(), self.target_width);
        self.inputs.extend_from_slice(x);
        self.targets.extend_from_slice(y);
    }

    pub fn len(&self) -> usize {
        if self.input_width == 0 {
            0
        } else {
            self.inputs.len() / self.input_width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_width..(i + 1) * self.input_width]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_width..(i + 1) * self.target_width]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch: 32, lr: 1e-3, seed: 0 }
    }
}

/// Mean squared error over all entries and its gradient w.r.t. the predictions.
pub fn mse_loss_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(pred.len(), target.len());
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}

impl Network {
    /// Fits per-feature input and output standardizers on a dataset.
    pub fn fit_scalers(&mut self, data: &Dataset) {
        self.input_scaler = Standardizer::fit(&data.inputs, data.input_width);
        self.output_scaler = Standardizer::fit(&data.targets, data.target_width);
    }
}

/// Mini-batch Adam on the MSE loss. Returns the mean standardized training loss of
/// each epoch. Deterministic for a fixed seed and dataset order.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if data.input_width != net.input_len() || data.target_width != net.output_len() {
        return Err(Error::domain(format!(
            "dataset is {}->{}, network is {}->{}",
            data.input_width,
            data.target_width,
            net.input_len(),
            net.output_len()
        )));
    }
    let batch = cfg.batch.max(1);
    let mut xs = data.inputs.clone();
    let mut ys = data.targets.clone();
    net.input_scaler.apply(&mut xs);
    net.output_scaler.apply(&mut ys);

    let (iw, tw) = (data.input_width, data.target_width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; net.param_count()];
    let mut bx = Vec::with_capacity(batch * iw);
    let mut by = Vec::with_capacity(batch * tw);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(&xs[i * iw..(i + 1) * iw]);
                by.extend_from_slice(&ys[i * tw..(i + 1) * tw]);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = net.loss_grad(&bx, &by, chunk.len(), &mut grad);
            if !loss.is_finite() {
                return Err(Error::training(format!("loss diverged in epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            net.adam_step(&grad, cfg.lr).map_err(|e| Error::training(format!("epoch {epoch}: {e}")))?;
        }
        curve.push(total / data.len() as f64);
    }
    Ok(curve)
}

/// Largest relative difference between the analytic gradient of the standardized MSE
/// and central finite differences, over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(net: &Network, x: &[f64], target: &[f64], eps: f64) -> f64 {
    let batch = x.len() / net.input_len().max(1);
    let mut analytic = vec![0.0; net.param_count()];
    net.loss_grad(x, target, batch, &mut analytic);
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + eps;
        let up = mse_loss_grad(&probe.forward_scaled(x, batch), target).0;
        probe.params_mut()[i] = orig - eps;
        let down = mse_loss_grad(&probe.forward_scaled(x, batch), target).0;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
