//! Sliding-window GRU forecasters for the three input series.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SeriesKind, CONTEXT_HOURS};
use crate::error::{Error, Result};
use crate::nn::{self, Arch, Dataset, GruStack, Network, Standardizer, TrainConfig};

/// Denominator floor of [`mape`], kWh.
pub const MAPE_FLOOR: f64 = 0.01;

/// Anything that maps the past of a series to its next `horizon` values.
pub trait SeriesForecaster {
    fn horizon(&self) -> usize;
    /// Number of trailing values consulted.
    fn window(&self) -> usize;
    /// `history` holds every known value, oldest first, and must cover the window.
    fn forecast(&self, history: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub window: usize,
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Spacing between consecutive training windows.
    pub stride: usize,
    /// Feed the raw window to the readout alongside the recurrent state.
    pub highway: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { window: CONTEXT_HOURS, hidden: 64, layers: 2, epochs: 30, batch: 32, lr: 1e-3, stride: 1, highway: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub net: Network,
    pub horizon: usize,
    pub target: SeriesKind,
    pub loss_curve: Vec<f64>,
}

/// Trains a direct multi-output forecaster on every `(window, horizon)` pair of `history`.
pub fn fit(history: &[f64], horizon: usize, target: SeriesKind, cfg: &ForecastConfig, seed: u64) -> Result<Forecaster> {
    let w = cfg.window;
    if horizon == 0 || w == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    if history.len() < w + horizon {
        return Err(Error::data(format!(
            "{} history values cannot form a window of {w} plus a horizon of {horizon}",
            history.len()
        )));
    }
    if let Some(i) = history.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("history value {i} is not finite")));
    }
    let mut data = Dataset::new(w, horizon);
    for end in (w..=history.len() - horizon).step_by(cfg.stride.max(1)) {
        data.push(&history[end - w..end], &history[end..end + horizon]);
    }
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let std = (history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let gru = GruStack::new(1, cfg.hidden, cfg.layers, w, horizon, cfg.highway, &mut rng);
    let mut net = Network::from_arch(Arch::Gru(gru), seed);
    net.input_scaler = Standardizer::shared(mean, std, w);
    net.output_scaler = Standardizer::shared(mean, std, horizon);
    let tc = TrainConfig { epochs: cfg.epochs, batch: cfg.batch, lr: cfg.lr, seed };
    let loss_curve = nn::train(&mut net, &data, &tc)
        .map_err(|e| Error::Training(format!("{} forecaster: {e}", target.name())))?;
    Ok(Forecaster { net, horizon, target, loss_curve })
}

impl Forecaster {
    pub fn window_len(&self) -> usize {
        self.net.input_len()
    }

    /// Forecast from exactly one window of past values. Negative outputs are clamped to zero.
    pub fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.window_len() {
            return Err(Error::domain(format!("expected a window of {} values, got {}", self.window_len(), window.len())));
        }
        if window.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("window values must be finite and non-negative"));
        }
        let mut y = self.net.forward(window)?;
        y.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(y)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        nn::save_network(&self.net, path)
    }

    pub fn load(path: &Path, target: SeriesKind) -> Result<Self> {
        let net = nn::load_network(path)?;
        if !matches!(net.arch, Arch::Gru(_)) {
            return Err(Error::Format("forecaster file does not hold a GRU stack".into()));
        }
        let horizon = net.output_len();
        Ok(Self { net, horizon, target, loss_curve: Vec::new() })
    }
}

impl SeriesForecaster for Forecaster {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn window(&self) -> usize {
        self.window_len()
    }

    fn forecast(&self, history: &[f64]) -> Result<Vec<f64>> {
        let w = self.window_len();
        if history.len() < w {
            return Err(Error::data(format!("need {w} past values, have {}", history.len())));
        }
        self.predict(&history[history.len() - w..])
    }
}

/// Repeats the value one period earlier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalNaive {
    pub period: usize,
    pub horizon: usize,
}

impl SeriesForecaster for SeasonalNaive {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn window(&self) -> usize {
        self.period
    }

    fn forecast(&self, history: &[f64]) -> Result<Vec<f64>> {
        let n = history.len();
        if n < self.period || self.period == 0 {
            return Err(Error::data(format!("need {} past values, have {n}", self.period)));
        }
        Ok((0..self.horizon).map(|k| history[n - self.period + k % self.period]).collect())
    }
}

/// Mean over slots of `|pred - actual| / max(actual, floor)`, in percent.
pub fn mape(pred: &[f64], actual: &[f64], floor: f64) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::domain("MAPE of an empty series"));
    }
    if pred.len() != actual.len() {
        return Err(Error::domain(format!("MAPE over {} predictions and {} actuals", pred.len(), actual.len())));
    }
    if !(floor > 0.0) {
        return Err(Error::domain("MAPE floor must be positive"));
    }
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs() / a.max(floor)).sum();
    Ok(100.0 * sum / pred.len() as f64)
}

/// One-step-ahead MAPE over `series[from..]`, each prediction using only earlier values.
pub fn rolling_mape<F: SeriesForecaster + ?Sized>(f: &F, series: &[f64], from: usize, floor: f64) -> Result<f64> {
    if from < f.window() || from >= series.len() {
        return Err(Error::data(format!("cannot evaluate from {from} over {} values", series.len())));
    }
    let mut pred = Vec::with_capacity(series.len() - from);
    for t in from..series.len() {
        pred.push(f.forecast(&series[..t])?[0]);
    }
    mape(&pred, &series[from..], floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0], MAPE_FLOOR).unwrap(), 0.0);
        assert!((mape(&[1.1], &[1.0], MAPE_FLOOR).unwrap() - 10.0).abs() < 1e-12);
        assert!((mape(&[0.005], &[0.0], MAPE_FLOOR).unwrap() - 50.0).abs() < 1e-12);
        assert!(matches!(mape(&[], &[], MAPE_FLOOR), Err(Error::Domain(_))));
    }

    #[test]
    fn seasonal_naive_repeats_the_last_period() {
        let f = SeasonalNaive { period: 3, horizon: 4 };
        assert_eq!(f.forecast(&[9.0, 1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0, 1.0]);
    }
}
