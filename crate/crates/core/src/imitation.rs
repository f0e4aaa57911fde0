//! Supervised controller that imitates the daily optimum hour by hour.
//!
//! Historical days are solved exactly; every slot becomes a sample mapping
//! `[consumption, irradiation, level before the slot, price, slot]` to four of the
//! optimal flows. One network per flow is trained, and at run time a one-step
//! consumption forecast stands in for the unknown current consumption.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{res_energy, DayProfile, EssMode, SlotDispatch, SystemParams};
use crate::error::{Error, Result};
use crate::forecast::{Forecaster, SeriesForecaster};
use crate::milp::optimize_day;
use crate::nn::{self, stack, Activation, Dataset, Network, TrainConfig};
use crate::sim::{SlotObservation, Strategy};
use crate::data::SeriesKind;

pub const FEATURES: [&str; 5] = ["consumption", "irradiation", "level", "price", "slot"];
pub const HEADS: [&str; 4] = ["res_to_load", "grid_to_ess", "ess_to_load", "ess_to_sell"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImitationSample {
    pub input: [f64; 5],
    pub labels: [f64; 4],
}

/// Feature vector of a slot; `slot` is 0-based and encoded 1-based.
pub fn features(e_ec: f64, ghi: f64, level: f64, price: f64, slot: usize) -> [f64; 5] {
    [e_ec, ghi, level, price, (slot + 1) as f64]
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<ImitationSample>,
    /// Indices of days the solver could not handle.
    pub skipped_days: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Training set of one head.
    pub fn head(&self, k: usize) -> Dataset {
        let mut d = Dataset::new(5, 1);
        for s in &self.samples {
            d.push(&s.input, &[s.labels[k]]);
        }
        d
    }
}

/// Solves every day and labels each slot with the optimal flows. The level feature
/// is the optimal trajectory's level before the slot. Days the solver fails on are
/// skipped with a warning.
pub fn generate_dataset(days: &[DayProfile], params: &SystemParams) -> Result<LabeledDataset> {
    params.validate()?;
    let mut out = LabeledDataset::default();
    for (i, day) in days.iter().enumerate() {
        let plan = match optimize_day(day, params) {
            Ok(p) => p,
            Err(e) => {
                warn!("skipping day {i}: {e}");
                out.skipped_days.push(i);
                continue;
            }
        };
        for (t, d) in plan.dispatch.iter().enumerate() {
            out.samples.push(ImitationSample {
                input: features(day.consumption[t], day.irradiation[t], plan.level_before(t, params), day.price[t], t),
                labels: [d.res_to_load, d.grid_to_ess, d.ess_to_load, d.ess_to_sell],
            });
        }
    }
    Ok(out)
}

pub fn write_dataset_csv<W: Write>(data: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(FEATURES.iter().chain(HEADS.iter()))?;
    for s in &data.samples {
        w.write_record(s.input.iter().chain(s.labels.iter()).map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<LabeledDataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expected: Vec<&str> = FEATURES.iter().chain(HEADS.iter()).copied().collect();
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::data(format!("expected header `{}`", expected.join(","))));
    }
    let mut out = LabeledDataset::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut v = [0.0; 9];
        for (k, field) in rec.iter().enumerate().take(9) {
            v[k] = field.parse().map_err(|_| Error::data(format!("row {}: bad number `{field}`", i + 2)))?;
        }
        if rec.len() != 9 {
            return Err(Error::data(format!("row {}: expected 9 fields", i + 2)));
        }
        out.samples.push(ImitationSample { input: [v[0], v[1], v[2], v[3], v[4]], labels: [v[5], v[6], v[7], v[8]] });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitationConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 128], activation: Activation::Relu, epochs: 200, batch: 32, lr: 1e-3 }
    }
}

/// Trains the four heads. Returns them with their per-epoch loss curves.
pub fn train_heads(data: &LabeledDataset, cfg: &ImitationConfig, seeds: [u64; 4]) -> Result<(Vec<Network>, Vec<Vec<f64>>)> {
    if data.is_empty() {
        return Err(Error::data("imitation dataset is empty"));
    }
    let mut heads = Vec::with_capacity(4);
    let mut curves = Vec::with_capacity(4);
    for (k, seed) in seeds.into_iter().enumerate() {
        let set = data.head(k);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut net = Network::dense(5, stack(&cfg.hidden, cfg.activation, 1), seed, &mut rng);
        net.fit_scalers(&set);
        let tc = TrainConfig { epochs: cfg.epochs, batch: cfg.batch, lr: cfg.lr, seed };
        let curve = nn::train(&mut net, &set, &tc).map_err(|e| Error::Training(format!("head {}: {e}", HEADS[k])))?;
        heads.push(net);
        curves.push(curve);
    }
    Ok((heads, curves))
}

/// Raw outputs of the four heads, kWh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadOutputs {
    pub res_to_load: f64,
    pub grid_to_ess: f64,
    pub ess_to_load: f64,
    pub ess_to_sell: f64,
}

/// Turns head outputs into a feasible dispatch.
///
/// Outputs are clamped to their physical ranges. The PV not sent to the load is
/// offered to the storage. If the resulting charge is at least the requested
/// discharge the slot charges, otherwise it discharges. Charge amounts are scaled
/// down proportionally to fit the rate and the room left; PV that still has no use
/// serves the forecast load before being wasted. A discharge sends all PV to the
/// load; the storage covers the remaining forecast load and sells the surplus.
pub fn arbitrate(h: HeadOutputs, e_ec: f64, e_res: f64, level: f64, params: &SystemParams) -> SlotDispatch {
    let clamp = |v: f64, hi: f64| if v.is_finite() { v.clamp(0.0, hi.max(0.0)) } else { 0.0 };
    let e_ec = clamp(e_ec, f64::MAX);
    let e_res = clamp(e_res, f64::MAX);
    let eta = params.ess_efficiency;
    let res_load = clamp(h.res_to_load, e_res);
    let grid = clamp(h.grid_to_ess, params.max_charge());
    let ess_load = clamp(h.ess_to_load, params.max_discharge());
    let ess_sell = clamp(h.ess_to_sell, params.max_discharge());
    let res_charge = e_res - res_load;
    if res_charge + grid >= ess_load + ess_sell {
        let mut res_to_load = res_load.min(e_ec);
        let (mut res_to_ess, mut grid_to_ess) = (res_charge, grid);
        let cap = params.max_charge().min(((params.level_max - level) / eta).max(0.0));
        let total = res_to_ess + grid_to_ess;
        if total > cap {
            let s = cap / total;
            res_to_ess *= s;
            grid_to_ess *= s;
        }
        let spare = (e_res - res_to_load - res_to_ess).max(0.0);
        res_to_load += spare.min(e_ec - res_to_load).max(0.0);
        SlotDispatch { res_to_load, res_to_ess, grid_to_ess, ess_to_load: 0.0, ess_to_sell: 0.0, mode: EssMode::Charge }
    } else {
        let res_to_load = e_res.min(e_ec);
        let stored = ((level - params.level_min) * eta).max(0.0);
        let d = (ess_load + ess_sell).min(params.max_discharge()).min(stored);
        let to_load = d.min(e_ec - res_to_load);
        SlotDispatch {
            res_to_load,
            res_to_ess: 0.0,
            grid_to_ess: 0.0,
            ess_to_load: to_load,
            ess_to_sell: d - to_load,
            mode: EssMode::Discharge,
        }
    }
}

/// Four trained heads plus the one-step consumption forecaster.
pub struct ImitationController<F = Forecaster> {
    pub heads: Vec<Network>,
    pub forecaster: F,
    pub params: SystemParams,
}

pub fn train_controller<F: SeriesForecaster>(
    data: &LabeledDataset,
    forecaster: F,
    cfg: &ImitationConfig,
    seeds: [u64; 4],
    params: &SystemParams,
) -> Result<ImitationController<F>> {
    let (heads, _) = train_heads(data, cfg, seeds)?;
    Ok(ImitationController { heads, forecaster, params: *params })
}

impl<F: SeriesForecaster> ImitationController<F> {
    pub fn head_outputs(&self, x: &[f64; 5]) -> Result<HeadOutputs> {
        let y: Vec<f64> = self.heads.iter().map(|h| h.forward(x).map(|v| v[0])).collect::<Result<_>>()?;
        Ok(HeadOutputs { res_to_load: y[0], grid_to_ess: y[1], ess_to_load: y[2], ess_to_sell: y[3] })
    }

    /// One hour-ahead decision. `past_consumption` holds every known consumption value.
    pub fn control_step(&self, past_consumption: &[f64], ghi: f64, level: f64, price: f64, slot: usize) -> Result<SlotDispatch> {
        let e_ec = self.forecaster.forecast(past_consumption)?[0].max(0.0);
        let e_res = res_energy(ghi, &self.params)?;
        let h = self.head_outputs(&features(e_ec, ghi, level, price, slot))?;
        Ok(arbitrate(h, e_ec, e_res, level, &self.params))
    }
}

impl<F: SeriesForecaster> Strategy for ImitationController<F> {
    fn name(&self) -> String {
        "imitation".into()
    }

    fn decide(&mut self, obs: &SlotObservation, _params: &SystemParams) -> Result<SlotDispatch> {
        self.control_step(obs.past.consumption, obs.irradiation, obs.level, obs.price, obs.slot)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    heads: Vec<String>,
    forecaster: String,
    params: SystemParams,
}

impl ImitationController<Forecaster> {
    /// Writes the heads and the forecaster into `dir` next to a manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut names = Vec::new();
        for (k, h) in self.heads.iter().enumerate() {
            let name = format!("head_{}.bin", HEADS[k]);
            nn::save_network(h, &dir.join(&name))?;
            names.push(name);
        }
        self.forecaster.save(&dir.join("forecaster.bin"))?;
        let manifest = Manifest { heads: names, forecaster: "forecaster.bin".into(), params: self.params };
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        if manifest.heads.len() != 4 {
            return Err(Error::Format(format!("manifest lists {} heads, expected 4", manifest.heads.len())));
        }
        let heads = manifest.heads.iter().map(|n| nn::load_network(&dir.join(n))).collect::<Result<Vec<_>>>()?;
        let forecaster = Forecaster::load(&dir.join(&manifest.forecaster), SeriesKind::Consumption)?;
        Ok(Self { heads, forecaster, params: manifest.params })
    }
}
