//! Day simulator: replays a strategy slot by slot against actual data and enforces
//! the physics.
//!
//! A strategy only ever sees the past of each series plus the irradiation and price
//! of the current slot. Current consumption is revealed after the decision, when the
//! command is realized.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{ess_level_update, res_energy, slot_cost, DayProfile, EssMode, SlotDispatch, SystemParams, FEAS_TOL};
use crate::error::{Error, Result};
use crate::milp::OptimalDispatch;

/// Series values strictly before the current slot, oldest first.
#[derive(Debug, Clone, Copy)]
pub struct Past<'a> {
    pub consumption: &'a [f64],
    pub irradiation: &'a [f64],
    pub price: &'a [f64],
}

/// Everything a strategy may consult when deciding slot `slot`.
#[derive(Debug, Clone, Copy)]
pub struct SlotObservation<'a> {
    /// 0-based slot of the day.
    pub slot: usize,
    pub past: Past<'a>,
    /// Irradiation of the current slot, kW/m².
    pub irradiation: f64,
    pub price: f64,
    /// Storage level at the start of the slot.
    pub level: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DayContext<'a> {
    pub day_index: usize,
    pub past: Past<'a>,
}

pub trait Strategy {
    fn name(&self) -> String;

    /// Called before the first slot of every day. Day-ahead planners do their work here.
    fn begin_day(&mut self, _ctx: &DayContext, _params: &SystemParams) -> Result<()> {
        Ok(())
    }

    /// The command for one slot. The simulator realizes it against actual consumption
    /// and PV output.
    fn decide(&mut self, obs: &SlotObservation, params: &SystemParams) -> Result<SlotDispatch>;
}

/// Turns a command into physically feasible flows given the actual consumption, PV
/// output and storage level.
///
/// Charge mode keeps the commanded PV and grid amounts, clipped to what the PV
/// produces and the load needs, then scales the charge down proportionally to the
/// rate and the room left in the storage. Discharge mode keeps the commanded total,
/// limited by rate and stored energy; PV serves the load first, the storage covers
/// what remains and any surplus is sold. Feasible commands pass through unchanged up
/// to rounding.
pub fn realize(cmd: &SlotDispatch, e_ec: f64, e_res: f64, level: f64, params: &SystemParams) -> SlotDispatch {
    let clean = |v: f64| if v.is_finite() { v.max(0.0) } else { 0.0 };
    let eta = params.ess_efficiency;
    match cmd.mode {
        EssMode::Charge => {
            let res_to_load = clean(cmd.res_to_load).min(e_res).min(e_ec);
            let mut res_to_ess = clean(cmd.res_to_ess).min((e_res - res_to_load).max(0.0));
            let mut grid_to_ess = clean(cmd.grid_to_ess);
            let room = ((params.level_max - level) / eta).max(0.0);
            let cap = params.max_charge().min(room);
            let total = res_to_ess + grid_to_ess;
            if total > cap {
                let s = if total > 0.0 { cap / total } else { 0.0 };
                res_to_ess *= s;
                grid_to_ess *= s;
            }
            SlotDispatch { res_to_load, res_to_ess, grid_to_ess, ess_to_load: 0.0, ess_to_sell: 0.0, mode: EssMode::Charge }
        }
        EssMode::Discharge => {
            let stored = ((level - params.level_min) * eta).max(0.0);
            let d = clean(cmd.discharge_total()).min(params.max_discharge()).min(stored);
            let res_to_load = e_res.min(e_ec).max(0.0);
            let ess_to_load = d.min(e_ec - res_to_load);
            SlotDispatch {
                res_to_load,
                res_to_ess: 0.0,
                grid_to_ess: 0.0,
                ess_to_load,
                ess_to_sell: d - ess_to_load,
                mode: EssMode::Discharge,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedDayResult {
    pub strategy: String,
    pub cost: f64,
    pub dispatch: Vec<SlotDispatch>,
    /// Level after each slot.
    pub levels: Vec<f64>,
    /// PV energy neither consumed nor stored, kWh.
    pub res_waste: f64,
    pub baseline_cost: f64,
    /// `|level(T) - EL_0|`, kWh.
    pub terminal_residual: f64,
    /// Seconds spent in `decide` for each slot.
    pub slot_times: Vec<f64>,
    /// Seconds spent in `begin_day`.
    pub planning_time: f64,
}

impl RealizedDayResult {
    pub fn mean_slot_time(&self) -> f64 {
        if self.slot_times.is_empty() {
            0.0
        } else {
            self.slot_times.iter().sum::<f64>() / self.slot_times.len() as f64
        }
    }
}

/// Daily cost with neither storage nor PV.
pub fn baseline_cost(day: &DayProfile) -> f64 {
    day.consumption.iter().zip(&day.price).map(|(c, p)| c * p).sum()
}

/// Runs one day. `past` holds the hours before the day, oldest first.
pub fn simulate_day(
    strategy: &mut dyn Strategy,
    day: &DayProfile,
    past: Past<'_>,
    day_index: usize,
    params: &SystemParams,
) -> Result<RealizedDayResult> {
    params.validate()?;
    day.validate_for(params)?;
    let res = day.res_energy(params)?;
    let started = Instant::now();
    strategy.begin_day(&DayContext { day_index, past }, params)?;
    let planning_time = started.elapsed().as_secs_f64();

    let mut consumption = past.consumption.to_vec();
    let mut irradiation = past.irradiation.to_vec();
    let mut price = past.price.to_vec();
    let slots = day.len();
    let mut level = params.level_initial;
    let mut result = RealizedDayResult {
        strategy: strategy.name(),
        cost: 0.0,
        dispatch: Vec::with_capacity(slots),
        levels: Vec::with_capacity(slots),
        res_waste: 0.0,
        baseline_cost: baseline_cost(day),
        terminal_residual: 0.0,
        slot_times: Vec::with_capacity(slots),
        planning_time,
    };
    for t in 0..slots {
        let obs = SlotObservation {
            slot: t,
            past: Past { consumption: &consumption, irradiation: &irradiation, price: &price },
            irradiation: day.irradiation[t],
            price: day.price[t],
            level,
        };
        let started = Instant::now();
        let cmd = strategy.decide(&obs, params)?;
        result.slot_times.push(started.elapsed().as_secs_f64());

        let (e_ec, e_res) = (day.consumption[t], res[t]);
        let d = realize(&cmd, e_ec, e_res, level, params);
        d.check_against(e_ec, e_res, params)
            .map_err(|e| Error::Solver(format!("realized dispatch infeasible at slot {t}: {e}")))?;
        level = ess_level_update(level, &d, params)?;
        result.cost += slot_cost(&d, e_ec, day.price[t], params)?;
        result.res_waste += (e_res - d.res_to_load - d.res_to_ess).max(0.0);
        result.dispatch.push(d);
        result.levels.push(level);

        consumption.push(e_ec);
        irradiation.push(day.irradiation[t]);
        price.push(day.price[t]);
    }
    result.terminal_residual = (level - params.level_initial).abs();
    Ok(result)
}

/// Never touches the storage or the PV: the baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdleStrategy;

impl Strategy for IdleStrategy {
    fn name(&self) -> String {
        "idle".into()
    }

    fn decide(&mut self, _obs: &SlotObservation, _params: &SystemParams) -> Result<SlotDispatch> {
        Ok(SlotDispatch::idle())
    }
}

/// Replays precomputed plans, one per day index. With plans solved on the actual
/// days this is the offline optimum.
#[derive(Debug, Clone)]
pub struct MilpReplay {
    pub plans: Vec<OptimalDispatch>,
    current: usize,
}

impl MilpReplay {
    pub fn new(plans: Vec<OptimalDispatch>) -> Self {
        Self { plans, current: 0 }
    }
}

impl Strategy for MilpReplay {
    fn name(&self) -> String {
        "milp".into()
    }

    fn begin_day(&mut self, ctx: &DayContext, _params: &SystemParams) -> Result<()> {
        if ctx.day_index >= self.plans.len() {
            return Err(Error::data(format!("no plan for day {}", ctx.day_index)));
        }
        self.current = ctx.day_index;
        Ok(())
    }

    fn decide(&mut self, obs: &SlotObservation, _params: &SystemParams) -> Result<SlotDispatch> {
        self.plans[self.current]
            .dispatch
            .get(obs.slot)
            .copied()
            .ok_or_else(|| Error::data(format!("plan has no slot {}", obs.slot)))
    }
}

/// PV energy of the current slot.
pub fn current_res(obs: &SlotObservation, params: &SystemParams) -> Result<f64> {
    res_energy(obs.irradiation, params)
}

/// One row per slot followed by a summary row.
pub fn write_result_csv<W: Write>(r: &RealizedDayResult, day: &DayProfile, params: &SystemParams, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record([
        "slot",
        "consumption",
        "price",
        "res_to_load",
        "res_to_ess",
        "grid_to_ess",
        "ess_to_load",
        "ess_to_sell",
        "mode",
        "level",
        "cost",
        "decide_seconds",
    ])?;
    for (t, d) in r.dispatch.iter().enumerate() {
        let mode = match d.mode {
            EssMode::Charge => "charge",
            EssMode::Discharge => "discharge",
        };
        let cost = slot_cost(d, day.consumption[t], day.price[t], params).unwrap_or(f64::NAN);
        w.write_record([
            (t + 1).to_string(),
            format!("{:?}", day.consumption[t]),
            format!("{:?}", day.price[t]),
            format!("{:?}", d.res_to_load),
            format!("{:?}", d.res_to_ess),
            format!("{:?}", d.grid_to_ess),
            format!("{:?}", d.ess_to_load),
            format!("{:?}", d.ess_to_sell),
            mode.to_string(),
            format!("{:?}", r.levels[t]),
            format!("{cost:?}"),
            format!("{:?}", r.slot_times[t]),
        ])?;
    }
    w.write_record([
        "total".to_string(),
        format!("{:?}", day.consumption.iter().sum::<f64>()),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        format!("waste={:?}", r.res_waste),
        format!("residual={:?}", r.terminal_residual),
        format!("{:?}", r.cost),
        format!("{:?}", r.mean_slot_time()),
    ])?;
    w.flush()?;
    Ok(())
}

/// Checks every realized slot: flows feasible against the actuals (which includes a
/// non-negative grid draw closing the balance), levels inside the bounds and equal to
/// the recursion of the flows, and cost equal to the sum of slot costs.
pub fn check_realized(r: &RealizedDayResult, day: &DayProfile, params: &SystemParams) -> Result<()> {
    let res = day.res_energy(params)?;
    let mut level = params.level_initial;
    let mut cost = 0.0;
    for (t, d) in r.dispatch.iter().enumerate() {
        d.check_against(day.consumption[t], res[t], params)?;
        level = ess_level_update(level, d, params)?;
        if (level - r.levels[t]).abs() > FEAS_TOL {
            return Err(Error::Infeasible { what: format!("level trajectory off at slot {t}"), overshoot: (level - r.levels[t]).abs() });
        }
        cost += slot_cost(d, day.consumption[t], day.price[t], params)?;
    }
    if (cost - r.cost).abs() > 1e-9 {
        return Err(Error::Infeasible { what: "cost differs from the sum of slot costs".into(), overshoot: (cost - r.cost).abs() });
    }
    Ok(())
}
