//! Day-ahead planning: forecast the whole day, solve the cost model on the forecast,
//! then execute the schedule slot by slot against the actuals.

use std::io::Write;

use log::warn;

use crate::domain::{ess_level_update, slot_cost, DayProfile, EssMode, SlotDispatch, SystemParams};
use crate::error::{Error, Result};
use crate::forecast::SeriesForecaster;
use crate::milp::{optimize_day, OptimalDispatch, SolverStats};
use crate::sim::{realize, DayContext, Past, SlotObservation, Strategy};

/// The three day-ahead forecasters.
pub struct DayAheadForecasters {
    pub consumption: Box<dyn SeriesForecaster + Send + Sync>,
    pub irradiation: Box<dyn SeriesForecaster + Send + Sync>,
    pub price: Box<dyn SeriesForecaster + Send + Sync>,
}

fn take_day(f: &dyn SeriesForecaster, past: &[f64], slots: usize, what: &str) -> Result<Vec<f64>> {
    let mut v = f.forecast(past)?;
    if v.len() < slots {
        return Err(Error::data(format!("{what} forecaster returned {} values, need {slots}", v.len())));
    }
    v.truncate(slots);
    v.iter_mut().for_each(|x| *x = if x.is_finite() { x.max(0.0) } else { 0.0 });
    Ok(v)
}

/// Storage-idle plan for a forecast day, used when the solver fails.
fn idle_plan(day: &DayProfile, params: &SystemParams) -> Result<OptimalDispatch> {
    let dispatch = vec![SlotDispatch::idle(); day.len()];
    let mut objective = 0.0;
    for (t, d) in dispatch.iter().enumerate() {
        objective += slot_cost(d, day.consumption[t], day.price[t], params)?;
    }
    Ok(OptimalDispatch {
        dispatch,
        levels: vec![params.level_initial; day.len()],
        objective,
        stats: SolverStats::default(),
        approximate: true,
    })
}

/// Forecasts the next day and solves it. Returns the plan and the forecast day.
pub fn plan_day(f: &DayAheadForecasters, past: Past<'_>, params: &SystemParams) -> Result<(OptimalDispatch, DayProfile)> {
    let slots = params.slots_per_day;
    let day = DayProfile::new(
        take_day(f.consumption.as_ref(), past.consumption, slots, "consumption")?,
        take_day(f.irradiation.as_ref(), past.irradiation, slots, "irradiation")?,
        take_day(f.price.as_ref(), past.price, slots, "price")?,
    )?;
    match optimize_day(&day, params) {
        Ok(plan) => Ok((plan, day)),
        Err(Error::NodeLimit { incumbent, .. }) => {
            warn!("day-ahead solve hit its node limit; executing the incumbent");
            Ok((*incumbent, day))
        }
        Err(e) => {
            warn!("day-ahead solve failed ({e}); falling back to an idle plan");
            let plan = idle_plan(&day, params)?;
            Ok((plan, day))
        }
    }
}

/// The planned command of slot `t`: charge if the planned charge is at least the
/// planned discharge, else discharge the planned amount.
pub fn planned_command(plan: &OptimalDispatch, t: usize) -> SlotDispatch {
    let p = plan.dispatch[t];
    if p.charge_total() >= p.discharge_total() {
        SlotDispatch { ess_to_load: 0.0, ess_to_sell: 0.0, mode: EssMode::Charge, ..p }
    } else {
        SlotDispatch { res_to_ess: 0.0, grid_to_ess: 0.0, mode: EssMode::Discharge, ..p }
    }
}

/// Executes slot `t` (0-based) of a plan against the actual consumption and PV output.
///
/// PV-dependent amounts are clipped to the actual PV; any shortfall is not made up
/// from the grid. The result is always feasible.
pub fn execute_slot(plan: &OptimalDispatch, t: usize, e_ec: f64, e_res: f64, level: f64, params: &SystemParams) -> SlotDispatch {
    realize(&planned_command(plan, t), e_ec, e_res, level, params)
}

/// Day-ahead forecast-then-optimize controller.
pub struct ForecastMilpStrategy {
    pub forecasters: DayAheadForecasters,
    pub plan: Option<OptimalDispatch>,
    pub forecast_day: Option<DayProfile>,
}

impl ForecastMilpStrategy {
    pub fn new(forecasters: DayAheadForecasters) -> Self {
        Self { forecasters, plan: None, forecast_day: None }
    }
}

impl Strategy for ForecastMilpStrategy {
    fn name(&self) -> String {
        "forecast-milp".into()
    }

    fn begin_day(&mut self, ctx: &DayContext, params: &SystemParams) -> Result<()> {
        let (plan, day) = plan_day(&self.forecasters, ctx.past, params)?;
        self.plan = Some(plan);
        self.forecast_day = Some(day);
        Ok(())
    }

    fn decide(&mut self, obs: &SlotObservation, _params: &SystemParams) -> Result<SlotDispatch> {
        let plan = self.plan.as_ref().ok_or_else(|| Error::data("no plan for the day"))?;
        Ok(planned_command(plan, obs.slot))
    }
}

/// Replays a plan on a day and returns its realized cost. Handy for checks.
pub fn execute_plan(plan: &OptimalDispatch, day: &DayProfile, params: &SystemParams) -> Result<(f64, Vec<SlotDispatch>)> {
    let res = day.res_energy(params)?;
    let mut level = params.level_initial;
    let mut cost = 0.0;
    let mut out = Vec::with_capacity(day.len());
    for t in 0..day.len() {
        let d = execute_slot(plan, t, day.consumption[t], res[t], level, params);
        level = ess_level_update(level, &d, params)?;
        cost += slot_cost(&d, day.consumption[t], day.price[t], params)?;
        out.push(d);
    }
    Ok((cost, out))
}

/// One row per planned slot.
pub fn write_plan_csv<W: Write>(plan: &OptimalDispatch, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["slot", "res_to_load", "res_to_ess", "grid_to_ess", "ess_to_load", "ess_to_sell", "mode", "level"])?;
    for (t, d) in plan.dispatch.iter().enumerate() {
        w.write_record([
            (t + 1).to_string(),
            format!("{:?}", d.res_to_load),
            format!("{:?}", d.res_to_ess),
            format!("{:?}", d.grid_to_ess),
            format!("{:?}", d.ess_to_load),
            format!("{:?}", d.ess_to_sell),
            d.mode.as_binary().to_string(),
            format!("{:?}", plan.levels[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
