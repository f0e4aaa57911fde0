//! Exhaustive grid search over small days, used to validate the exact solver.
//!
//! Storage amounts in all but the last slot are multiples of `grid`, so the level
//! after any prefix is determined by the number of grid steps charged and
//! discharged so far. Enumerating plans therefore reduces to a walk over that
//! lattice, keeping the cheapest prefix per lattice point. The last slot takes
//! whatever continuous amount returns the level to its initial value. Within a
//! slot the flow split is enumerated on the same grid, plus the boundary values of
//! each range.

use std::collections::BTreeMap;
use std::time::Instant;

use super::{OptimalDispatch, SolverStats};
use crate::domain::{ess_level_update, slot_cost, DayProfile, EssMode, SlotDispatch, SystemParams, FEAS_TOL};
use crate::error::{Error, Result};

pub const ORACLE_MAX_SLOTS: usize = 6;

type Lattice = (i64, i64);

struct Slot<'a> {
    e_ec: f64,
    e_res: f64,
    price: f64,
    params: &'a SystemParams,
    grid: f64,
}

impl Slot<'_> {
    /// Grid points in `[0, hi]` plus `hi` itself.
    fn candidates(&self, hi: f64) -> Vec<f64> {
        let hi = hi.max(0.0);
        let steps = (hi / self.grid + 1e-9).floor() as i64;
        let mut v: Vec<f64> = (0..=steps).map(|k| k as f64 * self.grid).filter(|&x| x <= hi).collect();
        if v.last().map_or(true, |&x| hi - x > 1e-12) {
            v.push(hi);
        }
        v
    }

    fn cost(&self, d: &SlotDispatch) -> f64 {
        slot_cost(d, self.e_ec, self.price, self.params).unwrap_or(f64::INFINITY)
    }

    fn best_charge(&self, amount: f64) -> (f64, SlotDispatch) {
        let mut best = (f64::INFINITY, SlotDispatch::idle());
        for rc in self.candidates(amount.min(self.e_res)) {
            for rl in self.candidates((self.e_res - rc).min(self.e_ec)) {
                let d = SlotDispatch {
                    res_to_load: rl,
                    res_to_ess: rc,
                    grid_to_ess: (amount - rc).max(0.0),
                    ess_to_load: 0.0,
                    ess_to_sell: 0.0,
                    mode: EssMode::Charge,
                };
                let c = self.cost(&d);
                if c < best.0 {
                    best = (c, d);
                }
            }
        }
        best
    }

    fn best_discharge(&self, amount: f64) -> (f64, SlotDispatch) {
        let mut best = (f64::INFINITY, SlotDispatch { mode: EssMode::Discharge, ..SlotDispatch::idle() });
        for dl in self.candidates(amount.min(self.e_ec)) {
            for rl in self.candidates(self.e_res.min(self.e_ec - dl)) {
                let d = SlotDispatch {
                    res_to_load: rl,
                    res_to_ess: 0.0,
                    grid_to_ess: 0.0,
                    ess_to_load: dl,
                    ess_to_sell: (amount - dl).max(0.0),
                    mode: EssMode::Discharge,
                };
                let c = self.cost(&d);
                if c < best.0 {
                    best = (c, d);
                }
            }
        }
        best
    }
}

/// Best plan among grid-discretized plans. The result is approximate: its cost is an
/// upper bound on the true optimum.
pub fn brute_force_oracle(day: &DayProfile, params: &SystemParams, grid: f64) -> Result<OptimalDispatch> {
    let started = Instant::now();
    params.validate()?;
    day.validate()?;
    let t_len = day.len();
    if t_len > ORACLE_MAX_SLOTS {
        return Err(Error::Resource(format!("oracle limited to {ORACLE_MAX_SLOTS} slots, got {t_len}")));
    }
    if !(grid.is_finite() && grid > 0.0) {
        return Err(Error::domain(format!("grid must be positive, got {grid}")));
    }
    let eta = params.ess_efficiency;
    let res = day.res_energy(params)?;
    let slots: Vec<Slot> = (0..t_len)
        .map(|t| Slot { e_ec: day.consumption[t], e_res: res[t], price: day.price[t], params, grid })
        .collect();
    let level_of = |(kc, kd): Lattice| params.level_initial + eta * grid * kc as f64 - grid * kd as f64 / eta;
    let in_bounds = |l: f64| l >= params.level_min - FEAS_TOL && l <= params.level_max + FEAS_TOL;
    let max_c = (params.max_charge() / grid + 1e-9).floor() as i64;
    let max_d = (params.max_discharge() / grid + 1e-9).floor() as i64;

    // layers[t] maps a lattice point after slot t to (prefix cost, predecessor, slot flows)
    let mut layers: Vec<BTreeMap<Lattice, (f64, Lattice, SlotDispatch)>> = Vec::with_capacity(t_len);
    let mut frontier: BTreeMap<Lattice, f64> = BTreeMap::from([((0, 0), 0.0)]);
    let mut evaluated = 0usize;

    for slot in slots.iter().take(t_len - 1) {
        let charge: Vec<(f64, SlotDispatch)> = (0..=max_c).map(|k| slot.best_charge(k as f64 * grid)).collect();
        let discharge: Vec<(f64, SlotDispatch)> = (0..=max_d).map(|k| slot.best_discharge(k as f64 * grid)).collect();
        let mut layer: BTreeMap<Lattice, (f64, Lattice, SlotDispatch)> = BTreeMap::new();
        for (&state, &prefix) in &frontier {
            let moves = charge
                .iter()
                .enumerate()
                .map(|(k, opt)| ((state.0 + k as i64, state.1), opt))
                .chain(discharge.iter().enumerate().map(|(k, opt)| ((state.0, state.1 + k as i64), opt)));
            for (next, (cost, d)) in moves {
                evaluated += 1;
                if !cost.is_finite() || !in_bounds(level_of(next)) {
                    continue;
                }
                let total = prefix + cost;
                let entry = layer.entry(next).or_insert((f64::INFINITY, state, *d));
                if total < entry.0 {
                    *entry = (total, state, *d);
                }
            }
        }
        frontier = layer.iter().map(|(&k, v)| (k, v.0)).collect();
        layers.push(layer);
    }

    let last = &slots[t_len - 1];
    let mut best: Option<(f64, Lattice, SlotDispatch)> = None;
    for (&state, &prefix) in &frontier {
        let delta = params.level_initial - level_of(state);
        let mut options = Vec::with_capacity(2);
        if delta >= -1e-12 {
            let c = delta.max(0.0) / eta;
            if c <= params.max_charge() + FEAS_TOL {
                options.push(last.best_charge(c.min(params.max_charge())));
            }
        }
        if delta <= 1e-12 {
            let d = (-delta).max(0.0) * eta;
            if d <= params.max_discharge() + FEAS_TOL {
                options.push(last.best_discharge(d.min(params.max_discharge())));
            }
        }
        for (cost, d) in options {
            evaluated += 1;
            let total = prefix + cost;
            if total.is_finite() && best.as_ref().map_or(true, |b| total < b.0) {
                best = Some((total, state, d));
            }
        }
    }
    let Some((_, mut state, last_dispatch)) = best else {
        return Err(Error::Solver("no grid plan satisfies the end-of-day level".into()));
    };

    let mut dispatch = vec![last_dispatch];
    for layer in layers.iter().rev() {
        let (_, prev, d) = layer[&state];
        dispatch.push(d);
        state = prev;
    }
    dispatch.reverse();

    let mut level = params.level_initial;
    let mut levels = Vec::with_capacity(t_len);
    let mut objective = 0.0;
    for (t, d) in dispatch.iter().enumerate() {
        level = ess_level_update(level, d, params)?;
        levels.push(level);
        objective += slot_cost(d, day.consumption[t], day.price[t], params)?;
    }
    let stats = SolverStats { nodes: evaluated, simplex_iterations: 0, wall_time_secs: started.elapsed().as_secs_f64() };
    Ok(OptimalDispatch { dispatch, levels, objective, stats, approximate: true })
}
