//! Branch-and-bound over the per-slot mode binaries.

use std::time::Instant;

use super::model::{var, MilpModel, ESS_LOAD, ESS_SELL, GRID_CHARGE, MODE, RES_CHARGE, RES_LOAD};
use super::simplex::{self, LpOutcome};
use super::{OptimalDispatch, SolverStats};
use crate::domain::{ess_level_update, slot_cost, EssMode, SlotDispatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    /// Nodes whose bound is not better than the incumbent by more than this are pruned.
    pub gap_tol: f64,
    /// A mode value within this distance of 0 or 1 counts as integral.
    pub int_tol: f64,
    pub node_limit: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, int_tol: 1e-9, node_limit: 200_000 }
    }
}

#[derive(Debug, Clone)]
struct Node {
    fixed: Vec<Option<bool>>,
    bound: f64,
}

/// Solves the model to within `tol` of the optimum.
pub fn solve_milp(model: &MilpModel, tol: f64) -> Result<OptimalDispatch> {
    solve_milp_with(model, &MilpOptions { gap_tol: tol, ..MilpOptions::default() })
}

/// Objective of the LP relaxation (modes continuous in `[0, 1]`).
pub fn solve_relaxation(model: &MilpModel) -> Result<f64> {
    match simplex::solve(&model.lp)? {
        LpOutcome::Optimal(s) => Ok(s.objective + model.objective_offset),
        LpOutcome::Infeasible => Err(Error::Solver("relaxation infeasible".into())),
        LpOutcome::Unbounded => Err(Error::Solver("relaxation unbounded".into())),
    }
}

pub fn solve_milp_with(model: &MilpModel, opts: &MilpOptions) -> Result<OptimalDispatch> {
    let started = Instant::now();
    let t_len = model.slots;
    let mut stats = SolverStats::default();

    let idle: Vec<SlotDispatch> =
        (0..t_len).map(|t| SlotDispatch::self_consumption(model.day.consumption[t], model.res[t])).collect();
    let mut incumbent = assemble(model, idle, stats)?;

    let mut open: Vec<Node> = Vec::new();
    let mut current = Some(Node { fixed: vec![None; t_len], bound: f64::NEG_INFINITY });
    let mut lp = model.lp.clone();

    loop {
        let node = match current.take() {
            Some(n) => n,
            None => {
                let Some(best) = open
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.bound.total_cmp(&b.1.bound).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                else {
                    break;
                };
                open.swap_remove(best)
            }
        };
        if node.bound >= incumbent.objective - opts.gap_tol {
            continue;
        }
        stats.nodes += 1;
        if stats.nodes > opts.node_limit {
            stats.wall_time_secs = started.elapsed().as_secs_f64();
            incumbent.stats = stats;
            return Err(Error::NodeLimit { limit: opts.node_limit, incumbent: Box::new(incumbent) });
        }

        for (t, fix) in node.fixed.iter().enumerate() {
            let j = var(t, MODE);
            let (lo, hi) = match fix {
                Some(true) => (1.0, 1.0),
                Some(false) => (0.0, 0.0),
                None => (0.0, 1.0),
            };
            lp.lower[j] = lo;
            lp.upper[j] = hi;
        }
        let sol = match simplex::solve(&lp)? {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded => return Err(Error::Solver("LP relaxation unbounded".into())),
        };
        stats.simplex_iterations += sol.iterations;
        let bound = sol.objective + model.objective_offset;
        if bound >= incumbent.objective - opts.gap_tol {
            continue;
        }

        let mut branch: Option<(usize, f64)> = None;
        for t in 0..t_len {
            if node.fixed[t].is_some() {
                continue;
            }
            let m = sol.x[var(t, MODE)];
            if m.min(1.0 - m) > opts.int_tol {
                let score = (m - 0.5).abs();
                if branch.map_or(true, |(_, s)| score < s) {
                    branch = Some((t, score));
                }
            }
        }

        match branch {
            None => {
                let dispatch = decode(model, &sol.x);
                let candidate = assemble(model, dispatch, stats)?;
                if candidate.objective < incumbent.objective {
                    incumbent = candidate;
                }
            }
            Some((t, _)) => {
                let up_first = sol.x[var(t, MODE)] >= 0.5;
                let child = |value: bool| {
                    let mut fixed = node.fixed.clone();
                    fixed[t] = Some(value);
                    Node { fixed, bound }
                };
                open.push(child(!up_first));
                current = Some(child(up_first));
            }
        }
    }

    stats.wall_time_secs = started.elapsed().as_secs_f64();
    incumbent.stats = stats;
    Ok(incumbent)
}

/// Turns an integral LP point into clean per-slot flows.
fn decode(model: &MilpModel, x: &[f64]) -> Vec<SlotDispatch> {
    (0..model.slots)
        .map(|t| {
            let v = |k| x[var(t, k)].max(0.0);
            let e_ec = model.day.consumption[t];
            let e_res = model.res[t];
            if x[var(t, MODE)] >= 0.5 {
                let res_to_load = v(RES_LOAD).min(e_ec).min(e_res);
                SlotDispatch {
                    res_to_load,
                    res_to_ess: v(RES_CHARGE).min(e_res - res_to_load),
                    grid_to_ess: v(GRID_CHARGE),
                    ess_to_load: 0.0,
                    ess_to_sell: 0.0,
                    mode: EssMode::Charge,
                }
            } else {
                let res_to_load = v(RES_LOAD).min(e_ec).min(e_res);
                SlotDispatch {
                    res_to_load,
                    res_to_ess: 0.0,
                    grid_to_ess: 0.0,
                    ess_to_load: v(ESS_LOAD).min(e_ec - res_to_load),
                    ess_to_sell: v(ESS_SELL),
                    mode: EssMode::Discharge,
                }
            }
        })
        .collect()
}

/// Validates a dispatch against the model and prices it slot by slot.
pub(crate) fn assemble(model: &MilpModel, dispatch: Vec<SlotDispatch>, stats: SolverStats) -> Result<OptimalDispatch> {
    let params = &model.params;
    let mut level = params.level_initial;
    let mut levels = Vec::with_capacity(dispatch.len());
    let mut objective = 0.0;
    for (t, d) in dispatch.iter().enumerate() {
        d.check_against(model.day.consumption[t], model.res[t], params)
            .map_err(|e| Error::Solver(format!("slot {}: {e}", t + 1)))?;
        level = ess_level_update(level, d, params).map_err(|e| Error::Solver(format!("slot {}: {e}", t + 1)))?;
        levels.push(level);
        objective += slot_cost(d, model.day.consumption[t], model.day.price[t], params)?;
    }
    let residual = (level - params.level_initial).abs();
    if residual > crate::domain::FEAS_TOL {
        return Err(Error::Solver(format!("end-of-day level off by {residual:.3e} kWh")));
    }
    Ok(OptimalDispatch { dispatch, levels, objective, stats, approximate: false })
}
