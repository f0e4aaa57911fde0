//! Exact daily cost minimization by branch-and-bound over a simplex relaxation,
//! with a grid-search oracle for small days.

mod branch;
mod model;
mod oracle;
pub mod simplex;

use serde::{Deserialize, Serialize};

pub use branch::{solve_milp, solve_milp_with, solve_relaxation, MilpOptions};
pub use model::{build_day_model, var, MilpModel, RowKind, VARS_PER_SLOT};
pub use oracle::{brute_force_oracle, ORACLE_MAX_SLOTS};

use crate::domain::{DayProfile, SlotDispatch, SystemParams};
use crate::error::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: usize,
    pub simplex_iterations: usize,
    pub wall_time_secs: f64,
}

/// A day plan with its level trajectory and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalDispatch {
    pub dispatch: Vec<SlotDispatch>,
    /// Level after each slot.
    pub levels: Vec<f64>,
    pub objective: f64,
    pub stats: SolverStats,
    /// Set when the plan comes from the grid oracle rather than the exact solver.
    pub approximate: bool,
}

impl OptimalDispatch {
    /// Level before slot `t` (0-based), starting from the initial level.
    pub fn level_before(&self, t: usize, params: &SystemParams) -> f64 {
        if t == 0 {
            params.level_initial
        } else {
            self.levels[t - 1]
        }
    }
}

/// Builds and solves the day model with the default tolerance.
pub fn optimize_day(day: &DayProfile, params: &SystemParams) -> Result<OptimalDispatch> {
    let model = build_day_model(day, params)?;
    solve_milp(&model, MilpOptions::default().gap_tol)
}
