use std::fmt::Write as _;

use super::simplex::{LinearProgram, Row, Sense};
use crate::domain::{DayProfile, SystemParams};
use crate::error::{Error, Result};

/// Per-slot variable offsets inside the flat variable vector.
pub const RES_LOAD: usize = 0;
pub const RES_CHARGE: usize = 1;
pub const GRID_CHARGE: usize = 2;
pub const ESS_LOAD: usize = 3;
pub const ESS_SELL: usize = 4;
pub const LEVEL: usize = 5;
pub const MODE: usize = 6;
pub const VARS_PER_SLOT: usize = 7;

const VAR_NAMES: [&str; VARS_PER_SLOT] = ["res_load", "res_charge", "grid_charge", "ess_load", "ess_sell", "level", "mode"];

/// What a constraint row encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    LevelRecursion,
    ChargeCap,
    DischargeCap,
    ResSplit,
    /// Grid-to-load stays non-negative once the balance is substituted out.
    LoadCover,
}

/// The daily cost-minimization MILP of one home.
///
/// The balance equation is eliminated: grid-to-load is substituted into the
/// objective, and its non-negativity becomes a [`RowKind::LoadCover`] row. The
/// end-of-day level requirement is encoded as fixed bounds on the last level.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub slots: usize,
    pub lp: LinearProgram,
    /// Constant part of the objective, `sum E_EC * P`.
    pub objective_offset: f64,
    pub row_kinds: Vec<RowKind>,
    pub integer: Vec<bool>,
    pub day: DayProfile,
    pub params: SystemParams,
    pub res: Vec<f64>,
}

pub fn var(slot: usize, offset: usize) -> usize {
    slot * VARS_PER_SLOT + offset
}

/// Builds the model for one day of actuals (or forecasts).
pub fn build_day_model(day: &DayProfile, params: &SystemParams) -> Result<MilpModel> {
    params.validate()?;
    day.validate()?;
    let t_len = day.len();
    if t_len != params.slots_per_day {
        return Err(Error::Config(format!("day has {t_len} slots but parameters expect {}", params.slots_per_day)));
    }
    let res = day.res_energy(params)?;
    let eta = params.ess_efficiency;
    let n = t_len * VARS_PER_SLOT;
    let mut objective = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut integer = vec![false; n];
    let mut rows = Vec::with_capacity(5 * t_len);
    let mut row_kinds = Vec::with_capacity(5 * t_len);
    let mut offset = 0.0;

    for t in 0..t_len {
        let p = day.price[t];
        offset += day.consumption[t] * p;
        objective[var(t, RES_LOAD)] = -p;
        objective[var(t, GRID_CHARGE)] = p;
        objective[var(t, ESS_LOAD)] = -p;
        objective[var(t, ESS_SELL)] = -params.sell_ratio * p;

        if res[t] <= 0.0 {
            upper[var(t, RES_LOAD)] = 0.0;
            upper[var(t, RES_CHARGE)] = 0.0;
        }
        lower[var(t, LEVEL)] = params.level_min;
        upper[var(t, LEVEL)] = params.level_max;
        upper[var(t, MODE)] = 1.0;
        integer[var(t, MODE)] = true;

        // level_t - level_{t-1} - eta*(charges) + (discharges)/eta = 0
        let mut coeffs = vec![
            (var(t, LEVEL), 1.0),
            (var(t, RES_CHARGE), -eta),
            (var(t, GRID_CHARGE), -eta),
            (var(t, ESS_LOAD), 1.0 / eta),
            (var(t, ESS_SELL), 1.0 / eta),
        ];
        let rhs = if t == 0 {
            params.level_initial
        } else {
            coeffs.push((var(t - 1, LEVEL), -1.0));
            0.0
        };
        rows.push(Row { coeffs, sense: Sense::Eq, rhs });
        row_kinds.push(RowKind::LevelRecursion);

        rows.push(Row {
            coeffs: vec![(var(t, RES_CHARGE), 1.0), (var(t, GRID_CHARGE), 1.0), (var(t, MODE), -params.max_charge())],
            sense: Sense::Le,
            rhs: 0.0,
        });
        row_kinds.push(RowKind::ChargeCap);

        rows.push(Row {
            coeffs: vec![(var(t, ESS_LOAD), 1.0), (var(t, ESS_SELL), 1.0), (var(t, MODE), params.max_discharge())],
            sense: Sense::Le,
            rhs: params.max_discharge(),
        });
        row_kinds.push(RowKind::DischargeCap);

        rows.push(Row {
            coeffs: vec![(var(t, RES_LOAD), 1.0), (var(t, RES_CHARGE), 1.0)],
            sense: Sense::Le,
            rhs: res[t],
        });
        row_kinds.push(RowKind::ResSplit);

        rows.push(Row {
            coeffs: vec![(var(t, RES_LOAD), 1.0), (var(t, ESS_LOAD), 1.0)],
            sense: Sense::Le,
            rhs: day.consumption[t],
        });
        row_kinds.push(RowKind::LoadCover);
    }
    let last = var(t_len - 1, LEVEL);
    lower[last] = params.level_initial;
    upper[last] = params.level_initial;

    Ok(MilpModel {
        slots: t_len,
        lp: LinearProgram { objective, rows, lower, upper },
        objective_offset: offset,
        row_kinds,
        integer,
        day: day.clone(),
        params: *params,
        res,
    })
}

impl MilpModel {
    pub fn num_binaries(&self) -> usize {
        self.integer.iter().filter(|&&b| b).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.integer.len() - self.num_binaries()
    }

    pub fn count_rows(&self, kind: RowKind) -> usize {
        self.row_kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn var_name(&self, j: usize) -> String {
        format!("{}_{}", VAR_NAMES[j % VARS_PER_SLOT], j / VARS_PER_SLOT + 1)
    }

    /// Renders the model in CPLEX LP text format for cross-checking with external solvers.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, first: &mut bool, coeff: f64, name: &str| {
            if coeff == 0.0 {
                return;
            }
            let sign = if coeff < 0.0 { "-" } else if *first { "" } else { "+" };
            let _ = write!(out, " {sign} {} {name}", coeff.abs());
            *first = false;
        };
        let _ = writeln!(out, "\\ daily energy cost, constant offset {}", self.objective_offset);
        out.push_str("Minimize\n obj:");
        let mut first = true;
        for (j, &c) in self.lp.objective.iter().enumerate() {
            term(&mut out, &mut first, c, &self.var_name(j));
        }
        if first {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.lp.rows.iter().enumerate() {
            let _ = write!(out, " {:?}_{}:", self.row_kinds[i], i + 1);
            let mut first = true;
            for &(j, a) in &row.coeffs {
                term(&mut out, &mut first, a, &self.var_name(j));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for j in 0..self.lp.num_vars() {
            let (lo, hi) = (self.lp.lower[j], self.lp.upper[j]);
            if hi.is_finite() {
                let _ = writeln!(out, " {lo} <= {} <= {hi}", self.var_name(j));
            } else {
                let _ = writeln!(out, " {} >= {lo}", self.var_name(j));
            }
        }
        out.push_str("Binaries\n");
        for j in (0..self.lp.num_vars()).filter(|&j| self.integer[j]) {
            let _ = writeln!(out, " {}", self.var_name(j));
        }
        out.push_str("End\n");
        out
    }
}
