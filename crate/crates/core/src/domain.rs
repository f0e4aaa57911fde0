//! Physical model of the home: storage dynamics and the cost of one slot.
//!
//! Every energy quantity is in kWh per slot, irradiation in kW/m² and prices in
//! abstract currency per kWh. Feasibility comparisons use [`FEAS_TOL`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance, in kWh, for every feasibility comparison.
pub const FEAS_TOL: f64 = 1e-9;

/// Physical and tariff constants of one home.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub ess_efficiency: f64,
    /// kW
    pub charge_rate: f64,
    /// kW
    pub discharge_rate: f64,
    /// kWh
    pub level_min: f64,
    /// kWh
    pub level_max: f64,
    /// kWh, also the required end-of-day level.
    pub level_initial: f64,
    /// m²
    pub panel_area: f64,
    pub res_efficiency: f64,
    /// Selling price as a fraction of the buying price.
    pub sell_ratio: f64,
    /// hours
    pub slot_duration: f64,
    pub slots_per_day: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            ess_efficiency: 0.9,
            charge_rate: 1.0,
            discharge_rate: 1.0,
            level_min: 0.5,
            level_max: 10.0,
            level_initial: 0.5,
            panel_area: 1.0,
            res_efficiency: 0.9,
            sell_ratio: 1.0,
            slot_duration: 1.0,
            slots_per_day: 24,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        frac("ess_efficiency", self.ess_efficiency)?;
        frac("res_efficiency", self.res_efficiency)?;
        frac("sell_ratio", self.sell_ratio)?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("charge_rate", self.charge_rate)?;
        positive("discharge_rate", self.discharge_rate)?;
        positive("slot_duration", self.slot_duration)?;
        if !(self.panel_area.is_finite() && self.panel_area >= 0.0) {
            return Err(Error::Config(format!("panel_area must be non-negative, got {}", self.panel_area)));
        }
        if self.slots_per_day == 0 {
            return Err(Error::Config("slots_per_day must be at least 1".into()));
        }
        if !(self.level_min <= self.level_initial && self.level_initial <= self.level_max)
            || !self.level_min.is_finite()
            || !self.level_max.is_finite()
        {
            return Err(Error::Config(format!(
                "level bounds violated: need {} <= {} <= {}",
                self.level_min, self.level_initial, self.level_max
            )));
        }
        Ok(())
    }

    /// Largest energy that may enter the storage in one slot.
    pub fn max_charge(&self) -> f64 {
        self.charge_rate * self.slot_duration
    }

    /// Largest energy that may leave the storage in one slot.
    pub fn max_discharge(&self) -> f64 {
        self.discharge_rate * self.slot_duration
    }
}

/// PV output of one slot.
pub fn res_energy(ghi: f64, params: &SystemParams) -> Result<f64> {
    if !ghi.is_finite() || ghi < 0.0 {
        return Err(Error::domain(format!("irradiation must be finite and non-negative, got {ghi}")));
    }
    Ok(ghi * params.panel_area * params.res_efficiency * params.slot_duration)
}

/// One day of aligned per-slot actuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    pub consumption: Vec<f64>,
    pub irradiation: Vec<f64>,
    pub price: Vec<f64>,
}

impl DayProfile {
    pub fn new(consumption: Vec<f64>, irradiation: Vec<f64>, price: Vec<f64>) -> Result<Self> {
        let day = Self { consumption, irradiation, price };
        day.validate()?;
        Ok(day)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.consumption.len();
        if n == 0 {
            return Err(Error::domain("day profile is empty"));
        }
        if self.irradiation.len() != n || self.price.len() != n {
            return Err(Error::domain(format!(
                "series lengths differ: consumption {n}, irradiation {}, price {}",
                self.irradiation.len(),
                self.price.len()
            )));
        }
        for (name, series) in [
            ("consumption", &self.consumption),
            ("irradiation", &self.irradiation),
            ("price", &self.price),
        ] {
            if let Some((i, v)) = series.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                return Err(Error::domain(format!("{name}[{i}] = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Checks the day against the slot count of `params`.
    pub fn validate_for(&self, params: &SystemParams) -> Result<()> {
        self.validate()?;
        if self.len() != params.slots_per_day {
            return Err(Error::domain(format!(
                "day has {} slots, parameters expect {}",
                self.len(),
                params.slots_per_day
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.consumption.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumption.is_empty()
    }

    /// PV output per slot.
    pub fn res_energy(&self, params: &SystemParams) -> Result<Vec<f64>> {
        self.irradiation.iter().map(|&g| res_energy(g, params)).collect()
    }

    pub fn max_price(&self) -> f64 {
        self.price.iter().copied().fold(0.0, f64::max)
    }
}

/// Charge (`1`) or discharge (`0`) mode of the storage during a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EssMode {
    Charge,
    Discharge,
}

impl EssMode {
    pub fn as_binary(self) -> u8 {
        match self {
            EssMode::Charge => 1,
            EssMode::Discharge => 0,
        }
    }
}

/// The five controllable energy flows of a slot plus the storage mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotDispatch {
    pub res_to_load: f64,
    pub res_to_ess: f64,
    pub grid_to_ess: f64,
    pub ess_to_load: f64,
    pub ess_to_sell: f64,
    pub mode: EssMode,
}

impl Default for SlotDispatch {
    fn default() -> Self {
        Self::idle()
    }
}

impl SlotDispatch {
    /// No storage interaction and no PV use.
    pub fn idle() -> Self {
        Self {
            res_to_load: 0.0,
            res_to_ess: 0.0,
            grid_to_ess: 0.0,
            ess_to_load: 0.0,
            ess_to_sell: 0.0,
            mode: EssMode::Charge,
        }
    }

    /// Idle storage with PV serving as much of the load as it can.
    pub fn self_consumption(e_ec: f64, e_res: f64) -> Self {
        Self { res_to_load: e_ec.min(e_res).max(0.0), ..Self::idle() }
    }

    pub fn charge_total(&self) -> f64 {
        self.res_to_ess + self.grid_to_ess
    }

    pub fn discharge_total(&self) -> f64 {
        self.ess_to_load + self.ess_to_sell
    }

    /// Grid energy serving the load, closing the balance `E_EC = grid + ess + res`.
    pub fn grid_to_load(&self, e_ec: f64) -> f64 {
        e_ec - self.ess_to_load - self.res_to_load
    }

    /// Signed storage action: positive charges, negative discharges.
    pub fn signed(&self) -> SignedEssAction {
        match self.mode {
            EssMode::Charge => SignedEssAction(self.charge_total()),
            EssMode::Discharge => SignedEssAction(-self.discharge_total()),
        }
    }

    /// Expands a signed action into flows, routing PV into the storage before the grid
    /// when charging, and PV entirely to the load with load-before-sale when discharging.
    pub fn from_signed(action: SignedEssAction, res_load: f64, e_ec: f64, e_res: f64) -> Self {
        let e_cd = action.0;
        if e_cd >= 0.0 {
            let res_to_ess = (e_res - res_load).max(0.0).min(e_cd);
            Self {
                res_to_load: res_load,
                res_to_ess,
                grid_to_ess: e_cd - res_to_ess,
                ess_to_load: 0.0,
                ess_to_sell: 0.0,
                mode: EssMode::Charge,
            }
        } else {
            let res_to_load = e_ec.min(e_res).max(0.0);
            let ess_to_load = (-e_cd).min(e_ec - res_to_load);
            Self {
                res_to_load,
                res_to_ess: 0.0,
                grid_to_ess: 0.0,
                ess_to_load,
                ess_to_sell: -e_cd - ess_to_load,
                mode: EssMode::Discharge,
            }
        }
    }

    /// Checks signs and rate caps, and that the slot does not both charge and discharge.
    pub fn check(&self, params: &SystemParams) -> Result<()> {
        let flows = [
            ("res_to_load", self.res_to_load),
            ("res_to_ess", self.res_to_ess),
            ("grid_to_ess", self.grid_to_ess),
            ("ess_to_load", self.ess_to_load),
            ("ess_to_sell", self.ess_to_sell),
        ];
        for (name, v) in flows {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} is not finite")));
            }
            if v < -FEAS_TOL {
                return Err(Error::Infeasible { what: format!("{name} negative"), overshoot: -v });
            }
        }
        match self.mode {
            EssMode::Charge if self.discharge_total() > FEAS_TOL => {
                return Err(Error::Infeasible {
                    what: "discharge during charge mode".into(),
                    overshoot: self.discharge_total(),
                })
            }
            EssMode::Discharge if self.charge_total() > FEAS_TOL => {
                return Err(Error::Infeasible {
                    what: "charge during discharge mode".into(),
                    overshoot: self.charge_total(),
                })
            }
            _ => {}
        }
        let over = self.charge_total() - params.max_charge();
        if over > FEAS_TOL {
            return Err(Error::Infeasible { what: "charge rate exceeded".into(), overshoot: over });
        }
        let over = self.discharge_total() - params.max_discharge();
        if over > FEAS_TOL {
            return Err(Error::Infeasible { what: "discharge rate exceeded".into(), overshoot: over });
        }
        Ok(())
    }

    /// [`check`](Self::check) plus the PV split and the balance against realized consumption.
    pub fn check_against(&self, e_ec: f64, e_res: f64, params: &SystemParams) -> Result<()> {
        self.check(params)?;
        let over = self.res_to_load + self.res_to_ess - e_res;
        if over > FEAS_TOL {
            return Err(Error::Infeasible { what: "PV use exceeds PV output".into(), overshoot: over });
        }
        let grid = self.grid_to_load(e_ec);
        if grid < -FEAS_TOL {
            return Err(Error::Infeasible { what: "supply exceeds demand".into(), overshoot: -grid });
        }
        Ok(())
    }
}

/// Storage energy level after a slot.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EssState {
    pub level: f64,
}

impl EssState {
    pub fn new(level: f64, params: &SystemParams) -> Result<Self> {
        check_level(level, params)?;
        Ok(Self { level })
    }

    pub fn initial(params: &SystemParams) -> Self {
        Self { level: params.level_initial }
    }
}

/// Net storage flow of a slot: `>= 0` charges, `< 0` discharges.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SignedEssAction(pub f64);

impl SignedEssAction {
    pub fn new(e_cd: f64, params: &SystemParams) -> Result<Self> {
        if !e_cd.is_finite() {
            return Err(Error::domain("storage action is not finite"));
        }
        if e_cd > params.max_charge() + FEAS_TOL {
            return Err(Error::Infeasible { what: "charge rate exceeded".into(), overshoot: e_cd - params.max_charge() });
        }
        if -e_cd > params.max_discharge() + FEAS_TOL {
            return Err(Error::Infeasible {
                what: "discharge rate exceeded".into(),
                overshoot: -e_cd - params.max_discharge(),
            });
        }
        Ok(Self(e_cd))
    }

    /// Level after applying the action, charging losses on the way in and out.
    pub fn apply(self, level: f64, params: &SystemParams) -> f64 {
        if self.0 >= 0.0 {
            level + self.0 * params.ess_efficiency
        } else {
            level + self.0 / params.ess_efficiency
        }
    }
}

fn check_level(level: f64, params: &SystemParams) -> Result<()> {
    if !level.is_finite() {
        return Err(Error::domain("storage level is not finite"));
    }
    if level < params.level_min - FEAS_TOL {
        return Err(Error::Infeasible { what: "level below minimum".into(), overshoot: params.level_min - level });
    }
    if level > params.level_max + FEAS_TOL {
        return Err(Error::Infeasible { what: "level above maximum".into(), overshoot: level - params.level_max });
    }
    Ok(())
}

/// Storage level after dispatching `d` from `level`.
pub fn ess_level_update(level: f64, d: &SlotDispatch, params: &SystemParams) -> Result<f64> {
    let eta = params.ess_efficiency;
    let next = level + d.charge_total() * eta - d.discharge_total() / eta;
    check_level(next, params)?;
    Ok(next)
}

/// Cost of a slot: grid purchases minus storage sales.
pub fn slot_cost(d: &SlotDispatch, e_ec: f64, price: f64, params: &SystemParams) -> Result<f64> {
    if !e_ec.is_finite() || !price.is_finite() {
        return Err(Error::domain("consumption and price must be finite"));
    }
    let grid_to_load = d.grid_to_load(e_ec);
    if grid_to_load < -FEAS_TOL {
        return Err(Error::Infeasible { what: "supply exceeds demand without sale".into(), overshoot: -grid_to_load });
    }
    Ok((grid_to_load + d.grid_to_ess) * price - d.ess_to_sell * params.sell_ratio * price)
}

/// Cost of a slot expressed through the signed storage action and PV-to-load.
///
/// When charging, PV not serving the load charges the storage first and the grid
/// covers the rest. When discharging, all PV serves the load and storage covers the
/// residual load; any surplus is sold.
pub fn slot_cost_signed(
    action: SignedEssAction,
    e_res_load: f64,
    e_ec: f64,
    e_res: f64,
    price: f64,
    params: &SystemParams,
) -> Result<f64> {
    let e_cd = action.0;
    if ![e_cd, e_res_load, e_ec, e_res, price].iter().all(|v| v.is_finite()) {
        return Err(Error::domain("signed cost inputs must be finite"));
    }
    if e_cd >= 0.0 {
        if e_res_load > e_ec + FEAS_TOL {
            return Err(Error::Infeasible {
                what: "PV to load exceeds consumption".into(),
                overshoot: e_res_load - e_ec,
            });
        }
        let rc = (e_res - e_res_load).min(e_cd);
        Ok((e_ec - e_res_load + e_cd - rc) * price)
    } else {
        let residual_load = (e_ec - e_res).max(0.0);
        if residual_load >= -e_cd {
            Ok((residual_load + e_cd) * price)
        } else {
            Ok((residual_load + e_cd) * params.sell_ratio * price)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn res_energy_examples() {
        let p = SystemParams::default();
        assert!(close(res_energy(1.0, &p).unwrap(), 0.9));
        assert_eq!(res_energy(0.0, &p).unwrap(), 0.0);
        let p2 = SystemParams { panel_area: 2.0, res_efficiency: 0.8, slot_duration: 0.5, ..p };
        assert!(close(res_energy(0.35, &p2).unwrap(), 0.28));
        assert!(matches!(res_energy(-0.1, &p), Err(Error::Domain(_))));
        assert!(matches!(res_energy(f64::NAN, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn level_update_examples() {
        let p = SystemParams::default();
        let charge = SlotDispatch { res_to_ess: 0.4, grid_to_ess: 0.6, ..SlotDispatch::idle() };
        assert!(close(ess_level_update(0.5, &charge, &p).unwrap(), 1.4));
        let discharge =
            SlotDispatch { ess_to_load: 0.5, ess_to_sell: 0.31, mode: EssMode::Discharge, ..SlotDispatch::idle() };
        assert!(close(ess_level_update(1.4, &discharge, &p).unwrap(), 0.5));
        let too_much = SlotDispatch { ess_to_load: 0.9, mode: EssMode::Discharge, ..SlotDispatch::idle() };
        match ess_level_update(0.5, &too_much, &p) {
            Err(Error::Infeasible { overshoot, .. }) => assert!(close(overshoot, 1.0)),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn slot_cost_examples() {
        let p = SystemParams::default();
        assert!(close(slot_cost(&SlotDispatch::idle(), 2.0, 0.1, &p).unwrap(), 0.2));
        let covered = SlotDispatch { res_to_load: 0.5, ess_to_load: 0.5, mode: EssMode::Discharge, ..SlotDispatch::idle() };
        assert!(close(slot_cost(&covered, 1.0, 0.1, &p).unwrap(), 0.0));
        let buy = SlotDispatch { grid_to_ess: 1.0, ..SlotDispatch::idle() };
        assert!(close(slot_cost(&buy, 0.0, 0.2, &p).unwrap(), 0.2));
        let sell = SlotDispatch { ess_to_sell: 1.0, mode: EssMode::Discharge, ..SlotDispatch::idle() };
        assert!(close(slot_cost(&sell, 0.0, 0.2, &p).unwrap(), -0.2));
        let oversupply = SlotDispatch { res_to_load: 1.5, ..SlotDispatch::idle() };
        assert!(matches!(slot_cost(&oversupply, 1.0, 0.1, &p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn signed_cost_examples() {
        let p = SystemParams::default();
        let c = slot_cost_signed(SignedEssAction(0.4), 0.5, 1.0, 1.0, 0.1, &p).unwrap();
        assert!(close(c, 0.05));
        let c = slot_cost_signed(SignedEssAction(-0.5), 0.0, 1.0, 0.2, 0.1, &p).unwrap();
        assert!(close(c, 0.03));
        let c = slot_cost_signed(SignedEssAction(-0.5), 0.0, 0.2, 0.1, 0.1, &p).unwrap();
        assert!(close(c, -0.04));
        assert!(slot_cost_signed(SignedEssAction(f64::INFINITY), 0.0, 0.2, 0.1, 0.1, &p).is_err());
    }

    #[test]
    fn signed_action_bounds() {
        let p = SystemParams::default();
        assert!(SignedEssAction::new(1.0, &p).is_ok());
        assert!(SignedEssAction::new(-1.0, &p).is_ok());
        assert!(SignedEssAction::new(1.01, &p).is_err());
        assert!(SignedEssAction::new(-1.01, &p).is_err());
        assert!(close(SignedEssAction(1.0).apply(0.5, &p), 1.4));
        assert!(close(SignedEssAction(-0.81).apply(1.4, &p), 0.5));
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::default().validate().is_ok());
        let bad = SystemParams { level_initial: 11.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SystemParams { sell_ratio: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SystemParams { slots_per_day: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_exclusivity_is_checked() {
        let p = SystemParams::default();
        let both = SlotDispatch { grid_to_ess: 0.2, ess_to_load: 0.2, ..SlotDispatch::idle() };
        assert!(both.check(&p).is_err());
        let over = SlotDispatch { grid_to_ess: 1.2, ..SlotDispatch::idle() };
        assert!(over.check(&p).is_err());
    }

    #[test]
    fn day_profile_validation() {
        assert!(DayProfile::new(vec![1.0, 2.0], vec![0.0, 0.5], vec![0.1, 0.2]).is_ok());
        assert!(DayProfile::new(vec![1.0], vec![0.0, 0.5], vec![0.1, 0.2]).is_err());
        assert!(DayProfile::new(vec![-1.0], vec![0.0], vec![0.1]).is_err());
        assert!(DayProfile::new(vec![f64::NAN], vec![0.0], vec![0.1]).is_err());
    }
}
