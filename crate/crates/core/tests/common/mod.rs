#![allow(dead_code)]

use hems_core::{DayProfile, EssMode, SlotDispatch, SystemParams};
use rand::Rng;

pub fn random_day<R: Rng>(rng: &mut R, slots: usize) -> DayProfile {
    let consumption = (0..slots).map(|_| rng.gen_range(0.0..1.5)).collect();
    let irradiation = (0..slots).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
    let price = (0..slots).map(|_| rng.gen_range(0.05..0.5)).collect();
    DayProfile::new(consumption, irradiation, price).unwrap()
}

/// A day shaped like a real one: dark nights, a PV hump at noon, an evening price peak.
pub fn shaped_day<R: Rng>(rng: &mut R) -> DayProfile {
    let consumption = (0..24)
        .map(|h| 0.3 + 0.6 * (-((h as f64 - 19.0) / 3.0).powi(2)).exp() + rng.gen_range(0.0..0.3))
        .collect();
    let cloud = rng.gen_range(0.3..1.0);
    let irradiation = (0..24)
        .map(|h| if (6..18).contains(&h) { cloud * (std::f64::consts::PI * (h as f64 - 6.0) / 12.0).sin() } else { 0.0 })
        .collect();
    let price = (0..24).map(|h| if (17..21).contains(&h) { 0.3 } else { 0.08 } + rng.gen_range(0.0..0.02)).collect();
    DayProfile::new(consumption, irradiation, price).unwrap()
}

/// A feasible dispatch in the canonical form of the signed encoding: PV charges the
/// storage before the grid does, and a discharge serves the load before selling.
/// Returns the dispatch with its consumption and PV output.
pub fn canonical_dispatch<R: Rng>(rng: &mut R, p: &SystemParams) -> (SlotDispatch, f64, f64) {
    let e_ec: f64 = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..3.0) };
    let e_res: f64 = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) };
    if rng.gen_bool(0.5) {
        let res_to_load = rng.gen_range(0.0..=1.0) * e_res.min(e_ec);
        let total = rng.gen_range(0.0..=1.0) * p.max_charge();
        let res_to_ess = (e_res - res_to_load).min(total);
        let d = SlotDispatch {
            res_to_load,
            res_to_ess,
            grid_to_ess: total - res_to_ess,
            ess_to_load: 0.0,
            ess_to_sell: 0.0,
            mode: EssMode::Charge,
        };
        (d, e_ec, e_res)
    } else {
        let res_to_load = e_res.min(e_ec);
        let total = rng.gen_range(0.0..=1.0) * p.max_discharge();
        let ess_to_load = total.min(e_ec - res_to_load);
        let d = SlotDispatch {
            res_to_load,
            res_to_ess: 0.0,
            grid_to_ess: 0.0,
            ess_to_load,
            ess_to_sell: total - ess_to_load,
            mode: EssMode::Discharge,
        };
        (d, e_ec, e_res)
    }
}
