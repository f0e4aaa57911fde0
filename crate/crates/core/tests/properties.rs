//! Properties of the physical model over random inputs.

use hems_core::{ess_level_update, slot_cost, slot_cost_signed, EssMode, SignedEssAction, SlotDispatch, SystemParams};
use proptest::prelude::*;

/// Canonical feasible dispatch from unit fractions; see `common::canonical_dispatch`.
fn dispatch() -> impl Strategy<Value = (SlotDispatch, f64, f64)> {
    (any::<bool>(), 0.0..3.0f64, prop_oneof![Just(0.0), 0.0..2.0f64], 0.0..=1.0f64, 0.0..=1.0f64).prop_map(
        |(charge, e_ec, e_res, f, g)| {
            let p = SystemParams::default();
            let d = if charge {
                let res_to_load = f * e_res.min(e_ec);
                let total = g * p.max_charge();
                let res_to_ess = (e_res - res_to_load).min(total);
                SlotDispatch { res_to_load, res_to_ess, grid_to_ess: total - res_to_ess, ess_to_load: 0.0, ess_to_sell: 0.0, mode: EssMode::Charge }
            } else {
                let res_to_load = e_res.min(e_ec);
                let total = g * p.max_discharge();
                let ess_to_load = total.min(e_ec - res_to_load);
                SlotDispatch { res_to_load, res_to_ess: 0.0, grid_to_ess: 0.0, ess_to_load, ess_to_sell: total - ess_to_load, mode: EssMode::Discharge }
            };
            (d, e_ec, e_res)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn flow_and_signed_costs_agree((d, e_ec, e_res) in dispatch(), price in 0.0..1.0f64, sell in 0.1..=1.0f64) {
        let p = SystemParams { sell_ratio: sell, ..SystemParams::default() };
        d.check_against(e_ec, e_res, &p).unwrap();
        let a = slot_cost(&d, e_ec, price, &p).unwrap();
        let b = slot_cost_signed(d.signed(), d.res_to_load, e_ec, e_res, price, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "flow cost {a} vs signed cost {b} for {d:?}");
    }

    #[test]
    fn signed_expansion_is_feasible_and_exclusive(
        e_cd in -1.0..=1.0f64, e_ec in 0.0..3.0f64, e_res in 0.0..2.0f64, f in 0.0..=1.0f64,
    ) {
        let p = SystemParams::default();
        let d = SlotDispatch::from_signed(SignedEssAction(e_cd), f * e_ec.min(e_res), e_ec, e_res);
        prop_assert!(!(d.charge_total() > 0.0 && d.discharge_total() > 0.0));
        d.check_against(e_ec, e_res, &p).unwrap();
        prop_assert!((d.signed().0 - e_cd).abs() <= 1e-12);
    }

    #[test]
    fn charging_then_discharging_the_same_stored_energy_returns_to_start(
        charges in proptest::collection::vec(0.0..=1.0f64, 1..10),
    ) {
        // Charge a sequence, then discharge exactly what was stored, slot by slot.
        let p = SystemParams::default();
        let eta = p.ess_efficiency;
        let mut level = p.level_initial;
        let mut stored = 0.0;
        for &c in &charges {
            let d = SlotDispatch { grid_to_ess: c, ..SlotDispatch::idle() };
            level = ess_level_update(level, &d, &p).unwrap();
            stored += c * eta;
        }
        while stored > 0.0 {
            let out = (stored * eta).min(p.max_discharge());
            let d = SlotDispatch { ess_to_sell: out, mode: EssMode::Discharge, ..SlotDispatch::idle() };
            level = ess_level_update(level, &d, &p).unwrap();
            stored -= out / eta;
            if stored < 1e-12 { break; }
        }
        prop_assert!((level - p.level_initial).abs() <= 1e-9);
    }
}
