mod common;

use common::shaped_day;
use hems_core::data::SeriesKind;
use hems_core::forecast::{fit, ForecastConfig, SeasonalNaive};
use hems_core::imitation::*;
use hems_core::milp::{brute_force_oracle, optimize_day};
use hems_core::{ess_level_update, DayProfile, EssMode, Error, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick() -> ImitationConfig {
    ImitationConfig { hidden: vec![16, 16], epochs: 3, ..ImitationConfig::default() }
}

#[test]
fn one_sample_per_slot() {
    let p = SystemParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let days: Vec<_> = (0..30).map(|_| shaped_day(&mut rng)).collect();
    let data = generate_dataset(&days, &p).unwrap();
    assert_eq!(data.len(), 720);
    assert!(data.skipped_days.is_empty());
    for k in 0..4 {
        assert_eq!(data.head(k).len(), 720);
    }
}

#[test]
fn dark_day_has_no_pv_labels() {
    let p = SystemParams::default();
    let mut day = shaped_day(&mut ChaCha8Rng::seed_from_u64(2));
    day.irradiation = vec![0.0; 24];
    let data = generate_dataset(&[day], &p).unwrap();
    assert!(data.samples.iter().all(|s| s.labels[0] == 0.0));
}

#[test]
fn toy_labels_match_the_validated_optimum() {
    let p = SystemParams { slots_per_day: 4, ..SystemParams::default() };
    let day = DayProfile::new(vec![1.0; 4], vec![0.0, 1.0, 1.0, 0.0], vec![0.1, 0.1, 0.3, 0.3]).unwrap();
    let plan = optimize_day(&day, &p).unwrap();
    let oracle = brute_force_oracle(&day, &p, 0.05).unwrap();
    assert!(plan.objective <= oracle.objective + 1e-6);
    let data = generate_dataset(&[day.clone()], &p).unwrap();
    let mut level = p.level_initial;
    for (t, s) in data.samples.iter().enumerate() {
        let d = plan.dispatch[t];
        assert_eq!(s.labels, [d.res_to_load, d.grid_to_ess, d.ess_to_load, d.ess_to_sell]);
        assert_eq!(s.input, features(day.consumption[t], day.irradiation[t], level, day.price[t], t));
        level = ess_level_update(level, &d, &p).unwrap();
    }
}

#[test]
fn dataset_csv_round_trip() {
    let p = SystemParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let days: Vec<_> = (0..3).map(|_| shaped_day(&mut rng)).collect();
    let data = generate_dataset(&days, &p).unwrap();
    let mut buf = Vec::new();
    write_dataset_csv(&data, &mut buf).unwrap();
    let back = read_dataset_csv(buf.as_slice()).unwrap();
    assert_eq!(back.samples, data.samples);
    assert!(matches!(read_dataset_csv("a,b\n1,2\n".as_bytes()), Err(Error::Data(_))));
}

#[test]
fn empty_dataset_is_a_data_error() {
    let err = train_heads(&LabeledDataset::default(), &quick(), [1, 2, 3, 4]).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}

#[test]
fn training_is_deterministic() {
    let p = SystemParams::default();
    let data = generate_dataset(&[shaped_day(&mut ChaCha8Rng::seed_from_u64(4))], &p).unwrap();
    let (a, ca) = train_heads(&data, &quick(), [1, 2, 3, 4]).unwrap();
    let (b, cb) = train_heads(&data, &quick(), [1, 2, 3, 4]).unwrap();
    assert_eq!(ca, cb);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.params(), y.params());
    }
}

#[test]
fn silent_heads_leave_the_storage_alone() {
    let p = SystemParams::default();
    let d = arbitrate(HeadOutputs::default(), 0.6, 1.0, 3.0, &p);
    assert_eq!(d.mode, EssMode::Charge);
    assert_eq!((d.charge_total(), d.discharge_total()), (p.max_charge().min(1.0), 0.0));
    // With the storage full the PV has nowhere to go but the load, the rest is wasted.
    let d = arbitrate(HeadOutputs::default(), 0.6, 1.0, p.level_max, &p);
    assert_eq!((d.res_to_load, d.charge_total(), d.discharge_total()), (0.6, 0.0, 0.0));
    // Without PV nothing moves.
    let d = arbitrate(HeadOutputs::default(), 0.6, 0.0, 3.0, &p);
    assert_eq!((d.res_to_load, d.charge_total(), d.discharge_total()), (0.0, 0.0, 0.0));
}

#[test]
fn oversized_charge_is_clamped_to_the_rate() {
    let p = SystemParams::default();
    let h = HeadOutputs { grid_to_ess: 2.0, ..HeadOutputs::default() };
    let d = arbitrate(h, 1.0, 0.0, 1.0, &p);
    assert!((d.charge_total() - p.max_charge()).abs() < 1e-12);
    let h = HeadOutputs { ess_to_load: 2.0, ess_to_sell: 2.0, ..HeadOutputs::default() };
    let d = arbitrate(h, 0.3, 0.0, 9.0, &p);
    assert!((d.discharge_total() - p.max_discharge()).abs() < 1e-12);
    assert!((d.ess_to_load - 0.3).abs() < 1e-12);
}

#[test]
fn arbitration_is_always_feasible() {
    let p = SystemParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let wild = |rng: &mut ChaCha8Rng| match rng.gen_range(0..10) {
        0 => f64::NAN,
        1 => -rng.gen_range(0.0..5.0),
        2 => f64::INFINITY,
        _ => rng.gen_range(0.0..3.0),
    };
    for _ in 0..100_000 {
        let h = HeadOutputs {
            res_to_load: wild(&mut rng),
            grid_to_ess: wild(&mut rng),
            ess_to_load: wild(&mut rng),
            ess_to_sell: wild(&mut rng),
        };
        let (e_ec, e_res) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
        let level = rng.gen_range(p.level_min..=p.level_max);
        let d = arbitrate(h, e_ec, e_res, level, &p);
        d.check_against(e_ec, e_res, &p).unwrap();
        let next = ess_level_update(level, &d, &p).unwrap();
        assert!(next >= p.level_min - 1e-9 && next <= p.level_max + 1e-9);
        assert_eq!(d, arbitrate(h, e_ec, e_res, level, &p));
    }
}

#[test]
fn control_step_is_deterministic_and_saves() {
    let p = SystemParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let days: Vec<_> = (0..9).map(|_| shaped_day(&mut rng)).collect();
    let history: Vec<f64> = days.iter().flat_map(|d| d.consumption.clone()).collect();
    let data = generate_dataset(&days, &p).unwrap();
    let fc = ForecastConfig { hidden: 4, layers: 1, epochs: 1, ..ForecastConfig::default() };
    let forecaster = fit(&history, 1, SeriesKind::Consumption, &fc, 1).unwrap();
    let c = train_controller(&data, forecaster, &quick(), [1, 2, 3, 4], &p).unwrap();
    let a = c.control_step(&history, 0.4, 2.0, 0.1, 12).unwrap();
    assert_eq!(a, c.control_step(&history, 0.4, 2.0, 0.1, 12).unwrap());

    let dir = tempfile::tempdir().unwrap();
    c.save(dir.path()).unwrap();
    let back = ImitationController::load(dir.path()).unwrap();
    assert_eq!(a, back.control_step(&history, 0.4, 2.0, 0.1, 12).unwrap());

    // The naive forecaster plugs in the same way.
    let naive = train_controller(&data, SeasonalNaive { period: 24, horizon: 1 }, &quick(), [1, 2, 3, 4], &p).unwrap();
    naive.control_step(&history, 0.4, 2.0, 0.1, 12).unwrap();
}
