use hems_core::data::SeriesKind;
use hems_core::forecast::*;
use hems_core::Error;

fn periodic(hours: usize) -> Vec<f64> {
    let day = [0.3, 0.25, 0.2, 0.2, 0.25, 0.4, 0.8, 1.1, 0.9, 0.6, 0.5, 0.5, 0.6, 0.5, 0.45, 0.5, 0.7, 1.0, 1.4, 1.6, 1.3, 0.9, 0.6, 0.4];
    (0..hours).map(|h| day[h % 24]).collect()
}

fn small(epochs: usize) -> ForecastConfig {
    ForecastConfig { hidden: 8, layers: 2, epochs, batch: 32, lr: 3e-3, ..ForecastConfig::default() }
}

#[test]
fn periodic_series_one_step() {
    let series = periodic(24 * 21);
    let cut = 24 * 17;
    let cfg = ForecastConfig { batch: 64, ..small(200) };
    let f = fit(&series[..cut], 1, SeriesKind::Consumption, &cfg, 1).unwrap();
    let m = rolling_mape(&f, &series, cut, MAPE_FLOOR).unwrap();
    assert!(m < 1.0, "held-out MAPE {m:.3}%");
    // One period of context is enough for the next value.
    let next = f.forecast(&series[..cut]).unwrap()[0];
    assert!((next - series[cut]).abs() <= 0.05 * series[cut]);
}

#[test]
fn periodic_series_whole_day() {
    let series = periodic(24 * 21);
    let cut = 24 * 17;
    let f = fit(&series[..cut], 24, SeriesKind::Consumption, &small(150), 2).unwrap();
    let y = f.forecast(&series[..cut]).unwrap();
    assert_eq!(y.len(), 24);
    for (k, v) in y.iter().enumerate() {
        let truth = series[cut + k];
        assert!((v - truth).abs() <= 0.05 * truth, "slot {k}: {v} vs {truth}");
    }
}

#[test]
fn constant_series() {
    let series = vec![0.7; 24 * 12];
    let f = fit(&series, 1, SeriesKind::Consumption, &small(30), 3).unwrap();
    let y = f.forecast(&series).unwrap()[0];
    assert!((y - 0.7).abs() < 7e-3, "{y}");
    assert!(rolling_mape(&f, &series, 24 * 10, MAPE_FLOOR).unwrap() < 1.0);
}

#[test]
fn predictions_are_pure_and_non_negative() {
    let series = periodic(24 * 10);
    let f = fit(&series, 2, SeriesKind::Consumption, &small(3), 4).unwrap();
    let window = &series[series.len() - 168..];
    assert_eq!(f.predict(window).unwrap(), f.predict(window).unwrap());
    let zeros = vec![0.0; 168];
    assert!(f.predict(&zeros).unwrap().iter().all(|v| *v >= 0.0));
    // A forecaster fit on a zero series predicts zero.
    let z = fit(&vec![0.0; 24 * 9], 1, SeriesKind::Consumption, &small(3), 5).unwrap();
    assert_eq!(z.predict(&zeros).unwrap(), vec![0.0]);
}

#[test]
fn window_length_is_enforced() {
    let series = periodic(24 * 10);
    let f = fit(&series, 1, SeriesKind::Consumption, &small(1), 6).unwrap();
    assert!(matches!(f.predict(&series[..100]), Err(Error::Domain(_))));
    assert!(matches!(f.forecast(&series[..100]), Err(Error::Data(_))));
}

#[test]
fn short_history_is_a_data_error() {
    assert!(matches!(fit(&periodic(168), 1, SeriesKind::Consumption, &small(1), 0), Err(Error::Data(_))));
}

#[test]
fn same_seed_same_forecaster() {
    let series = periodic(24 * 9);
    let a = fit(&series, 1, SeriesKind::Price, &small(2), 9).unwrap();
    let b = fit(&series, 1, SeriesKind::Price, &small(2), 9).unwrap();
    assert_eq!(a.net.params(), b.net.params());
}

#[test]
fn save_and_load() {
    let series = periodic(24 * 9);
    let f = fit(&series, 3, SeriesKind::Irradiation, &small(1), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    f.save(&path).unwrap();
    let g = Forecaster::load(&path, SeriesKind::Irradiation).unwrap();
    assert_eq!(g.horizon, 3);
    assert_eq!(f.forecast(&series).unwrap(), g.forecast(&series).unwrap());
}
