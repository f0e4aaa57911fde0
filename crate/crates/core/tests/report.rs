use hems_core::data::{BehaviorClass, HomeData};
use hems_core::milp::optimize_day;
use hems_core::report::*;
use hems_core::sim::{IdleStrategy, MilpReplay, Strategy};
use hems_core::{Error, SystemParams};

#[test]
fn effectiveness_examples() {
    let base = [1.0, 1.0];
    let milp = [0.5, 0.5];
    assert_eq!(effectiveness(&milp, &milp, &base).unwrap(), 100.0);
    assert_eq!(effectiveness(&base, &milp, &base).unwrap(), 0.0);
    assert_eq!(effectiveness(&[0.75, 0.75], &milp, &base).unwrap(), 50.0);
}

#[test]
fn effectiveness_errors() {
    assert!(matches!(effectiveness(&[1.0], &[1.0], &[1.0]), Err(Error::UndefinedMetric(_))));
    assert!(matches!(effectiveness(&[1.0], &[1.0, 1.0], &[1.0]), Err(Error::Domain(_))));
    assert!(matches!(effectiveness(&[0.0], &[0.0], &[0.0]), Err(Error::Domain(_))));
}

fn month() -> (HomeData, usize, Vec<hems_core::OptimalDispatch>) {
    let home = HomeData::synthetic(BehaviorClass::Stable, 2, 3).unwrap();
    let (train, _) = home.split(1).unwrap();
    let from = train.len();
    let plans = home
        .day_starts()
        .into_iter()
        .filter(|&s| s >= from)
        .map(|s| optimize_day(&home.day_at(s).unwrap(), &SystemParams::default()).unwrap())
        .collect();
    (home, from, plans)
}

#[test]
fn endpoint_identities_hold_exactly() {
    let p = SystemParams::default();
    let (home, from, plans) = month();
    let mut strategies: Vec<Box<dyn Strategy + Send>> = vec![Box::new(IdleStrategy), Box::new(MilpReplay::new(plans))];
    let report = evaluate_month(&mut strategies, &home, from, &p).unwrap();
    assert_eq!(report.days(), 31);
    let idle = report.row("idle").unwrap();
    let milp = report.row("milp").unwrap();
    assert_eq!(idle.effectiveness, Some(0.0));
    assert_eq!(milp.effectiveness, Some(100.0));
    assert_eq!(milp.daily_costs, report.milp);
    assert_eq!(idle.daily_costs, report.baseline);
    assert!(milp.max_terminal_residual < 1e-9);
    assert!(report.milp.iter().zip(&report.baseline).all(|(m, b)| m <= b));
}

#[test]
fn emitted_files_are_deterministic() {
    let p = SystemParams::default();
    let (home, from, plans) = month();
    let mut strategies: Vec<Box<dyn Strategy + Send>> = vec![Box::new(MilpReplay::new(plans)), Box::new(IdleStrategy)];
    let report = evaluate_month(&mut strategies, &home, from, &p).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&report, a.path()).unwrap();
    emit_report(&report, b.path()).unwrap();
    for name in ["costs.csv", "summary.csv", "costs.svg", "effectiveness.svg", "waste.svg"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name}");
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }

    let mut rdr = csv::Reader::from_path(a.path().join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(&rows[0][0], "milp");
    assert_eq!(&rows[0][2], "100.0");
    assert_eq!(&rows[1][2], "0.0");

    let mut rdr = csv::Reader::from_path(a.path().join("costs.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["day", "baseline", "milp", "milp", "idle"]);
    let costs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(costs.len(), 31);
    for (d, rec) in costs.iter().enumerate() {
        assert_eq!(rec[1].parse::<f64>().unwrap(), report.baseline[d]);
    }
}

#[test]
fn empty_report_has_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    emit_report(&EvaluationReport::default(), dir.path()).unwrap();
    let costs = std::fs::read_to_string(dir.path().join("costs.csv")).unwrap();
    assert_eq!(costs, "day,baseline,milp\n");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
    let svg = std::fs::read_to_string(dir.path().join("costs.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>") && !svg.contains("polyline"));
}
