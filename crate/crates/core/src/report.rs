//! Month evaluation: daily costs per strategy against the offline optimum and the
//! no-storage baseline, plus CSV tables and small SVG charts.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::HomeData;
use crate::domain::SystemParams;
use crate::error::{Error, Result};
use crate::milp::optimize_day;
use crate::sim::{simulate_day, MilpReplay, Past, RealizedDayResult, Strategy};

/// Share of the optimum's relative saving that a strategy achieves, in percent.
pub fn effectiveness(strategy: &[f64], milp: &[f64], base: &[f64]) -> Result<f64> {
    if strategy.len() != milp.len() || milp.len() != base.len() {
        return Err(Error::domain(format!(
            "cost series differ in length: {}, {}, {}",
            strategy.len(),
            milp.len(),
            base.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((s, m), b) in strategy.iter().zip(milp).zip(base) {
        if !(*b > 0.0) {
            return Err(Error::domain(format!("baseline cost must be positive, got {b}")));
        }
        num += (b - s) / b;
        den += (b - m) / b;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("the optimum saves nothing over the baseline".into()));
    }
    Ok(100.0 * num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub name: String,
    pub daily_costs: Vec<f64>,
    /// `None` when the optimum saves nothing over the month.
    pub effectiveness: Option<f64>,
    pub res_waste: f64,
    pub mean_slot_time: f64,
    /// Mean seconds per day spent before the first slot (day-ahead planning).
    pub mean_planning_time: f64,
    pub max_terminal_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub baseline: Vec<f64>,
    pub milp: Vec<f64>,
    pub strategies: Vec<StrategyRow>,
}

impl EvaluationReport {
    pub fn days(&self) -> usize {
        self.baseline.len()
    }

    pub fn row(&self, name: &str) -> Option<&StrategyRow> {
        self.strategies.iter().find(|r| r.name == name)
    }

    /// Builds a report from per-day results, one vector per strategy.
    pub fn assemble(baseline: Vec<f64>, milp: Vec<f64>, results: Vec<Vec<RealizedDayResult>>) -> Self {
        let strategies = results
            .into_iter()
            .filter(|days| !days.is_empty())
            .map(|days| {
                let daily_costs: Vec<f64> = days.iter().map(|r| r.cost).collect();
                let effectiveness = match effectiveness(&daily_costs, &milp, &baseline) {
                    Ok(e) => Some(e),
                    Err(e) => {
                        warn!("effectiveness of {} undefined: {e}", days[0].strategy);
                        None
                    }
                };
                let n = days.len() as f64;
                let slot_times: Vec<f64> = days.iter().flat_map(|r| r.slot_times.iter().copied()).collect();
                StrategyRow {
                    name: days[0].strategy.clone(),
                    effectiveness,
                    res_waste: days.iter().map(|r| r.res_waste).sum(),
                    mean_slot_time: if slot_times.is_empty() { 0.0 } else { slot_times.iter().sum::<f64>() / slot_times.len() as f64 },
                    mean_planning_time: days.iter().map(|r| r.planning_time).sum::<f64>() / n,
                    max_terminal_residual: days.iter().map(|r| r.terminal_residual).fold(0.0, f64::max),
                    daily_costs,
                }
            })
            .collect();
        Self { baseline, milp, strategies }
    }
}

/// Runs every strategy over the whole days of `data` that start at or after hour
/// `test_from`; everything before a day is its past. The offline optimum of each day
/// is replayed through the simulator so it is costed the same way as the strategies.
pub fn evaluate_month(
    strategies: &mut [Box<dyn Strategy + Send>],
    data: &HomeData,
    test_from: usize,
    params: &SystemParams,
) -> Result<EvaluationReport> {
    let starts: Vec<usize> = data.day_starts().into_iter().filter(|&s| s >= test_from).collect();
    let days = starts.iter().map(|&s| data.day_at(s)).collect::<Result<Vec<_>>>()?;
    let past = |s: usize| Past {
        consumption: &data.consumption.values[..s],
        irradiation: &data.irradiation.values[..s],
        price: &data.price.values[..s],
    };
    let run = |strategy: &mut dyn Strategy| -> Result<Vec<RealizedDayResult>> {
        starts
            .iter()
            .zip(&days)
            .enumerate()
            .map(|(i, (&s, day))| simulate_day(strategy, day, past(s), i, params))
            .collect()
    };

    let plans = days.iter().map(|d| optimize_day(d, params)).collect::<Result<Vec<_>>>()?;
    let reference = run(&mut MilpReplay::new(plans))?;
    let baseline: Vec<f64> = reference.iter().map(|r| r.baseline_cost).collect();
    let milp: Vec<f64> = reference.iter().map(|r| r.cost).collect();

    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = strategies
            .iter_mut()
            .map(|s| {
                let run = &run;
                scope.spawn(move || run(s.as_mut()))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Resource("evaluation thread panicked".into()))))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(EvaluationReport::assemble(baseline, milp, results))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

fn write_costs(report: &EvaluationReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["day".to_string(), "baseline".into(), "milp".into()];
    header.extend(report.strategies.iter().map(|r| r.name.clone()));
    w.write_record(&header)?;
    for d in 0..report.days() {
        let mut rec = vec![(d + 1).to_string(), format!("{:?}", report.baseline[d]), format!("{:?}", report.milp[d])];
        rec.extend(report.strategies.iter().map(|r| format!("{:?}", r.daily_costs[d])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(report: &EvaluationReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "strategy",
        "total_cost",
        "effectiveness",
        "res_waste",
        "mean_slot_seconds",
        "mean_planning_seconds",
        "max_terminal_residual",
    ])?;
    for r in &report.strategies {
        w.write_record([
            r.name.clone(),
            format!("{:?}", r.daily_costs.iter().sum::<f64>()),
            r.effectiveness.map(|e| format!("{e:?}")).unwrap_or_default(),
            format!("{:?}", r.res_waste),
            format!("{:?}", r.mean_slot_time),
            format!("{:?}", r.mean_planning_time),
            format!("{:?}", r.max_terminal_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const M: f64 = 48.0;
const PALETTE: [&str; 8] = ["#444444", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"];

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} L{M} {y} L{x} {y}" stroke="black" fill="none"/>"#,
        y = H - M,
        x = W - M
    );
    s
}

fn y_label(s: &mut String, lo: f64, hi: f64) {
    let _ = writeln!(s, r#"<text x="4" y="{:.1}" font-family="sans-serif" font-size="10">{hi:.3}</text>"#, M + 4.0);
    let _ = writeln!(s, r#"<text x="4" y="{:.1}" font-family="sans-serif" font-size="10">{lo:.3}</text>"#, H - M);
}

fn line_chart(title: &str, series: &[(&str, &[f64])]) -> String {
    let mut s = svg_open(title);
    let values = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        let (lo, hi) = (lo.min(0.0), if hi > lo.min(0.0) { hi } else { lo.min(0.0) + 1.0 });
        y_label(&mut s, lo, hi);
        for (k, (name, v)) in series.iter().enumerate() {
            let n = v.len().max(2) - 1;
            let pts: Vec<String> = v
                .iter()
                .enumerate()
                .map(|(i, y)| {
                    let px = M + (W - 2.0 * M) * i as f64 / n as f64;
                    let py = H - M - (H - 2.0 * M) * (y - lo) / (hi - lo);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            let color = PALETTE[k % PALETTE.len()];
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" fill="{color}">{name}</text>"#,
                W - M + 4.0 - 40.0,
                M + 12.0 * k as f64
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn bar_chart(title: &str, bars: &[(&str, f64)]) -> String {
    let mut s = svg_open(title);
    if !bars.is_empty() {
        let lo = bars.iter().map(|b| b.1).fold(0.0, f64::min);
        let hi = bars.iter().map(|b| b.1).fold(0.0, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        y_label(&mut s, lo, hi);
        let slot = (W - 2.0 * M) / bars.len() as f64;
        let y_of = |v: f64| H - M - (H - 2.0 * M) * (v - lo) / (hi - lo);
        for (k, (name, v)) in bars.iter().enumerate() {
            let (top, bottom) = (y_of(v.max(0.0)), y_of(v.min(0.0)));
            let x = M + slot * k as f64 + slot * 0.15;
            let color = PALETTE[(k + 2) % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                slot * 0.7,
                bottom - top
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{name} {v:.1}</text>"#,
                x + slot * 0.35,
                H - M + 14.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `costs.csv`, `summary.csv`, `costs.svg`, `effectiveness.svg` and
/// `waste.svg` into `out_dir`. The output depends only on the report.
pub fn emit_report(report: &EvaluationReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_costs(report, &out_dir.join("costs.csv"))?;
    write_summary(report, &out_dir.join("summary.csv"))?;

    let mut lines: Vec<(&str, &[f64])> = vec![("baseline", &report.baseline), ("milp", &report.milp)];
    lines.extend(report.strategies.iter().map(|r| (r.name.as_str(), r.daily_costs.as_slice())));
    std::fs::write(out_dir.join("costs.svg"), line_chart("Daily cost", &lines))?;

    let eff: Vec<(&str, f64)> = report
        .strategies
        .iter()
        .filter_map(|r| r.effectiveness.map(|e| (r.name.as_str(), e)))
        .collect();
    std::fs::write(out_dir.join("effectiveness.svg"), bar_chart("Effectiveness (%)", &eff))?;

    let waste: Vec<(&str, f64)> = report.strategies.iter().map(|r| (r.name.as_str(), r.res_waste)).collect();
    std::fs::write(out_dir.join("waste.svg"), bar_chart("PV waste (kWh)", &waste))?;
    Ok(())
}
