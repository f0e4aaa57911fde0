//! `hems`: the command-line pipeline from synthetic data to a monthly report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{NaiveDate, TimeZone, Utc};
use clap::{Parser, Subcommand};
use log::{info, warn};

use hems_core::config::Config;
use hems_core::data::{load_csv, save_csv, BehaviorClass, HomeData, SeriesKind};
use hems_core::forecast::{fit, rolling_mape, Forecaster, MAPE_FLOOR};
use hems_core::forecast_milp::{DayAheadForecasters, ForecastMilpStrategy};
use hems_core::imitation::{generate_dataset, read_dataset_csv, train_heads, write_dataset_csv, ImitationController};
use hems_core::maddpg::{train_agents, MaddpgStrategy};
use hems_core::milp::optimize_day;
use hems_core::report::{emit_report, evaluate_month, EvaluationReport};
use hems_core::sim::{simulate_day, write_result_csv, IdleStrategy, MilpReplay, Past, Strategy};
use hems_core::Error;

#[derive(Parser)]
#[command(name = "hems", version, about = "Hour-ahead demand response for a home with storage and PV")]
struct Cli {
    /// TOML file with system constants and training settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic home: consumption.csv, irradiation.csv and price.csv.
    SynthData {
        #[arg(long, default_value = "stable")]
        class: BehaviorClass,
        /// Overrides `months` from the config.
        #[arg(long)]
        months: Option<u32>,
    },
    /// Fit the hour-ahead and day-ahead forecasters on the training part.
    TrainForecasters {
        #[arg(long)]
        data: PathBuf,
    },
    /// Solve every training day and write the labeled dataset.
    LabelDataset {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the four imitation heads.
    TrainImitation {
        #[arg(long)]
        dataset: PathBuf,
        /// Hour-ahead consumption forecaster.
        #[arg(long)]
        forecaster: PathBuf,
    },
    /// Train the two actor-critic agents on the training days.
    TrainMaddpg {
        #[arg(long)]
        data: PathBuf,
    },
    /// Simulate one strategy over one day.
    RunDay {
        #[arg(long)]
        data: PathBuf,
        /// Strategy name, for example `imitation` or `forecast-milp`.
        #[arg(long)]
        strategy: String,
        /// Day to run, YYYY-MM-DD.
        #[arg(long)]
        date: NaiveDate,
        /// Directory holding `forecasters/`, `imitation/` and `maddpg/`.
        #[arg(long, default_value = "models")]
        models: PathBuf,
    },
    /// Evaluate every available strategy over the test months and write the report.
    EvaluateMonth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "models")]
        models: PathBuf,
    },
    /// Re-render tables and charts from a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let cfg: Config = match path {
        None => Config::default(),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_home(dir: &Path) -> Result<HomeData> {
    let read = |kind: SeriesKind| {
        let path = dir.join(format!("{}.csv", kind.name()));
        load_csv(&path, kind).with_context(|| format!("loading {}", path.display()))
    };
    Ok(HomeData::new(read(SeriesKind::Consumption)?, read(SeriesKind::Irradiation)?, read(SeriesKind::Price)?)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

const DAY_AHEAD: [(SeriesKind, &str); 3] = [
    (SeriesKind::Consumption, "consumption_h24.bin"),
    (SeriesKind::Irradiation, "irradiation_h24.bin"),
    (SeriesKind::Price, "price_h24.bin"),
];
const HOUR_AHEAD: &str = "consumption_h1.bin";

fn train_forecasters(cfg: &Config, data: &Path, seed: u64, out: &Path) -> Result<()> {
    let home = load_home(data)?;
    let (train, _) = home.split(cfg.test_months)?;
    create_dir(out)?;
    let f = fit(&train.consumption.values, 1, SeriesKind::Consumption, &cfg.forecast, seed)?;
    let m = rolling_mape(&f, &home.consumption.values, train.len(), MAPE_FLOOR)?;
    info!("hour-ahead consumption MAPE on the test part: {m:.2}%");
    println!("consumption horizon-1 test MAPE: {m:.3}%");
    f.save(&out.join(HOUR_AHEAD))?;
    for (k, (kind, name)) in DAY_AHEAD.iter().enumerate() {
        let f = fit(&train.series(*kind).values, 24, *kind, &cfg.forecast, seed + 1 + k as u64)?;
        f.save(&out.join(name))?;
    }
    Ok(())
}

fn load_day_ahead(dir: &Path) -> Result<DayAheadForecasters> {
    let load = |(kind, name): (SeriesKind, &str)| -> Result<Box<Forecaster>> { Ok(Box::new(Forecaster::load(&dir.join(name), kind)?)) };
    Ok(DayAheadForecasters {
        consumption: load(DAY_AHEAD[0])?,
        irradiation: load(DAY_AHEAD[1])?,
        price: load(DAY_AHEAD[2])?,
    })
}

/// A trained strategy from the models directory, or `None` when its files are missing.
fn load_strategy(name: &str, models: &Path) -> Result<Option<Box<dyn Strategy + Send>>> {
    let forecasters = models.join("forecasters");
    let s: Box<dyn Strategy + Send> = match name {
        "idle" => Box::new(IdleStrategy),
        "imitation" => {
            let dir = models.join("imitation");
            if !dir.join("manifest.json").exists() {
                return Ok(None);
            }
            Box::new(ImitationController::load(&dir)?)
        }
        "maddpg" => {
            let dir = models.join("maddpg");
            if !dir.join("manifest.json").exists() || !forecasters.join(HOUR_AHEAD).exists() {
                return Ok(None);
            }
            Box::new(MaddpgStrategy::load(&dir, &forecasters.join(HOUR_AHEAD))?)
        }
        "forecast-milp" => {
            if !DAY_AHEAD.iter().all(|(_, n)| forecasters.join(n).exists()) {
                return Ok(None);
            }
            Box::new(ForecastMilpStrategy::new(load_day_ahead(&forecasters)?))
        }
        other => return Err(Error::Config(format!("unknown strategy `{other}`")).into()),
    };
    Ok(Some(s))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let p = cfg.system;
    let out = cli.out.as_path();
    match cli.command {
        Command::SynthData { class, months } => {
            let home = HomeData::synthetic(class, months.unwrap_or(cfg.months), cli.seed)?;
            create_dir(out)?;
            for kind in [SeriesKind::Consumption, SeriesKind::Irradiation, SeriesKind::Price] {
                save_csv(home.series(kind), &out.join(format!("{}.csv", kind.name())))?;
            }
            println!("wrote {} hours of {} data to {}", home.len(), class.name(), out.display());
        }
        Command::TrainForecasters { data } => train_forecasters(&cfg, &data, cli.seed, out)?,
        Command::LabelDataset { data } => {
            let (train, _) = load_home(&data)?.split(cfg.test_months)?;
            let labeled = generate_dataset(&train.days()?, &p)?;
            if !labeled.skipped_days.is_empty() {
                warn!("skipped {} days the solver could not handle", labeled.skipped_days.len());
            }
            create_dir(out)?;
            let file = fs::File::create(out.join("dataset.csv"))?;
            write_dataset_csv(&labeled, std::io::BufWriter::new(file))?;
            println!("labeled {} slots", labeled.len());
        }
        Command::TrainImitation { dataset, forecaster } => {
            let data = read_dataset_csv(fs::File::open(&dataset).with_context(|| format!("opening {}", dataset.display()))?)?;
            let forecaster = Forecaster::load(&forecaster, SeriesKind::Consumption)?;
            let s = cli.seed;
            let (heads, curves) = train_heads(&data, &cfg.imitation, [s, s + 1, s + 2, s + 3])?;
            for (name, c) in hems_core::imitation::HEADS.iter().zip(&curves) {
                println!("{name}: final training loss {:.3e}", c.last().copied().unwrap_or(f64::NAN));
            }
            ImitationController { heads, forecaster, params: p }.save(out)?;
        }
        Command::TrainMaddpg { data } => {
            let (train, _) = load_home(&data)?.split(cfg.test_months)?;
            let (agents, log) = train_agents(&train.days()?, &cfg.maddpg, &p, cli.seed)?;
            agents.save(out)?;
            log.write_csv(fs::File::create(out.join("returns.csv"))?)?;
            println!("mean return over the last 100 episodes: {:.4}", log.tail_mean(100));
        }
        Command::RunDay { data, strategy, date, models } => {
            let home = load_home(&data)?;
            let ts = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).unwrap());
            let start = home
                .consumption
                .index_of(ts)
                .filter(|s| home.day_starts().contains(s))
                .ok_or_else(|| Error::Data(format!("{date} is not a whole day of the data")))?;
            let day = home.day_at(start)?;
            let mut s = if strategy == "milp" {
                Box::new(MilpReplay::new(vec![optimize_day(&day, &p)?]))
            } else {
                load_strategy(&strategy, &models)?
                    .ok_or_else(|| Error::Data(format!("no trained `{strategy}` model under {}", models.display())))?
            };
            let past = Past {
                consumption: &home.consumption.values[..start],
                irradiation: &home.irradiation.values[..start],
                price: &home.price.values[..start],
            };
            let r = simulate_day(s.as_mut(), &day, past, 0, &p)?;
            create_dir(out)?;
            let path = out.join(format!("day_{date}_{strategy}.csv"));
            write_result_csv(&r, &day, &p, fs::File::create(&path)?)?;
            println!("{strategy} on {date}: cost {:.4}, baseline {:.4}, pv waste {:.3} kWh", r.cost, r.baseline_cost, r.res_waste);
        }
        Command::EvaluateMonth { data, models } => {
            let home = load_home(&data)?;
            let (train, _) = home.split(cfg.test_months)?;
            let mut strategies = Vec::new();
            for name in ["idle", "imitation", "maddpg", "forecast-milp"] {
                match load_strategy(name, &models)? {
                    Some(s) => strategies.push(s),
                    None => warn!("no trained {name} model under {}; skipping it", models.display()),
                }
            }
            let report = evaluate_month(&mut strategies, &home, train.len(), &p)?;
            emit_report(&report, out)?;
            fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
            for r in &report.strategies {
                let eff = r.effectiveness.map_or("undefined".to_string(), |e| format!("{e:.1}%"));
                println!("{:>14}: effectiveness {eff}, pv waste {:.1} kWh, {:.2e} s per slot", r.name, r.res_waste, r.mean_slot_time);
            }
        }
        Command::Report { input } => {
            let text = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let report: EvaluationReport = serde_json::from_slice(&text).map_err(Error::from)?;
            emit_report(&report, out)?;
        }
    }
    Ok(())
}

/// 2 for bad input data or configuration, 3 for solver or training failures, 4 for I/O.
fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(err) = e.downcast_ref::<Error>() {
        return match err {
            Error::Io(_) => 4,
            Error::Domain(_) | Error::Config(_) | Error::Data(_) | Error::Format(_) => 2,
            Error::Infeasible { .. }
            | Error::Solver(_)
            | Error::NodeLimit { .. }
            | Error::Resource(_)
            | Error::Training(_)
            | Error::UndefinedMetric(_) => 3,
        };
    }
    if e.chain().any(|c| c.is::<std::io::Error>()) {
        4
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
