//! Hourly series: CSV ingestion and synthetic generators, plus train/test splits.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::DayProfile;
use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;
/// Context length fed to the forecasters.
pub const CONTEXT_HOURS: usize = 168;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Consumption,
    Irradiation,
    Price,
}

impl SeriesKind {
    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::Consumption => "consumption",
            SeriesKind::Irradiation => "irradiation",
            SeriesKind::Price => "price",
        }
    }
}

/// Contiguous hourly values starting at an hour-aligned UTC timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub start: DateTime<Utc>,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
}

impl HourlySeries {
    pub fn new(start: DateTime<Utc>, values: Vec<f64>, kind: SeriesKind) -> Result<Self> {
        let s = Self { start, values, kind };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start.minute() != 0 || self.start.second() != 0 || self.start.nanosecond() != 0 {
            return Err(Error::data(format!("start {} is not hour-aligned", self.start)));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::data(format!("{} value {} at index {i} is negative or not finite", self.kind.name(), self.values[i])));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::hours(i as i64)
    }

    /// Timestamp one hour past the last value.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }

    /// Index of the hour starting at `ts`, if inside the series.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let h = (ts - self.start).num_hours();
        (h >= 0 && (h as usize) < self.len() && self.timestamp(h as usize) == ts).then_some(h as usize)
    }

    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self { start: self.timestamp(from), values: self.values[from..to].to_vec(), kind: self.kind }
    }
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:00:00Z").to_string()
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    // Hour-precision forms such as 2014-02-01T05Z or 2014-02-01T05:00Z.
    let body = s.strip_suffix('Z')?;
    let (date, time) = body.split_once('T')?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    let mut parts = time.split(':');
    let hour: u32 = parts.next()?.parse().ok()?;
    let minute: u32 = parts.next().map_or(Some(0), |m| m.parse().ok())?;
    if parts.next().is_some() {
        return None;
    }
    Some(Utc.from_utc_datetime(&date.and_hms_opt(hour, minute, 0)?))
}

/// Reads `timestamp,value` rows. Rows must be consecutive whole hours.
pub fn read_csv<R: Read>(reader: R, kind: SeriesKind) -> Result<HourlySeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(Error::data(format!("expected header `timestamp,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut start = None;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let rec = rec.map_err(|e| Error::data(format!("row {line}: {e}")))?;
        if rec.len() != 2 {
            return Err(Error::data(format!("row {line}: expected 2 fields, got {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| Error::data(format!("row {line}: bad timestamp `{}`", &rec[0])))?;
        let value: f64 = rec[1].parse().map_err(|_| Error::data(format!("row {line}: bad value `{}`", &rec[1])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::data(format!("row {line}: value {value} is negative or not finite")));
        }
        let start_ts = *start.get_or_insert(ts);
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(Error::data(format!("row {line}: timestamp {ts} is not hour-aligned")));
        }
        let expected = start_ts + Duration::hours(values.len() as i64);
        if ts != expected {
            return Err(Error::data(format!(
                "row {line}: gap in series, expected {} but found {}",
                format_timestamp(expected),
                format_timestamp(ts)
            )));
        }
        values.push(value);
    }
    let start = start.ok_or_else(|| Error::data("series has no rows"))?;
    HourlySeries::new(start, values, kind)
}

pub fn write_csv<W: Write>(series: &HourlySeries, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["timestamp", "value"])?;
    for (i, v) in series.values.iter().enumerate() {
        w.write_record([format_timestamp(series.timestamp(i)), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path, kind: SeriesKind) -> Result<HourlySeries> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), kind)
}

pub fn save_csv(series: &HourlySeries, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(series, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorClass {
    Stable,
    Fluctuating,
    Chaos,
}

impl BehaviorClass {
    pub const ALL: [BehaviorClass; 3] = [BehaviorClass::Stable, BehaviorClass::Fluctuating, BehaviorClass::Chaos];

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::Stable => "stable",
            BehaviorClass::Fluctuating => "fluctuating",
            BehaviorClass::Chaos => "chaos",
        }
    }
}

impl std::str::FromStr for BehaviorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stable" => Ok(BehaviorClass::Stable),
            "fluctuating" => Ok(BehaviorClass::Fluctuating),
            "chaos" => Ok(BehaviorClass::Chaos),
            other => Err(Error::Config(format!("unknown home class `{other}`"))),
        }
    }
}

/// A typical evening-peaking household, kWh per hour.
const BASE_PROFILE: [f64; 24] = [
    0.42, 0.36, 0.33, 0.32, 0.33, 0.40, 0.62, 0.95, 1.05, 0.82, 0.66, 0.60, 0.64, 0.60, 0.56, 0.60, 0.74, 1.02,
    1.32, 1.45, 1.36, 1.12, 0.82, 0.58,
];

/// Generator parameters for one behavior class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeClass {
    pub class: BehaviorClass,
    pub base_profile: [f64; 24],
    /// Standard deviation of the multiplicative hourly noise.
    pub noise: f64,
    /// Probability per day of switching to a new behavior regime.
    pub regime_switch: f64,
    /// Relative extra daytime consumption on weekends.
    pub weekend_lift: f64,
}

impl HomeClass {
    pub fn new(class: BehaviorClass) -> Self {
        let (noise, regime_switch, weekend_lift) = match class {
            BehaviorClass::Stable => (0.005, 0.0, 0.0),
            BehaviorClass::Fluctuating => (0.11, 0.0, 0.25),
            BehaviorClass::Chaos => (0.2, 0.1, 0.25),
        };
        Self { class, base_profile: BASE_PROFILE, noise, regime_switch, weekend_lift }
    }
}

/// Default start of synthetic data, aligned to a month boundary.
pub fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2013, 12, 1, 0, 0, 0).unwrap()
}

fn hours_in_months(start: DateTime<Utc>, months: u32) -> Result<usize> {
    let end = start
        .checked_add_months(Months::new(months))
        .ok_or_else(|| Error::data("month arithmetic overflowed"))?;
    Ok((end - start).num_hours() as usize)
}

/// Hourly consumption of a synthetic home: a daily base profile, an optional weekend
/// lift, multiplicative Gaussian noise and, for chaotic homes, regime switches that
/// rescale and time-shift the profile for days at a time.
pub fn synth_home(class: &HomeClass, months: u32, start: DateTime<Utc>, seed: u64) -> Result<HourlySeries> {
    if months < 2 {
        return Err(Error::data(format!("need at least 2 months, got {months}")));
    }
    let hours = hours_in_months(start, months)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let noise = Normal::new(0.0, class.noise.max(0.0)).map_err(|e| Error::data(e.to_string()))?;
    let mut values = Vec::with_capacity(hours);
    let (mut scale, mut shift) = (1.0, 0i64);
    for d in 0..hours / HOURS_PER_DAY + 1 {
        let day_start = start + Duration::days(d as i64);
        if class.regime_switch > 0.0 && rng.gen_bool(class.regime_switch.min(1.0)) {
            scale = rng.gen_range(0.75..1.35);
            shift = rng.gen_range(-2..=2);
        }
        let weekend = matches!(day_start.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun);
        for h in 0..HOURS_PER_DAY {
            if values.len() == hours {
                break;
            }
            let hour = (h as i64 - shift).rem_euclid(24) as usize;
            let mut base = class.base_profile[hour] * scale;
            if weekend && (9..17).contains(&h) {
                base *= 1.0 + class.weekend_lift;
            }
            let v = base * (1.0 + noise.sample(&mut rng));
            values.push(v.max(0.0));
        }
    }
    HourlySeries::new(start, values, SeriesKind::Consumption)
}

/// Clear-sky half-sine daytime irradiation in kW/m² scaled by a random daily
/// cloudiness factor. Day length follows the season.
pub fn synth_irradiation(start: DateTime<Utc>, hours: usize, seed: u64) -> Result<HourlySeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0051_a2b0);
    let mut values = Vec::with_capacity(hours);
    let mut cloud = 1.0;
    for i in 0..hours {
        let ts = start + Duration::hours(i as i64);
        if i == 0 || ts.hour() == 0 {
            cloud = rng.gen_range(0.25..1.0);
        }
        let doy = ts.ordinal() as f64;
        let season = (2.0 * std::f64::consts::PI * (doy - 172.0) / 365.0).cos();
        let day_len = 12.0 + 4.0 * season;
        let peak = 0.6 + 0.3 * season;
        let (rise, set) = (12.0 - day_len / 2.0, 12.0 + day_len / 2.0);
        let mid = ts.hour() as f64 + 0.5;
        let v = if mid > rise && mid < set { peak * cloud * (std::f64::consts::PI * (mid - rise) / day_len).sin() } else { 0.0 };
        values.push(v.max(0.0));
    }
    HourlySeries::new(start, values, SeriesKind::Irradiation)
}

/// Real-time price with a morning and a stronger evening peak plus noise.
pub fn synth_price(start: DateTime<Utc>, hours: usize, seed: u64) -> Result<HourlySeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00b1_11ed);
    let noise = Normal::new(0.0, 0.06).unwrap();
    let mut values = Vec::with_capacity(hours);
    for i in 0..hours {
        let h = (start + Duration::hours(i as i64)).hour() as f64;
        let bump = |center: f64, width: f64| (-(h - center).powi(2) / (2.0 * width * width)).exp();
        let shape = 0.06 + 0.08 * bump(8.0, 1.5) + 0.16 * bump(19.0, 2.0);
        values.push((shape * (1.0 + noise.sample(&mut rng))).max(0.0));
    }
    HourlySeries::new(start, values, SeriesKind::Price)
}

/// Chronological split: the last `test_months` calendar months form the test part.
/// Test windows draw their context from the tail of the train part.
pub fn split(series: &HourlySeries, test_months: u32) -> Result<(HourlySeries, HourlySeries)> {
    let end = series.end();
    let last = end - Duration::hours(1);
    let month_start = Utc.with_ymd_and_hms(last.year(), last.month(), 1, 0, 0, 0).unwrap();
    let test_start = month_start
        .checked_sub_months(Months::new(test_months.saturating_sub(1)))
        .ok_or_else(|| Error::data("month arithmetic overflowed"))?;
    let cut = (test_start - series.start).num_hours();
    if cut < CONTEXT_HOURS as i64 || test_months == 0 {
        return Err(Error::data(format!(
            "series of {} hours is too short for a {test_months}-month test split with {CONTEXT_HOURS} hours of context",
            series.len()
        )));
    }
    let cut = cut as usize;
    Ok((series.slice(0, cut), series.slice(cut, series.len())))
}

/// The three input series of one home, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeData {
    pub consumption: HourlySeries,
    pub irradiation: HourlySeries,
    pub price: HourlySeries,
}

impl HomeData {
    pub fn new(consumption: HourlySeries, irradiation: HourlySeries, price: HourlySeries) -> Result<Self> {
        let n = consumption.len();
        if irradiation.len() != n || price.len() != n {
            return Err(Error::data(format!(
                "series lengths differ: consumption {n}, irradiation {}, price {}",
                irradiation.len(),
                price.len()
            )));
        }
        Ok(Self { consumption, irradiation, price })
    }

    /// A complete synthetic home with matching PV and tariff.
    pub fn synthetic(class: BehaviorClass, months: u32, seed: u64) -> Result<Self> {
        let start = default_start();
        let consumption = synth_home(&HomeClass::new(class), months, start, seed)?;
        let n = consumption.len();
        Self::new(consumption, synth_irradiation(start, n, seed)?, synth_price(start, n, seed)?)
    }

    pub fn len(&self) -> usize {
        self.consumption.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumption.is_empty()
    }

    pub fn series(&self, kind: SeriesKind) -> &HourlySeries {
        match kind {
            SeriesKind::Consumption => &self.consumption,
            SeriesKind::Irradiation => &self.irradiation,
            SeriesKind::Price => &self.price,
        }
    }

    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            consumption: self.consumption.slice(from, to),
            irradiation: self.irradiation.slice(from, to),
            price: self.price.slice(from, to),
        }
    }

    /// Splits every series at the same test boundary.
    pub fn split(&self, test_months: u32) -> Result<(Self, Self)> {
        let (train, test) = split(&self.consumption, test_months)?;
        let cut = train.len();
        debug_assert_eq!(cut + test.len(), self.len());
        Ok((self.slice(0, cut), self.slice(cut, self.len())))
    }

    /// Index of the first hour of the first whole day.
    fn first_midnight(&self) -> usize {
        (24 - self.consumption.start.hour() as usize) % 24
    }

    /// Hour offsets at which whole days start.
    pub fn day_starts(&self) -> Vec<usize> {
        let first = self.first_midnight();
        (first..).step_by(HOURS_PER_DAY).take_while(|s| s + HOURS_PER_DAY <= self.len()).collect()
    }

    pub fn day_at(&self, offset: usize) -> Result<DayProfile> {
        let r = offset..offset + HOURS_PER_DAY;
        DayProfile::new(
            self.consumption.values[r.clone()].to_vec(),
            self.irradiation.values[r.clone()].to_vec(),
            self.price.values[r].to_vec(),
        )
    }

    pub fn days(&self) -> Result<Vec<DayProfile>> {
        self.day_starts().into_iter().map(|s| self.day_at(s)).collect()
    }

    pub fn concat(&self, next: &HomeData) -> Result<Self> {
        let join = |a: &HourlySeries, b: &HourlySeries| -> Result<HourlySeries> {
            if a.end() != b.start {
                return Err(Error::data(format!("series do not join: {} then {}", a.end(), b.start)));
            }
            let mut values = a.values.clone();
            values.extend_from_slice(&b.values);
            HourlySeries::new(a.start, values, a.kind)
        };
        Self::new(
            join(&self.consumption, &next.consumption)?,
            join(&self.irradiation, &next.irradiation)?,
            join(&self.price, &next.price)?,
        )
    }
}
