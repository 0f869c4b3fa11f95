//! Hourly household load and solar data: CSV ingestion, net load,
//! peak/off-peak aggregation and per-day scenarios.
//!
//! Input columns: `timestamp,user_id,load_kwh,solar_kwh`, one row per user
//! and hour. Energies are converted to MWh on ingestion.

mod grouping;
mod synth;

pub use grouping::{build_theta_catalog, sample_type_groupings, spread_thetas, GroupingStats};
pub use synth::{write_synthetic_csv, SyntheticConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UserId;
use crate::scenario::Population;

pub const KWH_PER_MWH: f64 = 1000.0;

/// Energy of one user over one calendar day, MWh per hour slot.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDay {
    pub load: [f64; 24],
    pub solar: [f64; 24],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedDay {
    pub user: UserId,
    pub date: NaiveDate,
    pub missing_hours: Vec<u32>,
}

/// Validated hourly data. Only complete `(user, day)` series are kept.
#[derive(Debug, Clone, Default)]
pub struct HourlyDataset {
    pub days: BTreeMap<(UserId, NaiveDate), UserDay>,
    pub users: BTreeSet<UserId>,
    pub dropped: Vec<DroppedDay>,
    /// Rows read from the file.
    pub records: usize,
}

impl HourlyDataset {
    /// Dates on which every user has a complete series, ascending.
    pub fn valid_dates(&self) -> Vec<NaiveDate> {
        let dates: BTreeSet<NaiveDate> = self.days.keys().map(|(_, d)| *d).collect();
        dates
            .into_iter()
            .filter(|d| {
                self.users
                    .iter()
                    .all(|u| self.days.contains_key(&(u.clone(), *d)))
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    timestamp: String,
    user_id: String,
    load_kwh: f64,
    solar_kwh: f64,
}

pub fn ingest_csv(path: &Path) -> Result<HourlyDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, &path.display().to_string())
}

/// Reads CSV from any source; `label` names it in error messages.
pub fn ingest_reader<R: Read>(reader: R, label: &str) -> Result<HourlyDataset> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: label.to_owned(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    for col in ["timestamp", "user_id", "load_kwh", "solar_kwh"] {
        if !headers.iter().any(|h| h == col) {
            return Err(parse_err(1, format!("missing column {col:?}")));
        }
    }

    let mut partial: BTreeMap<(UserId, NaiveDate), ([Option<f64>; 24], [f64; 24])> =
        BTreeMap::new();
    let mut records = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(line, e.to_string()));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        records += 1;
        let ts = parse_timestamp(&row.timestamp).map_err(|m| parse_err(line, m))?;
        if row.user_id.is_empty() {
            return Err(parse_err(line, "empty user_id".into()));
        }
        for (name, v) in [("load_kwh", row.load_kwh), ("solar_kwh", row.solar_kwh)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(parse_err(
                    line,
                    format!("{name} must be finite and non-negative, got {v}"),
                ));
            }
        }
        let user = UserId::new(row.user_id);
        let hour = ts.hour() as usize;
        let slot = partial
            .entry((user.clone(), ts.date()))
            .or_insert(([None; 24], [0.0; 24]));
        if slot.0[hour].is_some() {
            return Err(parse_err(
                line,
                format!("duplicate reading for user {user} at {ts}"),
            ));
        }
        slot.0[hour] = Some(row.load_kwh / KWH_PER_MWH);
        slot.1[hour] = row.solar_kwh / KWH_PER_MWH;
    }

    let mut data = HourlyDataset {
        records,
        ..Default::default()
    };
    for ((user, date), (load, solar)) in partial {
        data.users.insert(user.clone());
        let missing: Vec<u32> = (0..24).filter(|&h| load[h as usize].is_none()).collect();
        if missing.is_empty() {
            data.days.insert(
                (user, date),
                UserDay {
                    load: load.map(|v| v.unwrap_or_default()),
                    solar,
                },
            );
        } else {
            log::info!("dropping {user} on {date}: missing hours {missing:?}");
            data.dropped.push(DroppedDay {
                user,
                date,
                missing_hours: missing,
            });
        }
    }
    Ok(data)
}

/// Accepts RFC 3339 (local wall-clock time is kept) or a naive
/// `YYYY-MM-DD[T ]HH:MM[:SS]`. Readings must fall on the hour.
fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, String> {
    let ts = DateTime::parse_from_rfc3339(s)
        .map(|t| t.naive_local())
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .map_err(|_| format!("unrecognized timestamp {s:?}"))?;
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(format!("timestamp {s:?} is not on the hour"));
    }
    Ok(ts)
}

/// Hourly net load `load − solar_scale·solar`, floored at zero when
/// `curtail` is set.
pub fn net_load(load: &[f64], solar: &[f64], solar_scale: f64, curtail: bool) -> Result<Vec<f64>> {
    if load.len() != solar.len() {
        return Err(Error::Data(format!(
            "load has {} hours but solar has {}",
            load.len(),
            solar.len()
        )));
    }
    if !(solar_scale.is_finite() && solar_scale >= 0.0) {
        return Err(Error::Config(format!(
            "solar scale must be non-negative, got {solar_scale}"
        )));
    }
    Ok(load
        .iter()
        .zip(solar)
        .map(|(l, s)| {
            let net = l - solar_scale * s;
            if curtail {
                net.max(0.0)
            } else {
                net
            }
        })
        .collect())
}

/// Hours of the day, `0..24`, that belong to the peak period. Hour `h`
/// labels the reading stamped `h:00`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakWindow {
    hours: [bool; 24],
}

impl PeakWindow {
    pub fn new(hours: &[u32]) -> Result<Self> {
        let mut mask = [false; 24];
        for &h in hours {
            if h >= 24 {
                return Err(Error::Config(format!("peak hour {h} is outside 0..24")));
            }
            mask[h as usize] = true;
        }
        let n = mask.iter().filter(|&&b| b).count();
        if n == 0 || n == 24 {
            return Err(Error::Config(format!(
                "peak window must cover between 1 and 23 hours, got {n}"
            )));
        }
        Ok(PeakWindow { hours: mask })
    }

    pub fn contains(&self, hour: usize) -> bool {
        self.hours[hour]
    }

    pub fn hours(&self) -> Vec<u32> {
        (0..24).filter(|&h| self.hours[h as usize]).collect()
    }

    pub fn hours_peak(&self) -> u32 {
        self.hours.iter().filter(|&&b| b).count() as u32
    }

    pub fn hours_offpeak(&self) -> u32 {
        24 - self.hours_peak()
    }
}

impl Default for PeakWindow {
    /// Evening peak, readings 18:00 through 23:00 and 00:00.
    fn default() -> Self {
        PeakWindow::new(&[18, 19, 20, 21, 22, 23, 0]).expect("valid default window")
    }
}

/// `(D^p, D^o)` of one day's hourly series.
pub fn aggregate_periods(series: &[f64], window: &PeakWindow) -> Result<(f64, f64)> {
    if series.len() != 24 {
        return Err(Error::Data(format!(
            "expected 24 hourly values, got {}",
            series.len()
        )));
    }
    let (mut peak, mut offpeak) = (0.0, 0.0);
    for (h, v) in series.iter().enumerate() {
        if window.contains(h) {
            peak += v;
        } else {
            offpeak += v;
        }
    }
    Ok((peak, offpeak))
}

/// How hourly data becomes per-day demands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetLoadOptions {
    pub window: PeakWindow,
    pub solar_scale: f64,
    pub curtail: bool,
    /// Multiplies every demand after aggregation.
    pub demand_scale: f64,
}

impl Default for NetLoadOptions {
    fn default() -> Self {
        NetLoadOptions {
            window: PeakWindow::default(),
            solar_scale: 1.0,
            curtail: true,
            demand_scale: 1.0,
        }
    }
}

/// One equally weighted scenario per date on which every user is complete.
pub fn build_population(data: &HourlyDataset, options: &NetLoadOptions) -> Result<Population> {
    if !(options.demand_scale.is_finite() && options.demand_scale > 0.0) {
        return Err(Error::Config(format!(
            "demand scale must be positive, got {}",
            options.demand_scale
        )));
    }
    let dates = data.valid_dates();
    if dates.is_empty() {
        return Err(Error::Data(
            "no date has complete data for every user".into(),
        ));
    }
    let ids: Vec<UserId> = data.users.iter().cloned().collect();
    let mut demands = Vec::with_capacity(dates.len());
    for date in &dates {
        let mut day = Vec::with_capacity(ids.len());
        for id in &ids {
            let ud = &data.days[&(id.clone(), *date)];
            let net = net_load(&ud.load, &ud.solar, options.solar_scale, options.curtail)?;
            let (p, o) = aggregate_periods(&net, &options.window)?;
            if p < 0.0 || o < 0.0 {
                return Err(Error::Data(format!(
                    "user {id} on {date}: negative period demand ({p}, {o}); enable curtailment"
                )));
            }
            day.push((p * options.demand_scale, o * options.demand_scale));
        }
        demands.push(day);
    }
    log::info!(
        "{} users, {} valid days, {} (user, day) series dropped",
        ids.len(),
        dates.len(),
        data.dropped.len()
    );
    Population::uniform(ids, demands)
}
