//! Per-day exogenous data: prices, solar, base-load profile and EV sessions.
//!
//! Files (comma separated, with header row):
//!
//! * `prices.csv`: `step,buy,sell[,trade]`
//! * `solar.csv`: `step,kw_per_kwp`
//! * `sessions.csv`: `id,arrival_step,departure_step,e_init_kwh,e_dem_kwh,e_cap_kwh`
//!   plus optional `station,e_min_kwh,e_max_kwh,eta_ch,eta_dis,l_cyc`
//! * `baseload_profile.csv` (optional): `step,multiplier`

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::ev::{EvDefaults, EvSession};

/// A session pinned to a station index.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSession {
    pub station: usize,
    pub session: EvSession,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub name: String,
    /// Solar output per kWp of installed capacity, per step.
    pub solar: Vec<f64>,
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
    pub trade: Vec<f64>,
    pub load_multiplier: Vec<f64>,
    pub sessions: Vec<StationSession>,
}

impl ScenarioData {
    pub fn horizon(&self) -> usize {
        self.buy.len()
    }

    /// Flat profile of the given length with no sessions; useful for tests.
    pub fn flat(horizon: usize, buy: f64, sell: f64) -> Self {
        Self {
            name: "flat".into(),
            solar: vec![0.0; horizon],
            buy: vec![buy; horizon],
            sell: vec![sell; horizon],
            trade: vec![0.5 * (buy + sell); horizon],
            load_multiplier: vec![1.0; horizon],
            sessions: Vec::new(),
        }
    }

    pub fn validate(&self, horizon: usize, stations: usize) -> Result<(), EnvError> {
        let series = [
            ("solar", &self.solar),
            ("buy", &self.buy),
            ("sell", &self.sell),
            ("trade", &self.trade),
            ("load_multiplier", &self.load_multiplier),
        ];
        for (name, s) in series {
            if s.len() != horizon {
                return Err(EnvError::Scenario(format!(
                    "{}: series '{name}' has {} steps, expected {horizon}",
                    self.name,
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(EnvError::Scenario(format!(
                    "{}: series '{name}' must be finite and non-negative",
                    self.name
                )));
            }
        }
        for ss in &self.sessions {
            if ss.station >= stations {
                return Err(EnvError::Scenario(format!(
                    "{}: session {} assigned to station {} but only {stations} exist",
                    self.name, ss.session.id, ss.station
                )));
            }
            ss.session
                .validate()
                .map_err(|e| EnvError::Scenario(format!("{}: {e}", self.name)))?;
            if ss.session.departure > horizon {
                return Err(EnvError::Scenario(format!(
                    "{}: session {} departs at step {} after the horizon {horizon}",
                    self.name, ss.session.id, ss.session.departure
                )));
            }
        }
        Ok(())
    }

    /// Loads a scenario directory. Sessions without a station column are
    /// assigned round-robin in order of arrival.
    pub fn load_dir(
        dir: impl AsRef<Path>,
        defaults: &EvDefaults,
        stations: usize,
    ) -> Result<Self, EnvError> {
        let dir = dir.as_ref();
        let open = |name: &str| -> Result<String, EnvError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| EnvError::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        let prices = parse_prices(&open("prices.csv")?)?;
        let solar = parse_solar(&open("solar.csv")?)?;
        let sessions = parse_sessions(&open("sessions.csv")?, defaults, stations)?;
        let load_multiplier = if dir.join("baseload_profile.csv").exists() {
            parse_profile(&open("baseload_profile.csv")?)?
        } else {
            vec![1.0; prices.buy.len()]
        };
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let data = Self {
            name,
            solar,
            buy: prices.buy,
            sell: prices.sell,
            trade: prices.trade,
            load_multiplier,
            sessions,
        };
        data.validate(data.horizon(), stations)?;
        Ok(data)
    }

    /// Writes the scenario as the four CSV files in `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), EnvError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| EnvError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let write = |name: &str, body: String| -> Result<(), EnvError> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| EnvError::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        let mut prices = String::from("step,buy,sell,trade\n");
        let mut solar = String::from("step,kw_per_kwp\n");
        let mut profile = String::from("step,multiplier\n");
        for t in 0..self.horizon() {
            prices.push_str(&format!("{t},{},{},{}\n", self.buy[t], self.sell[t], self.trade[t]));
            solar.push_str(&format!("{t},{}\n", self.solar[t]));
            profile.push_str(&format!("{t},{}\n", self.load_multiplier[t]));
        }
        let mut sessions = String::from(
            "id,arrival_step,departure_step,e_init_kwh,e_dem_kwh,e_cap_kwh,station,e_min_kwh,e_max_kwh,eta_ch,eta_dis,l_cyc\n",
        );
        for ss in &self.sessions {
            let s = &ss.session;
            sessions.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.id, s.arrival, s.departure, s.e_init, s.e_dem, s.e_cap, ss.station, s.e_min,
                s.e_max, s.eta_ch, s.eta_dis, s.l_cyc
            ));
        }
        write("prices.csv", prices)?;
        write("solar.csv", solar)?;
        write("baseload_profile.csv", profile)?;
        write("sessions.csv", sessions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
    pub trade: Vec<f64>,
}

#[derive(Deserialize)]
struct PriceRow {
    step: usize,
    buy: f64,
    sell: f64,
    trade: Option<f64>,
}

#[derive(Deserialize)]
struct SolarRow {
    step: usize,
    kw_per_kwp: f64,
}

#[derive(Deserialize)]
struct ProfileRow {
    step: usize,
    multiplier: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct SessionRow {
    id: String,
    arrival_step: usize,
    departure_step: usize,
    e_init_kwh: f64,
    e_dem_kwh: f64,
    e_cap_kwh: f64,
    station: Option<usize>,
    e_min_kwh: Option<f64>,
    e_max_kwh: Option<f64>,
    eta_ch: Option<f64>,
    eta_dis: Option<f64>,
    l_cyc: Option<f64>,
}

fn read_rows<T: serde::de::DeserializeOwned>(
    text: impl Read,
    what: &'static str,
) -> Result<Vec<T>, EnvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| EnvError::Parse { what, msg: format!("record {}: {e}", i + 1) })
        })
        .collect()
}

/// Checks that rows are numbered 0..n in order.
fn check_steps(steps: impl Iterator<Item = usize>, what: &'static str) -> Result<usize, EnvError> {
    let mut n = 0;
    for (i, s) in steps.enumerate() {
        if s != i {
            return Err(EnvError::Parse {
                what,
                msg: format!("row {} has step {s}, expected {i}", i + 1),
            });
        }
        n += 1;
    }
    if n == 0 {
        return Err(EnvError::Parse { what, msg: "no rows".into() });
    }
    Ok(n)
}

fn check_values(values: &[f64], what: &'static str) -> Result<(), EnvError> {
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(EnvError::Parse {
            what,
            msg: format!("value {v} must be finite and non-negative"),
        });
    }
    Ok(())
}

/// Parses `prices.csv`. A missing trade price defaults to the buy/sell midpoint.
pub fn parse_prices(text: &str) -> Result<PriceSeries, EnvError> {
    let rows: Vec<PriceRow> = read_rows(text.as_bytes(), "prices.csv")?;
    check_steps(rows.iter().map(|r| r.step), "prices.csv")?;
    let buy: Vec<f64> = rows.iter().map(|r| r.buy).collect();
    let sell: Vec<f64> = rows.iter().map(|r| r.sell).collect();
    let trade: Vec<f64> = rows
        .iter()
        .map(|r| r.trade.unwrap_or(0.5 * (r.buy + r.sell)))
        .collect();
    for s in [&buy, &sell, &trade] {
        check_values(s, "prices.csv")?;
    }
    Ok(PriceSeries { buy, sell, trade })
}

pub fn parse_solar(text: &str) -> Result<Vec<f64>, EnvError> {
    let rows: Vec<SolarRow> = read_rows(text.as_bytes(), "solar.csv")?;
    check_steps(rows.iter().map(|r| r.step), "solar.csv")?;
    let v: Vec<f64> = rows.iter().map(|r| r.kw_per_kwp).collect();
    check_values(&v, "solar.csv")?;
    Ok(v)
}

pub fn parse_profile(text: &str) -> Result<Vec<f64>, EnvError> {
    let rows: Vec<ProfileRow> = read_rows(text.as_bytes(), "baseload_profile.csv")?;
    check_steps(rows.iter().map(|r| r.step), "baseload_profile.csv")?;
    let v: Vec<f64> = rows.iter().map(|r| r.multiplier).collect();
    check_values(&v, "baseload_profile.csv")?;
    Ok(v)
}

/// Parses `sessions.csv` and assigns stations.
///
/// When every row carries a station index those are used; when none do,
/// sessions are dealt round-robin over `stations` in order of arrival
/// (ties keep file order). Mixing both styles is an error.
pub fn parse_sessions(
    text: &str,
    defaults: &EvDefaults,
    stations: usize,
) -> Result<Vec<StationSession>, EnvError> {
    let rows: Vec<SessionRow> = read_rows(text.as_bytes(), "sessions.csv")?;
    let labelled = rows.iter().filter(|r| r.station.is_some()).count();
    if labelled != 0 && labelled != rows.len() {
        return Err(EnvError::Parse {
            what: "sessions.csv",
            msg: "station column must be filled for every row or none".into(),
        });
    }
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let e_max = row.e_max_kwh.unwrap_or(row.e_cap_kwh);
        let session = EvSession {
            id: row.id,
            arrival: row.arrival_step,
            departure: row.departure_step,
            e_init: row.e_init_kwh,
            e_dem: row.e_dem_kwh,
            e_cap: row.e_cap_kwh,
            e_min: row.e_min_kwh.unwrap_or(0.0),
            e_max,
            eta_ch: row.eta_ch.unwrap_or(defaults.eta_ch),
            eta_dis: row.eta_dis.unwrap_or(defaults.eta_dis),
            l_cyc: row.l_cyc.unwrap_or(defaults.l_cyc),
        };
        session.validate().map_err(|e| EnvError::Parse {
            what: "sessions.csv",
            msg: e.to_string(),
        })?;
        if let Some(st) = row.station {
            if st >= stations {
                return Err(EnvError::Parse {
                    what: "sessions.csv",
                    msg: format!("session {} references station {st} of {stations}", session.id),
                });
            }
        }
        out.push(StationSession { station: row.station.unwrap_or(usize::MAX), session });
    }
    if labelled == 0 && !out.is_empty() {
        if stations == 0 {
            return Err(EnvError::Parse {
                what: "sessions.csv",
                msg: "sessions present but no stations configured".into(),
            });
        }
        let mut idx: Vec<usize> = (0..out.len()).collect();
        idx.sort_by_key(|&i| out[i].session.arrival);
        for (k, i) in idx.into_iter().enumerate() {
            out[i].station = k % stations;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prices_default_trade_to_midpoint() {
        let p = parse_prices("step,buy,sell\n0,0.3,0.1\n1,0.2,0.2\n").unwrap();
        assert_eq!(p.trade, vec![0.2, 0.2]);
        let p = parse_prices("step,buy,sell,trade\n0,0.3,0.1,0.25\n").unwrap();
        assert_eq!(p.trade, vec![0.25]);
    }

    #[test]
    fn steps_must_be_sequential() {
        assert!(parse_solar("step,kw_per_kwp\n0,0.1\n2,0.2\n").is_err());
        assert!(parse_solar("step,kw_per_kwp\n").is_err());
        assert!(parse_solar("step,kw_per_kwp\n0,-0.1\n").is_err());
        assert!(parse_profile("step,multiplier\n0,abc\n").is_err());
    }

    #[test]
    fn round_robin_by_arrival() {
        let text = "id,arrival_step,departure_step,e_init_kwh,e_dem_kwh,e_cap_kwh\n\
                    a,5,9,10,30,60\n\
                    b,1,9,10,30,60\n\
                    c,3,9,10,30,60\n";
        let s = parse_sessions(text, &EvDefaults::default(), 2).unwrap();
        let by_id = |id: &str| s.iter().find(|x| x.session.id == id).unwrap().station;
        assert_eq!((by_id("b"), by_id("c"), by_id("a")), (0, 1, 0));
        assert_eq!(s[0].session.eta_ch, 0.95);
        assert_eq!(s[0].session.e_max, 60.0);
    }

    #[test]
    fn explicit_stations_and_optional_columns() {
        let text = "id,arrival_step,departure_step,e_init_kwh,e_dem_kwh,e_cap_kwh,station,eta_ch\n\
                    a,0,4,10,30,60,1,0.9\n";
        let s = parse_sessions(text, &EvDefaults::default(), 2).unwrap();
        assert_eq!(s[0].station, 1);
        assert_eq!(s[0].session.eta_ch, 0.9);
        assert!(parse_sessions(text, &EvDefaults::default(), 1).is_err());
    }

    #[test]
    fn rejects_invalid_sessions() {
        let text = "id,arrival_step,departure_step,e_init_kwh,e_dem_kwh,e_cap_kwh\na,4,4,10,30,60\n";
        assert!(parse_sessions(text, &EvDefaults::default(), 1).is_err());
        let mixed = "id,arrival_step,departure_step,e_init_kwh,e_dem_kwh,e_cap_kwh,station\n\
                     a,0,4,10,30,60,0\nb,0,4,10,30,60,\n";
        assert!(parse_sessions(mixed, &EvDefaults::default(), 1).is_err());
    }
}
