//! The EV-charging CMDP.
//!
//! One step is one hour of operation: charger commands are clamped and
//! applied, each station nets its chargers against local solar, stations
//! trade surpluses and deficits with each other, residuals settle with the
//! grid, and the feeder is solved to score voltage violations.

mod scenario;
mod trading;

pub use scenario::{
    parse_prices, parse_profile, parse_sessions, parse_solar, PriceSeries, ScenarioData,
    StationSession,
};
pub use trading::{dispatch_trading, TradeClearing};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ev::{
    apply_power, clamp_feasible, completion_penalty, degradation_cost, unmet_demand,
    ChargerLimits, ChargerState, EvDefaults, EvError,
};
use crate::network::{
    auxiliary_cost, kw_to_pu, solve_distflow, violation_metrics, InjectionProfile, NetworkError,
    RadialNetwork,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("action component {0} is not finite")]
    NonFiniteAction(usize),
    #[error("step called on a finished episode")]
    Done,
    #[error("step called before reset")]
    NotReset,
    #[error("trading: {0}")]
    Trading(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{what}: {msg}")]
    Parse { what: &'static str, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Ev(#[from] EvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub bus: usize,
    #[serde(default = "default_chargers")]
    pub chargers: usize,
    #[serde(default = "default_pv")]
    pub pv_kwp: f64,
}

fn default_chargers() -> usize {
    5
}

fn default_pv() -> f64 {
    13.0
}

impl StationConfig {
    pub fn at_bus(bus: usize) -> Self {
        Self { bus, chargers: default_chargers(), pv_kwp: default_pv() }
    }
}

/// Fixed scales used to bring observation features to roughly [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsScale {
    pub energy_kwh: f64,
    pub price: f64,
    pub voltage: f64,
}

impl Default for ObsScale {
    fn default() -> Self {
        Self { energy_kwh: 60.0, price: 0.5, voltage: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub stations: Vec<StationConfig>,
    /// Weight of violation count versus magnitude in the auxiliary cost.
    pub beta: f64,
    /// Unfinished-demand penalty ($/kWh).
    pub sigma: f64,
    /// Battery cost per full-lifetime equivalent ($).
    pub kappa_batt: f64,
    pub reward_scale: f64,
    /// Step length (hours).
    pub dt: f64,
    pub horizon: usize,
    pub limits: ChargerLimits,
    pub ev: EvDefaults,
    pub obs: ObsScale,
    /// Relative std-dev of per-step multiplicative noise on solar and base
    /// load, drawn at reset from the episode seed.
    pub noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            // One-based feeder nodes 8, 12, 22 and 30.
            stations: [7, 11, 21, 29].into_iter().map(StationConfig::at_bus).collect(),
            beta: 0.5,
            sigma: 1.0,
            kappa_batt: 9000.0,
            reward_scale: 0.1,
            dt: 1.0,
            horizon: 24,
            limits: ChargerLimits::default(),
            ev: EvDefaults::default(),
            obs: ObsScale::default(),
            noise: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, net: &RadialNetwork) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(self.dt > 0.0) || self.horizon == 0 {
            return bad("dt and horizon must be positive".into());
        }
        if !(self.sigma >= 0.0 && self.kappa_batt >= 0.0 && self.reward_scale > 0.0) {
            return bad("sigma, kappa_batt must be >= 0 and reward_scale > 0".into());
        }
        if !(self.limits.p_ch_max >= 0.0 && self.limits.p_dis_max >= 0.0) {
            return bad("charger limits must be non-negative".into());
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be non-negative".into());
        }
        if !(self.obs.energy_kwh > 0.0 && self.obs.price > 0.0 && self.obs.voltage > 0.0) {
            return bad("observation scales must be positive".into());
        }
        for (i, s) in self.stations.iter().enumerate() {
            if s.bus == 0 || s.bus >= net.len() {
                return bad(format!(
                    "station {i} at bus {} is not a load bus of the {}-bus network",
                    s.bus,
                    net.len()
                ));
            }
            if !(s.pv_kwp >= 0.0) {
                return bad(format!("station {i}: pv_kwp must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn total_chargers(&self) -> usize {
        self.stations.iter().map(|s| s.chargers).sum()
    }
}

/// Environment observation at the start of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpState {
    pub t: usize,
    /// Remaining demand per charger (kWh); zero when unplugged.
    pub remaining_energy: Vec<f64>,
    /// Steps until departure per charger; zero when unplugged.
    pub remaining_time: Vec<f64>,
    /// Solar generation per station for this step (kW).
    pub solar_kw: Vec<f64>,
    pub buy: f64,
    pub sell: f64,
    /// Bus voltages from the previous step (p.u.).
    pub voltages: Vec<f64>,
    /// Normalized, flattened feature vector fed to the agents.
    pub features: Vec<f64>,
}

/// Per-charger normalized power in [-1, 1] and per-station trade fractions in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    pub charger: Vec<f64>,
    pub trade: Vec<f64>,
}

impl ActionVector {
    pub fn zeros(chargers: usize, stations: usize) -> Self {
        Self { charger: vec![0.0; chargers], trade: vec![0.0; stations] }
    }

    /// Maps a squashed policy output in (-1, 1)^k onto the action box.
    /// The first `chargers` components are powers, the rest become trade
    /// fractions via `(u + 1) / 2`.
    pub fn from_unit(u: &[f64], chargers: usize) -> Self {
        let charger = u[..chargers].iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let trade = u[chargers..]
            .iter()
            .map(|x| (0.5 * (x + 1.0)).clamp(0.0, 1.0))
            .collect();
        Self { charger, trade }
    }

    pub fn len(&self) -> usize {
        self.charger.len() + self.trade.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dollar cost of one step, split by source.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageCost {
    pub degradation: f64,
    pub grid_purchase: f64,
    pub grid_sale_revenue: f64,
    /// Net receipts from inter-station trading; sums to zero over stations.
    pub trade_receipts: f64,
    pub completion_penalty: f64,
}

impl StageCost {
    pub fn total(&self) -> f64 {
        self.degradation + self.grid_purchase - self.grid_sale_revenue - self.trade_receipts
            + self.completion_penalty
    }
}

/// Energy moved during one step, summed over stations (kWh, grid side).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyFlows {
    pub solar: f64,
    pub charge: f64,
    pub discharge: f64,
    pub bought: f64,
    pub sold: f64,
    pub traded_in: f64,
    pub traded_out: f64,
}

impl EnergyFlows {
    /// Sources minus sinks; zero when the step balanced.
    pub fn imbalance(&self) -> f64 {
        (self.solar + self.discharge + self.bought + self.traded_in)
            - (self.charge + self.sold + self.traded_out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub t: usize,
    pub cost: StageCost,
    pub vvn: u32,
    pub vva: f64,
    pub flows: EnergyFlows,
    /// Net grid withdrawal per station (kW, positive = importing).
    pub station_net_kw: Vec<f64>,
    /// Bus voltages produced by this step.
    pub voltages: Vec<f64>,
    /// Bus withdrawals used for the power flow (p.u.).
    pub injections: InjectionProfile,
    pub unfinished_kwh: f64,
    pub departures: usize,
    pub dropped_arrivals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: CmdpState,
    pub reward: f64,
    pub aux_cost: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Adds station net grid draws (kW) onto a base-load profile (p.u.).
/// Stations operate at unity power factor, so only `p` changes.
pub fn build_injections(
    net: &RadialNetwork,
    station_buses: &[usize],
    station_net_kw: &[f64],
    base: &InjectionProfile,
) -> Result<InjectionProfile, EnvError> {
    if station_buses.len() != station_net_kw.len() {
        return Err(EnvError::Dimension {
            what: "station net power",
            expected: station_buses.len(),
            got: station_net_kw.len(),
        });
    }
    if base.p.len() != net.len() || base.q.len() != net.len() {
        return Err(EnvError::Dimension {
            what: "base load",
            expected: net.len(),
            got: base.p.len(),
        });
    }
    let mut inj = base.clone();
    for (&bus, &kw) in station_buses.iter().zip(station_net_kw) {
        if bus >= net.len() {
            return Err(EnvError::Config(format!("station bus {bus} not in network")));
        }
        inj.p[bus] += kw_to_pu(kw);
    }
    Ok(inj)
}

/// The simulator. One instance runs one episode at a time.
#[derive(Debug, Clone)]
pub struct ChargingEnv {
    net: Arc<RadialNetwork>,
    cfg: EnvConfig,
    station_buses: Vec<usize>,
    /// Station index of each flattened charger slot.
    charger_station: Vec<usize>,
    /// First flattened slot of each station.
    station_offset: Vec<usize>,
    scenario: Option<Arc<ScenarioData>>,
    arrivals: Vec<StationSession>,
    next_arrival: usize,
    chargers: Vec<ChargerState>,
    solar_factor: Vec<f64>,
    load_factor: Vec<f64>,
    voltages: Vec<f64>,
    t: usize,
    done: bool,
    dropped_total: usize,
}

impl ChargingEnv {
    pub fn new(net: Arc<RadialNetwork>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate(&net)?;
        let station_buses: Vec<usize> = cfg.stations.iter().map(|s| s.bus).collect();
        let mut charger_station = Vec::new();
        let mut station_offset = Vec::new();
        for (i, s) in cfg.stations.iter().enumerate() {
            station_offset.push(charger_station.len());
            charger_station.extend(std::iter::repeat(i).take(s.chargers));
        }
        let n = net.len();
        let v0 = net.v0();
        Ok(Self {
            chargers: vec![ChargerState::empty(); charger_station.len()],
            net,
            cfg,
            station_buses,
            charger_station,
            station_offset,
            scenario: None,
            arrivals: Vec::new(),
            next_arrival: 0,
            solar_factor: Vec::new(),
            load_factor: Vec::new(),
            voltages: vec![v0; n],
            t: 0,
            done: true,
            dropped_total: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn network(&self) -> &RadialNetwork {
        &self.net
    }

    pub fn n_chargers(&self) -> usize {
        self.charger_station.len()
    }

    pub fn n_stations(&self) -> usize {
        self.station_buses.len()
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.n_chargers() + self.n_stations() + 2 + self.net.len() + 1
    }

    pub fn action_dim(&self) -> usize {
        self.n_chargers() + self.n_stations()
    }

    pub fn chargers(&self) -> &[ChargerState] {
        &self.chargers
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Total arrivals dropped because every charger at the station was busy.
    pub fn dropped_arrivals(&self) -> usize {
        self.dropped_total
    }

    pub fn reset(&mut self, scenario: Arc<ScenarioData>, seed: u64) -> Result<CmdpState, EnvError> {
        scenario.validate(self.cfg.horizon, self.n_stations())?;
        let horizon = self.cfg.horizon;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut factors = |noise: f64| -> Vec<f64> {
            (0..horizon)
                .map(|_| {
                    if noise > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (1.0 + noise * z).max(0.0)
                    } else {
                        1.0
                    }
                })
                .collect()
        };
        self.solar_factor = factors(self.cfg.noise);
        self.load_factor = factors(self.cfg.noise);

        let mut arrivals = scenario.sessions.clone();
        arrivals.sort_by_key(|s| s.session.arrival);
        self.arrivals = arrivals;
        self.next_arrival = 0;
        self.chargers = vec![ChargerState::empty(); self.n_chargers()];
        self.scenario = Some(scenario);
        self.t = 0;
        self.done = false;
        self.dropped_total = 0;
        self.connect_arrivals(0);

        let solar_kw = self.solar_kw(0);
        let idle: Vec<f64> = solar_kw.iter().map(|s| -s).collect();
        let inj = build_injections(&self.net, &self.station_buses, &idle, &self.base_load(0))?;
        self.voltages = solve_distflow(&self.net, &inj)?.v;
        Ok(self.observe())
    }

    fn scenario(&self) -> &ScenarioData {
        self.scenario.as_deref().expect("reset before use")
    }

    fn solar_kw(&self, t: usize) -> Vec<f64> {
        let per_kwp = self.scenario().solar[t] * self.solar_factor[t];
        self.cfg.stations.iter().map(|s| s.pv_kwp * per_kwp).collect()
    }

    fn base_load(&self, t: usize) -> InjectionProfile {
        let m = self.scenario().load_multiplier[t] * self.load_factor[t];
        let mut base = self.net.base_load();
        base.p.iter_mut().for_each(|p| *p *= m);
        base.q.iter_mut().for_each(|q| *q *= m);
        base
    }

    /// Plugs in every session arriving at `t`. Returns the number dropped.
    fn connect_arrivals(&mut self, t: usize) -> usize {
        let mut dropped = 0;
        while self.next_arrival < self.arrivals.len()
            && self.arrivals[self.next_arrival].session.arrival <= t
        {
            let ss = self.arrivals[self.next_arrival].clone();
            self.next_arrival += 1;
            let start = self.station_offset[ss.station];
            let end = start + self.cfg.stations[ss.station].chargers;
            match (start..end).find(|&i| !self.chargers[i].connected()) {
                Some(slot) => self.chargers[slot] = ChargerState::connect(ss.session),
                None => {
                    log::warn!(
                        "station {} full at step {t}; dropping session {}",
                        ss.station,
                        ss.session.id
                    );
                    dropped += 1;
                }
            }
        }
        self.dropped_total += dropped;
        dropped
    }

    fn observe(&self) -> CmdpState {
        let t = self.t.min(self.cfg.horizon - 1);
        let sc = self.scenario();
        let mut remaining_energy = Vec::with_capacity(self.n_chargers());
        let mut remaining_time = Vec::with_capacity(self.n_chargers());
        for ch in &self.chargers {
            match &ch.session {
                Some(s) => {
                    remaining_energy.push(unmet_demand(s, ch.energy()));
                    remaining_time.push(s.departure.saturating_sub(self.t) as f64);
                }
                None => {
                    remaining_energy.push(0.0);
                    remaining_time.push(0.0);
                }
            }
        }
        let solar_kw = self.solar_kw(t);
        let (buy, sell) = (sc.buy[t], sc.sell[t]);

        let o = &self.cfg.obs;
        let horizon = self.cfg.horizon as f64;
        let v0 = self.net.v0();
        let mut features = Vec::with_capacity(self.obs_dim());
        for (e, r) in remaining_energy.iter().zip(&remaining_time) {
            features.push(e / o.energy_kwh);
            features.push(r / horizon);
        }
        for (s, st) in solar_kw.iter().zip(&self.cfg.stations) {
            features.push(if st.pv_kwp > 0.0 { s / st.pv_kwp } else { 0.0 });
        }
        features.push(buy / o.price);
        features.push(sell / o.price);
        features.extend(self.voltages.iter().map(|v| (v - v0) / o.voltage));
        features.push(self.t as f64 / horizon);

        CmdpState {
            t: self.t,
            remaining_energy,
            remaining_time,
            solar_kw,
            buy,
            sell,
            voltages: self.voltages.clone(),
            features,
        }
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome, EnvError> {
        if self.scenario.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::Done);
        }
        if action.charger.len() != self.n_chargers() {
            return Err(EnvError::Dimension {
                what: "charger actions",
                expected: self.n_chargers(),
                got: action.charger.len(),
            });
        }
        if action.trade.len() != self.n_stations() {
            return Err(EnvError::Dimension {
                what: "trade actions",
                expected: self.n_stations(),
                got: action.trade.len(),
            });
        }
        if let Some(i) = action
            .charger
            .iter()
            .chain(&action.trade)
            .position(|a| !a.is_finite())
        {
            return Err(EnvError::NonFiniteAction(i));
        }

        let t = self.t;
        let dt = self.cfg.dt;
        let limits = self.cfg.limits;
        let n_st = self.n_stations();
        let mut cost = StageCost::default();
        let mut flows = EnergyFlows::default();

        // Chargers.
        let mut station_load = vec![0.0; n_st];
        for (i, a) in action.charger.iter().enumerate() {
            let a = a.clamp(-1.0, 1.0);
            let p_raw = if a >= 0.0 { a * limits.p_ch_max } else { a * limits.p_dis_max };
            let cmd = clamp_feasible(&self.chargers[i], p_raw, &limits, dt);
            let (next, age) = apply_power(&self.chargers[i], cmd, dt)?;
            self.chargers[i] = next;
            cost.degradation += degradation_cost(age, self.cfg.kappa_batt);
            flows.charge += cmd.charge_kw() * dt;
            flows.discharge += cmd.discharge_kw() * dt;
            station_load[self.charger_station[i]] += cmd.p * dt;
        }

        // Local solar first, then trading, then the grid.
        let sc = Arc::clone(self.scenario.as_ref().expect("checked"));
        let solar_kw = self.solar_kw(t);
        let mut surplus = vec![0.0; n_st];
        let mut deficit = vec![0.0; n_st];
        let mut station_net_kw = vec![0.0; n_st];
        for s in 0..n_st {
            let solar = solar_kw[s] * dt;
            flows.solar += solar;
            let net = station_load[s] - solar;
            station_net_kw[s] = net / dt;
            if net > 0.0 {
                deficit[s] = net;
            } else {
                surplus[s] = -net;
            }
        }
        let fractions: Vec<f64> = action.trade.iter().map(|f| f.clamp(0.0, 1.0)).collect();
        let clearing = dispatch_trading(&surplus, &deficit, &fractions)?;
        for s in 0..n_st {
            flows.bought += clearing.grid_purchase[s];
            flows.sold += clearing.grid_sale[s];
            flows.traded_in += clearing.received[s];
            flows.traded_out += clearing.delivered[s];
            cost.trade_receipts += (clearing.delivered[s] - clearing.received[s]) * sc.trade[t];
        }
        cost.grid_purchase = flows.bought * sc.buy[t];
        cost.grid_sale_revenue = flows.sold * sc.sell[t];

        // Network.
        let inj = build_injections(&self.net, &self.station_buses, &station_net_kw, &self.base_load(t))?;
        let sol = solve_distflow(&self.net, &inj)?;
        let vm = violation_metrics(&sol, &self.net);
        let aux_cost = auxiliary_cost(f64::from(vm.vvn), vm.vva, self.cfg.beta)?;
        self.voltages = sol.v.clone();

        // Departures and arrivals at the boundary t -> t + 1.
        let next_t = t + 1;
        let mut unfinished = 0.0;
        let mut departures = 0;
        for ch in self.chargers.iter_mut() {
            let leaving = matches!(&ch.session, Some(s) if s.departure <= next_t);
            if leaving {
                let s = ch.session.as_ref().expect("connected");
                unfinished += unmet_demand(s, ch.energy());
                cost.completion_penalty += completion_penalty(s, ch.energy(), self.cfg.sigma);
                departures += 1;
                *ch = ChargerState::empty();
            }
        }
        self.t = next_t;
        self.done = next_t >= self.cfg.horizon;
        let dropped = if self.done { 0 } else { self.connect_arrivals(next_t) };

        let reward = -cost.total() * self.cfg.reward_scale;
        let info = StepInfo {
            t,
            cost,
            vvn: vm.vvn,
            vva: vm.vva,
            flows,
            station_net_kw,
            voltages: sol.v,
            injections: inj,
            unfinished_kwh: unfinished,
            departures,
            dropped_arrivals: dropped,
        };
        Ok(StepOutcome { next_state: self.observe(), reward, aux_cost, done: self.done, info })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ev::EvSession;
    use crate::network::BusRecord;

    fn two_bus(load: f64) -> Arc<RadialNetwork> {
        Arc::new(
            RadialNetwork::new(
                vec![BusRecord::root(), BusRecord::line(1, 0, 0.05, 0.05).with_load(load, 0.0)],
                1.0,
                0.95,
                1.05,
            )
            .unwrap(),
        )
    }

    fn one_station(chargers: usize, pv: f64) -> EnvConfig {
        EnvConfig {
            stations: vec![StationConfig { bus: 1, chargers, pv_kwp: pv }],
            horizon: 4,
            ..EnvConfig::default()
        }
    }

    fn session(id: &str, arrival: usize, departure: usize, e_init: f64, e_dem: f64) -> StationSession {
        StationSession {
            station: 0,
            session: EvSession::new(id, arrival, departure, e_init, e_dem, &EvDefaults::default()),
        }
    }

    #[test]
    fn empty_system_is_silent() {
        let mut env = ChargingEnv::new(two_bus(0.0), one_station(2, 0.0)).unwrap();
        let s0 = env.reset(Arc::new(ScenarioData::flat(4, 0.3, 0.1)), 0).unwrap();
        assert!(s0.remaining_energy.iter().all(|&e| e == 0.0));
        assert!(s0.remaining_time.iter().all(|&e| e == 0.0));
        let out = env.step(&ActionVector::zeros(2, 1)).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.aux_cost, 0.0);
        assert!(out.info.voltages.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn arrivals_at_reset() {
        let mut env = ChargingEnv::new(two_bus(0.0), one_station(3, 0.0)).unwrap();
        let mut sc = ScenarioData::flat(4, 0.3, 0.1);
        sc.sessions = vec![session("a", 0, 3, 10.0, 30.0), session("b", 0, 4, 5.0, 20.0), session("c", 2, 4, 0.0, 10.0)];
        env.reset(Arc::new(sc), 0).unwrap();
        assert_eq!(env.chargers().iter().filter(|c| c.connected()).count(), 2);
    }

    #[test]
    fn single_ev_stage_cost() {
        let mut env = ChargingEnv::new(two_bus(0.0), one_station(1, 0.0)).unwrap();
        let mut sc = ScenarioData::flat(4, 0.30, 0.10);
        sc.sessions = vec![session("a", 0, 4, 10.0, 50.0)];
        env.reset(Arc::new(sc), 0).unwrap();
        let out = env.step(&ActionVector { charger: vec![1.0], trade: vec![0.0] }).unwrap();
        let expect = 22.0 * 0.30 + 0.5 * 20.9 / (60.0 * 3000.0) * 9000.0;
        assert!((out.info.cost.total() - expect).abs() < 1e-12);
        assert!((expect - 7.1225).abs() < 1e-9);
        assert_eq!(out.reward, -out.info.cost.total() * 0.1);
        // 22 kW at bus 1 through r = 0.05.
        assert!((out.info.voltages[1] - (1.0 - 0.05 * 0.022)).abs() < 1e-12);
    }

    #[test]
    fn departure_penalty_and_overflow() {
        let mut env = ChargingEnv::new(two_bus(0.0), one_station(1, 0.0)).unwrap();
        let mut sc = ScenarioData::flat(4, 0.30, 0.10);
        sc.sessions = vec![session("a", 0, 1, 10.0, 30.0), session("b", 0, 2, 10.0, 30.0)];
        env.reset(Arc::new(sc), 0).unwrap();
        assert_eq!(env.dropped_arrivals(), 1);
        let out = env.step(&ActionVector::zeros(1, 1)).unwrap();
        assert_eq!(out.info.departures, 1);
        assert_eq!(out.info.unfinished_kwh, 20.0);
        assert_eq!(out.info.cost.completion_penalty, 20.0);
        assert!(!env.chargers()[0].connected());
    }

    #[test]
    fn solar_export_and_trading_balance() {
        let cfg = EnvConfig {
            stations: vec![
                StationConfig { bus: 1, chargers: 1, pv_kwp: 13.0 },
                StationConfig { bus: 1, chargers: 1, pv_kwp: 0.0 },
            ],
            horizon: 2,
            ..EnvConfig::default()
        };
        let mut env = ChargingEnv::new(two_bus(0.0), cfg).unwrap();
        let mut sc = ScenarioData::flat(2, 0.30, 0.10);
        sc.solar = vec![1.0, 1.0];
        sc.sessions = vec![StationSession {
            station: 1,
            session: EvSession::new("a", 0, 2, 10.0, 50.0, &EvDefaults::default()),
        }];
        env.reset(Arc::new(sc), 0).unwrap();
        let out = env
            .step(&ActionVector { charger: vec![0.0, 0.5], trade: vec![1.0, 1.0] })
            .unwrap();
        let f = out.info.flows;
        assert_eq!(f.traded_out, 11.0);
        assert_eq!(f.traded_in, 11.0);
        assert_eq!(f.sold, 2.0);
        assert_eq!(f.bought, 0.0);
        assert!(f.imbalance().abs() < 1e-12);
        assert!(out.info.cost.trade_receipts.abs() < 1e-12);
        assert!((out.info.cost.grid_sale_revenue - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_calls() {
        let mut env = ChargingEnv::new(two_bus(0.0), one_station(1, 0.0)).unwrap();
        assert!(matches!(env.step(&ActionVector::zeros(1, 1)), Err(EnvError::NotReset)));
        env.reset(Arc::new(ScenarioData::flat(4, 0.3, 0.1)), 0).unwrap();
        assert!(matches!(
            env.step(&ActionVector { charger: vec![f64::NAN], trade: vec![0.0] }),
            Err(EnvError::NonFiniteAction(0))
        ));
        assert!(matches!(env.step(&ActionVector::zeros(2, 1)), Err(EnvError::Dimension { .. })));
        for _ in 0..4 {
            env.step(&ActionVector::zeros(1, 1)).unwrap();
        }
        assert!(matches!(env.step(&ActionVector::zeros(1, 1)), Err(EnvError::Done)));
        let bad = EnvConfig { stations: vec![StationConfig::at_bus(5)], ..EnvConfig::default() };
        assert!(ChargingEnv::new(two_bus(0.0), bad).is_err());
        let mut env = ChargingEnv::new(two_bus(0.0), one_station(1, 0.0)).unwrap();
        assert!(env.reset(Arc::new(ScenarioData::flat(3, 0.3, 0.1)), 0).is_err());
    }

    #[test]
    fn injections_convert_kw() {
        let net = two_bus(0.0);
        let base = InjectionProfile { p: vec![0.0, 0.2], q: vec![0.0, 0.1] };
        let inj = build_injections(&net, &[1], &[-13.0], &base).unwrap();
        assert!((inj.p[1] - (0.2 - 0.013)).abs() < 1e-15);
        assert_eq!(inj.q, base.q);
        let inj = build_injections(&net, &[1], &[110.0], &InjectionProfile::zeros(2)).unwrap();
        assert!((inj.p[1] - 0.11).abs() < 1e-15);
        assert_eq!(build_injections(&net, &[], &[], &base).unwrap(), base);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let cfg = EnvConfig { noise: 0.1, ..one_station(1, 13.0) };
        let mut sc = ScenarioData::flat(4, 0.3, 0.1);
        sc.solar = vec![0.5; 4];
        let sc = Arc::new(sc);
        let mut a = ChargingEnv::new(two_bus(0.1), cfg.clone()).unwrap();
        let mut b = ChargingEnv::new(two_bus(0.1), cfg).unwrap();
        assert_eq!(a.reset(sc.clone(), 7).unwrap(), b.reset(sc.clone(), 7).unwrap());
        let c = a.reset(sc, 8).unwrap();
        assert_ne!(c.solar_kw, b.observe().solar_kw);
    }
}
