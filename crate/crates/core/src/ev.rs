//! Bidirectional charger model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when checking that a command keeps energy in bounds.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EvError {
    #[error("session {id}: {msg}")]
    InvalidSession { id: String, msg: String },
    #[error("command of {p} kW would move energy to {e} kWh, outside [{lo}, {hi}]")]
    Infeasible { p: f64, e: f64, lo: f64, hi: f64 },
    #[error("nonzero command {0} kW on a disconnected charger")]
    Disconnected(f64),
}

/// One vehicle's visit to a charger. Energies in kWh, times in step indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub id: String,
    pub arrival: usize,
    pub departure: usize,
    pub e_init: f64,
    pub e_dem: f64,
    pub e_cap: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// Battery lifetime in equivalent full cycles.
    pub l_cyc: f64,
}

/// Battery parameters applied when a session record leaves them out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvDefaults {
    pub e_cap: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub l_cyc: f64,
}

impl Default for EvDefaults {
    fn default() -> Self {
        Self { e_cap: 60.0, eta_ch: 0.95, eta_dis: 0.95, l_cyc: 3000.0 }
    }
}

impl EvSession {
    /// Session with `e_min = 0`, `e_max = e_cap` and default efficiencies.
    pub fn new(
        id: impl Into<String>,
        arrival: usize,
        departure: usize,
        e_init: f64,
        e_dem: f64,
        defaults: &EvDefaults,
    ) -> Self {
        Self {
            id: id.into(),
            arrival,
            departure,
            e_init,
            e_dem,
            e_cap: defaults.e_cap,
            e_min: 0.0,
            e_max: defaults.e_cap,
            eta_ch: defaults.eta_ch,
            eta_dis: defaults.eta_dis,
            l_cyc: defaults.l_cyc,
        }
    }

    pub fn validate(&self) -> Result<(), EvError> {
        let fail = |msg: &str| {
            Err(EvError::InvalidSession { id: self.id.clone(), msg: msg.to_string() })
        };
        let finite = [
            self.e_init, self.e_dem, self.e_cap, self.e_min, self.e_max, self.eta_ch,
            self.eta_dis, self.l_cyc,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return fail("non-finite parameter");
        }
        if self.arrival >= self.departure {
            return fail("arrival must precede departure");
        }
        if !(0.0 <= self.e_min
            && self.e_min <= self.e_init
            && self.e_init <= self.e_max
            && self.e_max <= self.e_cap)
        {
            return fail("energies must satisfy 0 <= e_min <= e_init <= e_max <= e_cap");
        }
        if self.e_dem > self.e_max {
            return fail("demand exceeds e_max");
        }
        if !(self.eta_ch > 0.0 && self.eta_ch <= 1.0 && self.eta_dis > 0.0 && self.eta_dis <= 1.0) {
            return fail("efficiencies must lie in (0, 1]");
        }
        if self.e_cap <= 0.0 || self.l_cyc <= 0.0 {
            return fail("capacity and cycle life must be positive");
        }
        Ok(())
    }
}

/// Symmetric power rating of a charger (kW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargerLimits {
    pub p_ch_max: f64,
    pub p_dis_max: f64,
}

impl Default for ChargerLimits {
    fn default() -> Self {
        Self { p_ch_max: 22.0, p_dis_max: 22.0 }
    }
}

/// A charger slot, with the plugged-in session if any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChargerState {
    pub session: Option<EvSession>,
    e: f64,
}

impl ChargerState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn connect(session: EvSession) -> Self {
        let e = session.e_init;
        Self { session: Some(session), e }
    }

    /// Plugged-in state at an arbitrary energy level, clamped into the session bounds.
    pub fn at_energy(session: EvSession, e: f64) -> Self {
        let e = e.clamp(session.e_min, session.e_max);
        Self { session: Some(session), e }
    }

    pub fn connected(&self) -> bool {
        self.session.is_some()
    }

    /// Observed energy level; zero when nothing is plugged in.
    pub fn energy(&self) -> f64 {
        if self.connected() {
            self.e
        } else {
            0.0
        }
    }
}

/// Signed charger power in kW: positive charges, negative discharges.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerCommand {
    pub p: f64,
}

impl PowerCommand {
    pub fn charge_kw(&self) -> f64 {
        self.p.max(0.0)
    }

    pub fn discharge_kw(&self) -> f64 {
        (-self.p).max(0.0)
    }

    /// Battery-side energy change over `dt` hours for the given efficiencies.
    pub fn battery_delta(&self, eta_ch: f64, eta_dis: f64, dt: f64) -> f64 {
        self.charge_kw() * eta_ch * dt - self.discharge_kw() * dt / eta_dis
    }
}

/// Projects a raw power request onto the rating box and the energy bounds.
pub fn clamp_feasible(
    state: &ChargerState,
    p_raw: f64,
    limits: &ChargerLimits,
    dt: f64,
) -> PowerCommand {
    let Some(s) = &state.session else {
        return PowerCommand { p: 0.0 };
    };
    if !p_raw.is_finite() || dt <= 0.0 {
        return PowerCommand { p: 0.0 };
    }
    let headroom = ((s.e_max - state.e) / (s.eta_ch * dt)).max(0.0);
    let available = ((state.e - s.e_min) * s.eta_dis / dt).max(0.0);
    let hi = limits.p_ch_max.min(headroom);
    let lo = -limits.p_dis_max.min(available);
    PowerCommand { p: p_raw.clamp(lo, hi) }
}

/// Applies a feasible command; returns the new state and the cycle-aging fraction.
pub fn apply_power(
    state: &ChargerState,
    cmd: PowerCommand,
    dt: f64,
) -> Result<(ChargerState, f64), EvError> {
    let Some(s) = &state.session else {
        if cmd.p != 0.0 {
            return Err(EvError::Disconnected(cmd.p));
        }
        return Ok((state.clone(), 0.0));
    };
    let delta = cmd.battery_delta(s.eta_ch, s.eta_dis, dt);
    let e = state.e + delta;
    if e > s.e_max + ENERGY_TOLERANCE || e < s.e_min - ENERGY_TOLERANCE || !e.is_finite() {
        return Err(EvError::Infeasible { p: cmd.p, e, lo: s.e_min, hi: s.e_max });
    }
    let age = 0.5 * delta.abs() / (s.e_cap * s.l_cyc);
    let next = ChargerState { session: state.session.clone(), e: e.clamp(s.e_min, s.e_max) };
    Ok((next, age))
}

/// Linear unfinished-demand penalty, charged once at departure.
pub fn completion_penalty(session: &EvSession, e_final: f64, sigma: f64) -> f64 {
    sigma * unmet_demand(session, e_final)
}

/// `max(0, e_dem - e_final)` in kWh.
pub fn unmet_demand(session: &EvSession, e_final: f64) -> f64 {
    (session.e_dem - e_final).max(0.0)
}

pub fn degradation_cost(age_cycles: f64, kappa_batt: f64) -> f64 {
    age_cycles * kappa_batt
}
