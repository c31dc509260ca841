//! Radial distribution feeder and the linearized DistFlow power-flow model.

mod case;
mod solve;

pub use case::{parse_case, read_case, write_case};
pub use solve::{auxiliary_cost, solve_distflow, violation_metrics, ViolationMetrics};

use thiserror::Error;

/// System power base: 1 MVA, so 1 p.u. of power is 1000 kW.
pub const S_BASE_KW: f64 = 1000.0;

/// Nominal line-to-line voltage of the 33-bus feeder.
pub const V_BASE_KV: f64 = 12.66;

/// Converts a power in kW to per-unit on [`S_BASE_KW`].
pub fn kw_to_pu(kw: f64) -> f64 {
    kw / S_BASE_KW
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bus {0} appears more than once")]
    DuplicateBus(usize),
    #[error("bus ids must be contiguous from 0; bus {0} is missing")]
    MissingBus(usize),
    #[error("bus id {bus} out of range for a {count}-bus case")]
    OutOfRange { bus: usize, count: usize },
    #[error("bus 0 is the substation and cannot have a parent")]
    SubstationHasParent,
    #[error("bus {0} has no parent; only bus 0 may be the root")]
    Orphan(usize),
    #[error("bus {bus} references unknown parent {parent}")]
    UnknownParent { bus: usize, parent: usize },
    #[error("bus {0} is part of a cycle or not connected to the substation")]
    Cycle(usize),
    #[error("bus {bus}: negative impedance (r={r}, x={x})")]
    NegativeImpedance { bus: usize, r: f64, x: f64 },
    #[error("voltage bounds must satisfy vmin < v0 < vmax (got {vmin} < {v0} < {vmax})")]
    Bounds { v0: f64, vmin: f64, vmax: f64 },
    #[error("expected {expected} bus values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("trade-off weight beta must lie in [0, 1], got {0}")]
    Beta(f64),
    #[error("empty network")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One bus and the line connecting it to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: usize,
    pub parent: Option<usize>,
    /// Resistance of the line to the parent (p.u.).
    pub r: f64,
    /// Reactance of the line to the parent (p.u.).
    pub x: f64,
    /// Nominal active base load withdrawn at this bus (p.u.).
    pub p_load: f64,
    /// Nominal reactive base load withdrawn at this bus (p.u.).
    pub q_load: f64,
}

impl BusRecord {
    pub fn root() -> Self {
        Self {
            id: 0,
            parent: None,
            r: 0.0,
            x: 0.0,
            p_load: 0.0,
            q_load: 0.0,
        }
    }

    pub fn line(id: usize, parent: usize, r: f64, x: f64) -> Self {
        Self {
            id,
            parent: Some(parent),
            r,
            x,
            p_load: 0.0,
            q_load: 0.0,
        }
    }

    pub fn with_load(mut self, p: f64, q: f64) -> Self {
        self.p_load = p;
        self.q_load = q;
        self
    }
}

/// A validated radial feeder rooted at the substation (bus 0).
///
/// Buses are stored indexed by id. A breadth-first order from the root is
/// precomputed so the solver can sweep leaves-to-root for flows and
/// root-to-leaves for voltages without recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialNetwork {
    buses: Vec<BusRecord>,
    order: Vec<usize>,
    v0: f64,
    v_min: f64,
    v_max: f64,
}

impl RadialNetwork {
    pub fn new(
        records: Vec<BusRecord>,
        v0: f64,
        v_min: f64,
        v_max: f64,
    ) -> Result<Self, NetworkError> {
        if records.is_empty() {
            return Err(NetworkError::Empty);
        }
        if !(v_min < v0 && v0 < v_max) || !v0.is_finite() || !v_min.is_finite() || !v_max.is_finite()
        {
            return Err(NetworkError::Bounds { v0, vmin: v_min, vmax: v_max });
        }

        let n = records.len();
        let mut slots: Vec<Option<BusRecord>> = vec![None; n];
        for rec in records {
            if rec.id >= n {
                return Err(NetworkError::OutOfRange { bus: rec.id, count: n });
            }
            if slots[rec.id].is_some() {
                return Err(NetworkError::DuplicateBus(rec.id));
            }
            let id = rec.id;
            slots[id] = Some(rec);
        }
        let buses: Vec<BusRecord> = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or(NetworkError::MissingBus(i)))
            .collect::<Result<_, _>>()?;

        for b in &buses {
            match (b.id, b.parent) {
                (0, Some(_)) => return Err(NetworkError::SubstationHasParent),
                (0, None) => {}
                (id, None) => return Err(NetworkError::Orphan(id)),
                (id, Some(p)) if p >= n => {
                    return Err(NetworkError::UnknownParent { bus: id, parent: p })
                }
                _ => {}
            }
            if !(b.r >= 0.0 && b.x >= 0.0) {
                return Err(NetworkError::NegativeImpedance { bus: b.id, r: b.r, x: b.x });
            }
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for b in &buses[1..] {
            children[b.parent.expect("validated")].push(b.id);
        }
        let mut order = Vec::with_capacity(n);
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let bus = order[head];
            head += 1;
            order.extend_from_slice(&children[bus]);
        }
        if order.len() != n {
            let mut seen = vec![false; n];
            for &b in &order {
                seen[b] = true;
            }
            let bad = seen.iter().position(|s| !s).expect("some bus unreached");
            return Err(NetworkError::Cycle(bad));
        }

        Ok(Self { buses, order, v0, v_min, v_max })
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn buses(&self) -> &[BusRecord] {
        &self.buses
    }

    pub fn bus(&self, id: usize) -> Option<&BusRecord> {
        self.buses.get(id)
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Buses in breadth-first order from the substation; parents precede children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Returns a copy with different voltage bounds.
    pub fn with_bounds(&self, v_min: f64, v_max: f64) -> Result<Self, NetworkError> {
        Self::new(self.buses.clone(), self.v0, v_min, v_max)
    }

    /// Nominal base-load withdrawals as an injection profile.
    pub fn base_load(&self) -> InjectionProfile {
        InjectionProfile {
            p: self.buses.iter().map(|b| b.p_load).collect(),
            q: self.buses.iter().map(|b| b.q_load).collect(),
        }
    }
}

/// Net withdrawal per bus in p.u.; positive values are consumption.
///
/// The substation entry is carried along but ignored by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionProfile {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionProfile {
    pub fn zeros(n: usize) -> Self {
        Self { p: vec![0.0; n], q: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Bus voltage magnitudes in p.u., indexed by bus id.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSolution {
    pub v: Vec<f64>,
}

impl VoltageSolution {
    pub fn min(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
