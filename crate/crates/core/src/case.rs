//! In-memory grid description with MATPOWER column semantics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CaseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

impl BusType {
    /// MATPOWER `BUS_TYPE` column code.
    pub fn code(self) -> i64 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Slack),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: u32,
    pub btype: BusType,
    /// Load demand (MW, MVAr).
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance and susceptance (MW, MVAr at V = 1 p.u.).
    pub gs: f64,
    pub bs: f64,
    /// Voltage magnitude (p.u.).
    pub vm: f64,
    /// Voltage angle (degrees).
    pub va: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub mbase: f64,
    pub status: bool,
    pub pmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance (p.u.).
    pub b: f64,
    /// Off-nominal turns ratio; 0 means a line (ratio 1).
    pub tap: f64,
    /// Phase shift (degrees).
    pub shift: f64,
    pub status: bool,
}

impl BranchRecord {
    pub fn effective_tap(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }

    pub fn connects(&self, a: u32, b: u32) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
}

impl PowerCase {
    /// Checks every invariant and applies the ingestion policy: out-of-service
    /// generators and branches are dropped and an in-service machine base of
    /// exactly zero (unset in MATPOWER) is replaced by the system base.
    pub fn validated(mut self) -> Result<Self, CaseError> {
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(CaseError::NonPositiveBaseMva(self.base_mva));
        }
        let mut ids = BTreeMap::new();
        let mut slack = 0;
        for (row, bus) in self.buses.iter().enumerate() {
            if ids.insert(bus.id, row).is_some() {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            let fields = [bus.pd, bus.qd, bus.gs, bus.bs, bus.vm, bus.va, bus.base_kv];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(CaseError::NonFinite { record: format!("bus row {} (bus {})", row + 1, bus.id) });
            }
            if !(bus.vm > 0.0) {
                return Err(CaseError::NonPositiveVm { bus: bus.id, vm: bus.vm });
            }
            if bus.btype == BusType::Slack {
                slack += 1;
            }
        }
        if slack != 1 {
            return Err(CaseError::SlackCount(slack));
        }

        self.gens.retain(|g| g.status);
        let base = self.base_mva;
        for (row, gen) in self.gens.iter_mut().enumerate() {
            let record = || format!("gen row {} (bus {})", row + 1, gen.bus);
            if ![gen.pg, gen.qg, gen.mbase, gen.pmax].iter().all(|v| v.is_finite()) {
                return Err(CaseError::NonFinite { record: record() });
            }
            if !ids.contains_key(&gen.bus) {
                return Err(CaseError::UnknownBus { record: record(), bus: gen.bus });
            }
            if gen.mbase == 0.0 {
                gen.mbase = base;
            } else if gen.mbase < 0.0 {
                return Err(CaseError::NonPositiveMbase { record: record(), mbase: gen.mbase });
            }
        }

        self.branches.retain(|b| b.status);
        for (row, br) in self.branches.iter().enumerate() {
            let record = || format!("branch row {} ({}-{})", row + 1, br.from_bus, br.to_bus);
            if ![br.r, br.x, br.b, br.tap, br.shift].iter().all(|v| v.is_finite()) {
                return Err(CaseError::NonFinite { record: record() });
            }
            for bus in [br.from_bus, br.to_bus] {
                if !ids.contains_key(&bus) {
                    return Err(CaseError::UnknownBus { record: record(), bus });
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::ZeroImpedance { record: record() });
            }
        }
        Ok(self)
    }

    /// Map from bus id to row position.
    pub fn bus_index(&self) -> BTreeMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.pd).sum()
    }

    pub fn has_phase_shifters(&self) -> bool {
        self.branches.iter().any(|b| b.shift != 0.0)
    }
}
