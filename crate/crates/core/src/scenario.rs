//! Timed disturbances and the piecewise-constant models they induce.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
// Float math for no_std; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::case::PowerCase;
use crate::error::{Error, ScenarioError, SolveError};
use crate::integrate::{implicit_euler_step, step_count, ImplicitSystem, NewtonSettings};
use crate::mor::ManifoldBasis;
use crate::network::{build_model, component_count, GenDynamicParams, ModelKind, NetworkEdits, SwingModel};
use crate::rom::{tag_mode, ReducedTrajectory, RomMode, RomSystem};
use crate::swing::{FomSystem, Trajectory};

/// Default bolted-fault shunt magnitude (p.u.).
pub const FAULT_ADMITTANCE: f64 = 1e4;

/// Event instants may sit this far off the step grid before being rejected.
const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenTarget {
    /// Every in-service generator at the bus.
    Bus(u32),
    /// Position in the validated generator list.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Mechanical power drops to zero; the machine stays in the network.
    GenOutage(GenTarget),
    GenRestore(GenTarget),
    /// Shunt `-j * admittance` at the bus.
    BusFaultOn { bus: u32, admittance: f64 },
    BusFaultOff { bus: u32 },
    /// Removes the first in-service branch between the buses and clears any
    /// fault on its endpoints.
    LineTrip { from: u32, to: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    pub fn new(time: f64, kind: EventKind) -> Self {
        Event { time, kind }
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub step_start: usize,
    pub step_end: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub edits: NetworkEdits,
    pub model: SwingModel,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub events: Vec<Event>,
    pub segments: Vec<Segment>,
    pub t0: f64,
    pub dt: f64,
    /// Human-readable consequences of events, e.g. implicit fault clearing.
    pub notes: Vec<String>,
}

impl Schedule {
    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.t0, |s| s.t_end)
    }

    pub fn total_steps(&self) -> usize {
        self.segments.last().map_or(0, |s| s.step_end)
    }

    pub fn base_model(&self) -> &SwingModel {
        &self.segments[0].model
    }
}

fn resolve_gens(case: &PowerCase, target: GenTarget) -> Result<Vec<usize>, ScenarioError> {
    match target {
        GenTarget::Index(i) if i < case.gens.len() => Ok(alloc::vec![i]),
        GenTarget::Index(i) => Err(ScenarioError::UnknownTarget(format!("generator {i}"))),
        GenTarget::Bus(b) => {
            let found: Vec<usize> = case.gens.iter().enumerate().filter(|(_, g)| g.bus == b).map(|(i, _)| i).collect();
            if found.is_empty() {
                Err(ScenarioError::UnknownTarget(format!("generator at bus {b}")))
            } else {
                Ok(found)
            }
        }
    }
}

fn apply(
    case: &PowerCase,
    edits: &mut NetworkEdits,
    ev: &Event,
    base_components: usize,
    notes: &mut Vec<String>,
) -> Result<(), ScenarioError> {
    let has_bus = |b: u32| case.buses.iter().any(|x| x.id == b);
    match &ev.kind {
        EventKind::GenOutage(t) => {
            for g in resolve_gens(case, *t)? {
                if !edits.zeroed_gens.contains(&g) {
                    edits.zeroed_gens.push(g);
                }
            }
        }
        EventKind::GenRestore(t) => {
            let gens = resolve_gens(case, *t)?;
            edits.zeroed_gens.retain(|g| !gens.contains(g));
        }
        EventKind::BusFaultOn { bus, admittance } => {
            if !has_bus(*bus) {
                return Err(ScenarioError::UnknownTarget(format!("bus {bus}")));
            }
            edits.shunts.retain(|(b, _)| b != bus);
            edits.shunts.push((*bus, Complex64::new(0.0, -admittance)));
        }
        EventKind::BusFaultOff { bus } => {
            let before = edits.shunts.len();
            edits.shunts.retain(|(b, _)| b != bus);
            if edits.shunts.len() == before {
                return Err(ScenarioError::UnknownTarget(format!("active fault at bus {bus}")));
            }
        }
        EventKind::LineTrip { from, to } => {
            let matches: Vec<usize> =
                case.branches.iter().enumerate().filter(|(_, b)| b.connects(*from, *to)).map(|(i, _)| i).collect();
            if matches.is_empty() {
                return Err(ScenarioError::UnknownTarget(format!("branch {from}-{to}")));
            }
            let row = matches
                .into_iter()
                .find(|i| !edits.removed_branches.contains(i))
                .ok_or_else(|| ScenarioError::RemovedEquipment(format!("branch {from}-{to}")))?;
            edits.removed_branches.push(row);
            if component_count(case, &edits.removed_branches) > base_components {
                return Err(ScenarioError::Islanding { time: ev.time });
            }
            let cleared: Vec<u32> =
                edits.shunts.iter().map(|(b, _)| *b).filter(|b| b == from || b == to).collect();
            for b in cleared {
                edits.shunts.retain(|(x, _)| *x != b);
                notes.push(format!("fault at bus {b} cleared by trip of {from}-{to} at t={}", ev.time));
            }
        }
    }
    Ok(())
}

fn same_network(a: &NetworkEdits, b: &NetworkEdits) -> bool {
    a.shunts == b.shunts && a.removed_branches == b.removed_branches
}

fn same_edits(a: &NetworkEdits, b: &NetworkEdits) -> bool {
    let mut za = a.zeroed_gens.clone();
    let mut zb = b.zeroed_gens.clone();
    za.sort_unstable();
    zb.sort_unstable();
    same_network(a, b) && za == zb
}

/// Splits `[t0, t_end]` at event instants and builds one model per piece.
/// Simultaneous events apply in listed order; empty pieces are elided and
/// neighbours with identical edits merged.
pub fn compile_schedule(
    case: &PowerCase,
    params: &GenDynamicParams,
    kind: ModelKind,
    events: &[Event],
    t0: f64,
    t_end: f64,
    dt: f64,
) -> Result<Schedule, Error> {
    let total = step_count(t0, t_end, dt)?;
    let mut last_time = f64::NEG_INFINITY;
    let mut steps = Vec::with_capacity(events.len());
    for ev in events {
        if ev.time < last_time {
            return Err(ScenarioError::Unsorted.into());
        }
        last_time = ev.time;
        if !(ev.time >= t0 - ALIGN_TOL && ev.time <= t_end + ALIGN_TOL) {
            return Err(ScenarioError::OutOfRange { time: ev.time, t0, t_end }.into());
        }
        let k = ((ev.time - t0) / dt).round();
        if (t0 + k * dt - ev.time).abs() > ALIGN_TOL {
            return Err(ScenarioError::Misaligned { time: ev.time, dt }.into());
        }
        steps.push(k as usize);
    }

    let base_components = component_count(case, &[]);
    let mut notes = Vec::new();
    let mut pieces: Vec<(usize, usize, NetworkEdits)> = Vec::new();
    let mut edits = NetworkEdits::default();
    let mut start = 0;
    let mut i = 0;
    while i < events.len() {
        let k = steps[i];
        if k > start {
            pieces.push((start, k, edits.clone()));
            start = k;
        }
        while i < events.len() && steps[i] == k {
            apply(case, &mut edits, &events[i], base_components, &mut notes)?;
            i += 1;
        }
    }
    if total > start || pieces.is_empty() {
        pieces.push((start, total, edits.clone()));
    }
    let mut merged: Vec<(usize, usize, NetworkEdits)> = Vec::new();
    for p in pieces {
        match merged.last_mut() {
            Some(last) if same_edits(&last.2, &p.2) => last.1 = p.1,
            _ => merged.push(p),
        }
    }

    let mut built: Vec<(NetworkEdits, SwingModel)> = Vec::new();
    let mut segments = Vec::with_capacity(merged.len());
    for (a, b, e) in merged {
        let model = match built.iter().find(|(x, _)| same_network(x, &e)) {
            Some((_, m)) => {
                let mut p = DVector::from_fn(m.n(), |i, _| {
                    if i < case.gens.len() {
                        case.gens[i].pg / case.base_mva
                    } else {
                        m.p_star[i]
                    }
                });
                for &g in &e.zeroed_gens {
                    p[g] = 0.0;
                }
                m.with_p_star(p)
            }
            None => {
                let m = build_model(case, params, &e, kind)?;
                built.push((e.clone(), m.clone()));
                m
            }
        };
        segments.push(Segment {
            step_start: a,
            step_end: b,
            t_start: t0 + a as f64 * dt,
            t_end: t0 + b as f64 * dt,
            edits: e,
            model,
        });
    }
    Ok(Schedule { events: events.to_vec(), segments, t0, dt, notes })
}

fn chain<'s, S, F>(schedule: &'s Schedule, x0: &DVector<f64>, newton: &NewtonSettings, mut make: F) -> Result<(Vec<f64>, Vec<DVector<f64>>), SolveError>
where
    S: ImplicitSystem,
    F: FnMut(&'s SwingModel) -> Result<S, SolveError>,
{
    let total = schedule.total_steps();
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    times.push(schedule.t0);
    states.push(x0.clone());
    for seg in &schedule.segments {
        let sys = make(&seg.model)?;
        if sys.dim() != x0.len() {
            return Err(SolveError::DimensionMismatch { expected: sys.dim(), found: x0.len() });
        }
        for k in (seg.step_start + 1)..=seg.step_end {
            let (x, _) = implicit_euler_step(&sys, &states[k - 1], schedule.dt, newton, k)?;
            times.push(schedule.t0 + k as f64 * schedule.dt);
            states.push(x);
        }
    }
    Ok((times, states))
}

/// Full-order run across all segments, state carried over at boundaries.
pub fn schedule_simulate(schedule: &Schedule, x0: &DVector<f64>, newton: &NewtonSettings) -> Result<Trajectory, SolveError> {
    let (times, states) = chain(schedule, x0, newton, |m| Ok(FomSystem::new(m)))?;
    Ok(Trajectory { times, states, wall_clock: 0.0 })
}

/// Reduced run across all segments with one shared basis.
pub fn schedule_simulate_rom(
    schedule: &Schedule,
    basis: &ManifoldBasis,
    mode: RomMode,
    xr0: &DVector<f64>,
    newton: &NewtonSettings,
) -> Result<ReducedTrajectory, SolveError> {
    let (times, xr_states) =
        chain(schedule, xr0, newton, |m| RomSystem::new(m, basis, mode)).map_err(|e| tag_mode(e, mode))?;
    Ok(ReducedTrajectory { times, xr_states, wall_clock: 0.0 })
}
