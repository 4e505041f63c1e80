//! End-to-end runs: FOM, snapshots, bases, both ROMs, errors and artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use swingmor_core::metrics::{energy_table, relative_l2_error, Block, EnergyRow};
use swingmor_core::mor::{PodDecomposition, PAIRING_TAG};
use swingmor_core::rom::{project_initial_state, reconstruct_trajectory};
use swingmor_core::scenario::{compile_schedule, schedule_simulate, schedule_simulate_rom};
use swingmor_core::swing::collect_snapshots;
use swingmor_core::{
    Error, Event, EventKind, GenDynamicParams, ManifoldBasis, ModelKind, NewtonSettings, PowerCase, RankSelection,
    RomMode, Schedule, SwingState, Trajectory,
};

use crate::config::{render_event, render_params};
use crate::formats::{fmt_f64, write_trajectory};

pub const SUMMARY_HEADER: &str = "case,mode,r,lambda,scenario,err_delta,err_omega,t_fom_s,t_rom_s";

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

fn at<T, E: Into<Error>>(stage: &'static str, r: Result<T, E>) -> Result<T, StageError> {
    r.map_err(|e| StageError { stage, source: e.into() })
}

/// λ used for a case when none is given.
pub fn default_lambda(case_name: &str) -> f64 {
    if case_name.contains("2736") {
        1e-3
    } else if case_name.contains("300") {
        1.0
    } else {
        1e-1
    }
}

/// Adds a `bus_fault_off` at `t_clear` for every fault switched on before it
/// and not yet switched off. Returns the new, time-sorted list.
pub fn with_fault_clearing(events: &[Event], t_clear: f64) -> Vec<Event> {
    let mut open: Vec<u32> = Vec::new();
    for e in events.iter().filter(|e| e.time <= t_clear) {
        match e.kind {
            EventKind::BusFaultOn { bus, .. } if !open.contains(&bus) => open.push(bus),
            EventKind::BusFaultOff { bus } => open.retain(|b| *b != bus),
            _ => {}
        }
    }
    let split = events.iter().position(|e| e.time > t_clear).unwrap_or(events.len());
    let mut out = events[..split].to_vec();
    out.extend(open.into_iter().map(|bus| Event::new(t_clear, EventKind::BusFaultOff { bus })));
    out.extend_from_slice(&events[split..]);
    out
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub case: PowerCase,
    /// sha256 of the case file bytes.
    pub case_checksum: String,
    pub case_path: Option<PathBuf>,
    pub params: GenDynamicParams,
    pub kind: ModelKind,
    pub scenario_name: String,
    pub events: Vec<Event>,
    /// Snapshots come from this scenario instead of `events` when set.
    pub train_events: Option<(String, Vec<Event>)>,
    pub rank: RankSelection,
    pub lambda: f64,
    pub t0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub newton: NewtonSettings,
    /// Extra r values for the energy table.
    pub energy_rs: Vec<usize>,
    pub modes: Vec<RomMode>,
}

impl RunSpec {
    pub fn new(case: PowerCase, case_checksum: String) -> Self {
        let params = GenDynamicParams::defaults_for(&case);
        let lambda = default_lambda(&case.name);
        RunSpec {
            case,
            case_checksum,
            case_path: None,
            params,
            kind: ModelKind::En,
            scenario_name: "unfaulted".into(),
            events: Vec::new(),
            train_events: None,
            rank: RankSelection::default(),
            lambda,
            t0: 0.0,
            dt: 0.01,
            t_end: 5.0,
            newton: NewtonSettings::default(),
            energy_rs: (1..=8).collect(),
            modes: vec![RomMode::Linear, RomMode::Quadratic],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub case_name: String,
    pub scenario: String,
    pub mode: RomMode,
    pub r: usize,
    pub lambda: f64,
    pub delta_err: f64,
    pub omega_err: f64,
    /// `(delta, omega)` error for each machine.
    pub per_machine: Vec<(f64, f64)>,
    pub wall_clock_fom: f64,
    pub wall_clock_rom: f64,
    /// Set when the ROM could not be integrated; errors are NaN then.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RomRun {
    pub report: ErrorReport,
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub schedule: Schedule,
    pub fom: Trajectory,
    pub basis: ManifoldBasis,
    pub energy: Vec<EnergyRow>,
    pub roms: Vec<RomRun>,
    pub notes: Vec<String>,
}

impl BenchResult {
    pub fn rom(&self, mode: RomMode) -> Option<&RomRun> {
        self.roms.iter().find(|r| r.report.mode == mode)
    }
}

fn error_report(spec: &RunSpec, fom: &Trajectory, rom: &Trajectory, mode: RomMode, r: usize) -> Result<ErrorReport, StageError> {
    let n = fom.n();
    let mut per_machine = Vec::with_capacity(n);
    for i in 0..n {
        // A machine whose angle never leaves zero has no relative error.
        let d = relative_l2_error(fom, rom, Block::DeltaOf(i)).unwrap_or(f64::NAN);
        let w = relative_l2_error(fom, rom, Block::OmegaOf(i)).unwrap_or(f64::NAN);
        per_machine.push((d, w));
    }
    Ok(ErrorReport {
        case_name: spec.case.name.clone(),
        scenario: spec.scenario_name.clone(),
        mode,
        r,
        lambda: spec.lambda,
        delta_err: at("metrics", relative_l2_error(fom, rom, Block::Delta))?,
        omega_err: at("metrics", relative_l2_error(fom, rom, Block::Omega))?,
        per_machine,
        wall_clock_fom: fom.wall_clock,
        wall_clock_rom: rom.wall_clock,
        failure: None,
    })
}

pub fn benchmark_run(spec: &RunSpec) -> Result<BenchResult, StageError> {
    let schedule = at(
        "scenario",
        compile_schedule(&spec.case, &spec.params, spec.kind, &spec.events, spec.t0, spec.t_end, spec.dt),
    )?;
    let mut notes = schedule.notes.clone();
    let x0 = SwingState::initial(schedule.base_model()).stacked();

    let clock = Instant::now();
    let fom = at("fom", schedule_simulate(&schedule, &x0, &spec.newton));
    let mut fom = fom?;
    fom.wall_clock = clock.elapsed().as_secs_f64();

    let train = match &spec.train_events {
        Some((name, events)) => {
            let s = at(
                "training scenario",
                compile_schedule(&spec.case, &spec.params, spec.kind, events, spec.t0, spec.t_end, spec.dt),
            )?;
            notes.push(format!("snapshots trained on scenario {name}"));
            at("training fom", schedule_simulate(&s, &x0, &spec.newton))?
        }
        None => fom.clone(),
    };
    let snaps = at("snapshots", collect_snapshots(&train))?;
    let pod = at("pod", PodDecomposition::compute(&snaps))?;
    let pod_basis = at("pod", pod.basis(spec.rank))?;
    let r = pod_basis.r;
    let basis = at("quadratic fit", ManifoldBasis::fit(&snaps, pod_basis, spec.lambda))?;
    if basis.quad.as_ref().is_some_and(|q| q.underdetermined) {
        notes.push(format!("quadratic fit at r={r} is underdetermined ({} snapshots)", snaps.k()));
    }

    let max_rank = pod.max_rank();
    let mut rs: Vec<usize> = spec.energy_rs.iter().copied().filter(|&k| k <= max_rank).collect();
    if !rs.contains(&r) {
        rs.push(r);
    }
    rs.sort_unstable();
    rs.dedup();
    let energy = at("energy", energy_table(&snaps, &rs, spec.lambda))?;

    let xr0 = at("rom", project_initial_state(&basis, &x0))?;
    let mut roms = Vec::new();
    for &mode in &spec.modes {
        let clock = Instant::now();
        let run = schedule_simulate_rom(&schedule, &basis, mode, &xr0, &spec.newton);
        let elapsed = clock.elapsed().as_secs_f64();
        match run {
            Ok(mut red) => {
                red.wall_clock = elapsed;
                let traj = at("reconstruct", reconstruct_trajectory(&basis, mode, &red))?;
                let report = error_report(spec, &fom, &traj, mode, r)?;
                roms.push(RomRun { report, trajectory: Some(traj) });
            }
            Err(e) => {
                log::warn!("{} ROM failed: {e}", mode.as_str());
                notes.push(format!("{} ROM failed: {e}", mode.as_str()));
                let report = ErrorReport {
                    case_name: spec.case.name.clone(),
                    scenario: spec.scenario_name.clone(),
                    mode,
                    r,
                    lambda: spec.lambda,
                    delta_err: f64::NAN,
                    omega_err: f64::NAN,
                    per_machine: vec![(f64::NAN, f64::NAN); fom.n()],
                    wall_clock_fom: fom.wall_clock,
                    wall_clock_rom: elapsed,
                    failure: Some(e.to_string()),
                };
                roms.push(RomRun { report, trajectory: None });
            }
        }
    }
    Ok(BenchResult { schedule, fom, basis, energy, roms, notes })
}

pub fn summary_csv(result: &BenchResult) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for run in &result.roms {
        let e = &run.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            e.case_name,
            e.mode.as_str(),
            e.r,
            fmt_f64(e.lambda),
            e.scenario,
            fmt_f64(e.delta_err),
            fmt_f64(e.omega_err),
            fmt_f64(e.wall_clock_fom),
            fmt_f64(e.wall_clock_rom)
        );
    }
    s
}

pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut s = String::from("r,linear,quadratic,underdetermined\n");
    for row in rows {
        let _ = writeln!(s, "{},{},{},{}", row.r, fmt_f64(row.linear), fmt_f64(row.quadratic), row.underdetermined);
    }
    s
}

pub fn machines_csv(result: &BenchResult, case: &PowerCase) -> String {
    let mut s = String::from("machine,bus,mode,err_delta,err_omega\n");
    for run in &result.roms {
        for (i, (d, w)) in run.report.per_machine.iter().enumerate() {
            let bus = case.gens.get(i).map_or(0, |g| g.bus);
            let _ = writeln!(s, "{},{bus},{},{},{}", i + 1, run.report.mode.as_str(), fmt_f64(*d), fmt_f64(*w));
        }
    }
    s
}

pub fn meta_txt(spec: &RunSpec, result: &BenchResult, argv: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command = {}", argv.join(" "));
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "case = {}", spec.case.name);
    if let Some(p) = &spec.case_path {
        let _ = writeln!(s, "case_path = {}", p.display());
    }
    let _ = writeln!(s, "case_sha256 = {}", spec.case_checksum);
    let _ = writeln!(
        s,
        "case_counts = {} buses, {} generators, {} branches",
        spec.case.buses.len(),
        spec.case.gens.len(),
        spec.case.branches.len()
    );
    let _ = writeln!(s, "model = {:?}", spec.kind);
    let _ = writeln!(s, "scenario = {}", spec.scenario_name);
    for e in &spec.events {
        let _ = writeln!(s, "event = {}", render_event(e));
    }
    match &spec.train_events {
        Some((name, events)) => {
            let _ = writeln!(s, "train_scenario = {name}");
            for e in events {
                let _ = writeln!(s, "train_event = {}", render_event(e));
            }
        }
        None => {
            let _ = writeln!(s, "train_scenario = same");
        }
    }
    for seg in &result.schedule.segments {
        let _ = writeln!(s, "segment = [{}, {}] steps {}..{}", fmt_f64(seg.t_start), fmt_f64(seg.t_end), seg.step_start, seg.step_end);
    }
    let _ = writeln!(s, "t0 = {}\ndt = {}\nt_end = {}", fmt_f64(spec.t0), fmt_f64(spec.dt), fmt_f64(spec.t_end));
    let _ = writeln!(s, "integrator = implicit euler");
    let _ = writeln!(s, "newton_tol = {}\nnewton_max_iter = {}", fmt_f64(spec.newton.tol), spec.newton.max_iter);
    match spec.rank {
        RankSelection::Fixed(r) => {
            let _ = writeln!(s, "rank = fixed {r}");
        }
        RankSelection::Energy(k) => {
            let _ = writeln!(s, "rank = energy kappa {}", fmt_f64(k));
        }
    }
    let _ = writeln!(s, "r = {}", result.basis.r());
    let _ = writeln!(s, "lambda = {}", fmt_f64(spec.lambda));
    let _ = writeln!(s, "pairing = {PAIRING_TAG}");
    let _ = writeln!(s, "error_norm = frobenius over trajectory block, all machines");
    for line in render_params(&spec.params, &spec.case).lines() {
        let _ = writeln!(s, "param {line}");
    }
    for n in &result.notes {
        let _ = writeln!(s, "note = {n}");
    }
    s
}

fn io_write(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)
}

/// Writes `<out>/<case>/<scenario>/` and returns that directory.
pub fn write_artifacts(out: &Path, spec: &RunSpec, result: &BenchResult, argv: &[String]) -> std::io::Result<PathBuf> {
    let dir = out.join(&spec.case.name).join(&spec.scenario_name);
    std::fs::create_dir_all(&dir)?;
    io_write(&dir.join("fom.csv"), &write_trajectory(&result.fom, None))?;
    for run in &result.roms {
        let name = format!("rom_{}.csv", run.report.mode.as_str());
        match &run.trajectory {
            Some(t) => io_write(&dir.join(name), &write_trajectory(t, Some(run.report.mode)))?,
            None => {
                let _ = std::fs::remove_file(dir.join(name));
            }
        }
    }
    io_write(&dir.join("energy.csv"), &energy_csv(&result.energy))?;
    io_write(&dir.join("summary.csv"), &summary_csv(result))?;
    io_write(&dir.join("machines.csv"), &machines_csv(result, &spec.case))?;
    io_write(&dir.join("basis.txt"), &crate::formats::write_basis(&result.basis))?;
    io_write(&dir.join("meta.txt"), &meta_txt(spec, result, argv))?;
    Ok(dir)
}
