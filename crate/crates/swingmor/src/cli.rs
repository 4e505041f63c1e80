//! Command-line front end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swingmor_core::network::build_model;
use swingmor_core::rom::{project_initial_state, reconstruct_trajectory};
use swingmor_core::scenario::{compile_schedule, schedule_simulate, schedule_simulate_rom};
use swingmor_core::swing::collect_snapshots;
use swingmor_core::{
    Error, Event, GenDynamicParams, ManifoldBasis, ModelKind, NetworkEdits, NewtonSettings, PowerCase, RankSelection,
    RomMode, SwingState,
};
use thiserror::Error as ThisError;

use crate::bench::{benchmark_run, default_lambda, with_fault_clearing, write_artifacts, RunSpec, StageError};
use crate::config::{parse_params, parse_scenario, render_event};
use crate::formats::{fmt_f64, read_basis, read_trajectory, sha256_hex, write_basis, write_trajectory};
use crate::matpower::parse_matpower;

#[derive(Debug, ThisError)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Invalid(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Io(_) => 4,
        }
    }
}

fn classify(stage: &str, e: &Error) -> AppError {
    let msg = format!("{stage}: {e}");
    match e {
        Error::Solve(_) | Error::Mor(_) | Error::Network(swingmor_core::NetworkError::SingularReduction { .. }) => {
            AppError::Numerical(msg)
        }
        _ => AppError::Invalid(msg),
    }
}

impl From<StageError> for AppError {
    fn from(e: StageError) -> Self {
        classify(e.stage, &e.source)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "swingmor", version, about = "Swing-equation grid models and their reduced-order surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    En,
    Sm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Linear,
    Quadratic,
}

impl From<Mode> for RomMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Linear => RomMode::Linear,
            Mode::Quadratic => RomMode::Quadratic,
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// MATPOWER case file.
    case: PathBuf,
    /// Dynamic parameter file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "en")]
    model: Model,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 5.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    #[arg(long, default_value_t = 20)]
    newton_max_iter: usize,
    /// Output directory; defaults to $SWINGMOR_OUT or ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    /// Fixed reduced dimension.
    #[arg(long, conflicts_with = "kappa")]
    r: Option<usize>,
    /// Energy threshold for choosing r (default 0.9999).
    #[arg(long)]
    kappa: Option<f64>,
    /// Ridge weight; defaults per case (118: 0.1, 300: 1, 2736: 1e-3).
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    rank: RankArgs,
    /// Train the bases on this scenario instead of the simulated one.
    #[arg(long)]
    train_scenario: Option<PathBuf>,
    /// Run each r in a:b (inclusive), one artifact directory per r.
    #[arg(long, conflicts_with_all = ["r", "kappa"])]
    sweep_r: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a case file and print its size.
    Parse { case: PathBuf },
    /// Full-order simulation only.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Fit POD and quadratic-manifold bases from a trajectory CSV.
    Reduce {
        /// MATPOWER case file the trajectory came from.
        case: PathBuf,
        trajectory: PathBuf,
        #[command(flatten)]
        rank: RankArgs,
        /// Basis file to write; defaults to <out>/<case>/basis.txt.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a ROM from a persisted basis.
    Rom {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long, value_enum, default_value = "quadratic")]
        mode: Mode,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Trajectory file to write; defaults to <out>/<case>/<scenario>/rom_<mode>.csv.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// FOM against linear and quadratic ROMs on the unfaulted case.
    Compare(CompareArgs),
    /// Same as compare, driven by a scenario file.
    Fault {
        #[command(flatten)]
        compare: CompareArgs,
        #[arg(long)]
        scenario: PathBuf,
        /// Clear every active bus fault at this time instead of at a later line trip.
        #[arg(long)]
        fault_clear_time: Option<f64>,
    },
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("SWINGMOR_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn case_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "case".into(), |s| s.to_string_lossy().into_owned())
}

struct Loaded {
    case: PowerCase,
    checksum: String,
    file_counts: (usize, usize, usize),
}

fn load_case(path: &Path) -> Result<Loaded, AppError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let parsed = parse_matpower(&text, &case_name(path)).map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        case: parsed.case,
        checksum: sha256_hex(&bytes),
        file_counts: (parsed.file_buses, parsed.file_gens, parsed.file_branches),
    })
}

fn load_params(args: &ModelArgs, case: &PowerCase) -> Result<GenDynamicParams, AppError> {
    match &args.config {
        Some(p) => parse_params(&read(p)?, case).map_err(|e| AppError::Invalid(format!("{}: {e}", p.display()))),
        None => Ok(GenDynamicParams::defaults_for(case)),
    }
}

fn load_events(path: &Path) -> Result<Vec<Event>, AppError> {
    parse_scenario(&read(path)?).map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))
}

fn scenario_name(path: Option<&PathBuf>) -> String {
    path.map_or_else(|| "unfaulted".into(), |p| case_name(p))
}

fn kind(m: Model) -> ModelKind {
    match m {
        Model::En => ModelKind::En,
        Model::Sm => ModelKind::Sm,
    }
}

fn newton(args: &ModelArgs) -> NewtonSettings {
    NewtonSettings { tol: args.newton_tol, max_iter: args.newton_max_iter }
}

fn check_grid(args: &ModelArgs) -> Result<(), AppError> {
    if !(args.dt > 0.0) || !args.dt.is_finite() {
        return Err(AppError::Usage(format!("--dt must be positive, got {}", args.dt)));
    }
    if !(args.t_end >= args.dt) {
        return Err(AppError::Usage(format!("--t-end must be at least dt, got {}", args.t_end)));
    }
    Ok(())
}

fn rank(args: &RankArgs) -> Result<RankSelection, AppError> {
    match (args.r, args.kappa) {
        (Some(0), _) => Err(AppError::Usage("--r must be at least 1".into())),
        (Some(r), _) => Ok(RankSelection::Fixed(r)),
        (None, Some(k)) if !(k > 0.0 && k < 1.0) => Err(AppError::Usage(format!("--kappa must lie in (0, 1), got {k}"))),
        (None, Some(k)) => Ok(RankSelection::Energy(k)),
        (None, None) => Ok(RankSelection::default()),
    }
}

fn parse_sweep(s: &str) -> Result<Vec<usize>, AppError> {
    let bad = || AppError::Usage(format!("--sweep-r expects a:b with 1 <= a <= b, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn cmd_parse(case: &Path) -> Result<(), AppError> {
    let l = load_case(case)?;
    let (b, g, br) = (l.case.buses.len(), l.case.gens.len(), l.case.branches.len());
    println!("{b} buses, {g} generators, {br} branches");
    let (fb, fg, fbr) = l.file_counts;
    if (fb, fg, fbr) != (b, g, br) {
        println!("file rows: {fb} buses, {fg} generators, {fbr} branches (out-of-service rows dropped)");
    }
    println!("sha256 {}", l.checksum);
    Ok(())
}

fn cmd_simulate(args: &ModelArgs, scenario: Option<&PathBuf>, argv: &[String]) -> Result<(), AppError> {
    check_grid(args)?;
    let l = load_case(&args.case)?;
    let params = load_params(args, &l.case)?;
    let events = scenario.map(|p| load_events(p)).transpose()?.unwrap_or_default();
    let schedule = compile_schedule(&l.case, &params, kind(args.model), &events, 0.0, args.t_end, args.dt)
        .map_err(|e| classify("scenario", &e))?;
    let x0 = SwingState::initial(schedule.base_model()).stacked();
    let clock = Instant::now();
    let traj = schedule_simulate(&schedule, &x0, &newton(args)).map_err(|e| classify("fom", &e.into()))?;
    let wall = clock.elapsed().as_secs_f64();
    let dir = out_dir(&args.out).join(&l.case.name).join(scenario_name(scenario));
    write(&dir.join("fom.csv"), &write_trajectory(&traj, None))?;
    let mut meta = format!(
        "command = {}\ncase = {}\ncase_path = {}\ncase_sha256 = {}\nmodel = {:?}\ndt = {}\nt_end = {}\nnewton_tol = {}\nnewton_max_iter = {}\nt_fom_s = {}\n",
        argv.join(" "),
        l.case.name,
        args.case.display(),
        l.checksum,
        kind(args.model),
        fmt_f64(args.dt),
        fmt_f64(args.t_end),
        fmt_f64(args.newton_tol),
        args.newton_max_iter,
        fmt_f64(wall)
    );
    for e in &events {
        meta.push_str(&format!("event = {}\n", render_event(e)));
    }
    for n in &schedule.notes {
        meta.push_str(&format!("note = {n}\n"));
    }
    for line in crate::config::render_params(&params, &l.case).lines() {
        meta.push_str(&format!("param {line}\n"));
    }
    write(&dir.join("meta.txt"), &meta)?;
    println!("{} samples, {} machines, {:.3} s -> {}", traj.len(), traj.n(), wall, dir.display());
    Ok(())
}

fn cmd_reduce(
    case: &Path,
    trajectory: &Path,
    rank_args: &RankArgs,
    output: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<(), AppError> {
    let l = load_case(case)?;
    let file = read_trajectory(&read(trajectory)?).map_err(|e| AppError::Invalid(format!("{}: {e}", trajectory.display())))?;
    let snaps = collect_snapshots(&file.trajectory).map_err(|e| classify("snapshots", &e.into()))?;
    let sel = rank(rank_args)?;
    let lambda = rank_args.lambda.unwrap_or_else(|| default_lambda(&l.case.name));
    let pod = swingmor_core::mor::pod_basis(&snaps, sel).map_err(|e| classify("pod", &e.into()))?;
    let basis = ManifoldBasis::fit(&snaps, pod, lambda).map_err(|e| classify("quadratic fit", &e.into()))?;
    let energy = swingmor_core::mor::retained_energy(&snaps, &basis).map_err(|e| classify("energy", &e.into()))?;
    let path = output.clone().unwrap_or_else(|| out_dir(out).join(&l.case.name).join("basis.txt"));
    write(&path, &write_basis(&basis))?;
    println!(
        "r = {}, lambda = {}, retained energy linear {} quadratic {} -> {}",
        basis.r(),
        lambda,
        energy.linear,
        energy.quadratic,
        path.display()
    );
    Ok(())
}

fn cmd_rom(
    args: &ModelArgs,
    basis_path: &Path,
    mode: RomMode,
    scenario: Option<&PathBuf>,
    output: &Option<PathBuf>,
) -> Result<(), AppError> {
    check_grid(args)?;
    let l = load_case(&args.case)?;
    let params = load_params(args, &l.case)?;
    let basis = read_basis(&read(basis_path)?).map_err(|e| AppError::Invalid(format!("{}: {e}", basis_path.display())))?;
    let events = scenario.map(|p| load_events(p)).transpose()?.unwrap_or_default();
    let schedule = compile_schedule(&l.case, &params, kind(args.model), &events, 0.0, args.t_end, args.dt)
        .map_err(|e| classify("scenario", &e))?;
    let base = build_model(&l.case, &params, &NetworkEdits::default(), kind(args.model))
        .map_err(|e| classify("model", &e.into()))?;
    if basis.dim() != base.state_dim() {
        return Err(AppError::Invalid(format!(
            "{}: basis dimension {} does not match the model state dimension {}",
            basis_path.display(),
            basis.dim(),
            base.state_dim()
        )));
    }
    let x0 = SwingState::initial(&base).stacked();
    let xr0 = project_initial_state(&basis, &x0).map_err(|e| classify("rom", &e.into()))?;
    let clock = Instant::now();
    let mut red =
        schedule_simulate_rom(&schedule, &basis, mode, &xr0, &newton(args)).map_err(|e| classify("rom", &e.into()))?;
    red.wall_clock = clock.elapsed().as_secs_f64();
    let traj = reconstruct_trajectory(&basis, mode, &red).map_err(|e| classify("reconstruct", &e.into()))?;
    let path = output.clone().unwrap_or_else(|| {
        out_dir(&args.out)
            .join(&l.case.name)
            .join(scenario_name(scenario))
            .join(format!("rom_{}.csv", mode.as_str()))
    });
    write(&path, &write_trajectory(&traj, Some(mode)))?;
    println!("{} ROM r = {}: {} samples, {:.3} s -> {}", mode.as_str(), basis.r(), traj.len(), red.wall_clock, path.display());
    Ok(())
}

fn run_compare(
    args: &CompareArgs,
    scenario: Option<(&PathBuf, Vec<Event>)>,
    argv: &[String],
) -> Result<(), AppError> {
    let m = &args.model;
    check_grid(m)?;
    let l = load_case(&m.case)?;
    let mut spec = RunSpec::new(l.case.clone(), l.checksum.clone());
    spec.case_path = Some(m.case.clone());
    spec.params = load_params(m, &l.case)?;
    spec.kind = kind(m.model);
    spec.dt = m.dt;
    spec.t_end = m.t_end;
    spec.newton = newton(m);
    spec.rank = rank(&args.rank)?;
    if let Some(lambda) = args.rank.lambda {
        spec.lambda = lambda;
    }
    if let Some((path, events)) = scenario {
        spec.scenario_name = scenario_name(Some(path));
        spec.events = events;
    }
    if let Some(p) = &args.train_scenario {
        spec.train_events = Some((scenario_name(Some(p)), load_events(p)?));
    }
    let rs = match &args.sweep_r {
        Some(s) => parse_sweep(s)?,
        None => Vec::new(),
    };
    let out = out_dir(&m.out);
    let mut failed = None;
    let runs: Vec<RunSpec> = if rs.is_empty() {
        vec![spec]
    } else {
        rs.iter()
            .map(|&r| {
                let mut s = spec.clone();
                s.rank = RankSelection::Fixed(r);
                s.scenario_name = format!("{}_r{r}", spec.scenario_name);
                s
            })
            .collect()
    };
    for s in &runs {
        let result = benchmark_run(s)?;
        let dir = write_artifacts(&out, s, &result, argv).map_err(|e| io_err(&out, e))?;
        for run in &result.roms {
            let e = &run.report;
            match &e.failure {
                None => println!(
                    "{} r={} lambda={}: err_delta {:.3e} err_omega {:.3e} t_fom {:.3} s t_rom {:.3} s",
                    e.mode.as_str(),
                    e.r,
                    e.lambda,
                    e.delta_err,
                    e.omega_err,
                    e.wall_clock_fom,
                    e.wall_clock_rom
                ),
                Some(f) => {
                    println!("{} r={} lambda={}: failed: {f}", e.mode.as_str(), e.r, e.lambda);
                    failed.get_or_insert_with(|| f.clone());
                }
            }
        }
        println!("artifacts in {}", dir.display());
    }
    match failed {
        Some(f) => Err(AppError::Numerical(f)),
        None => Ok(()),
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<(), AppError> {
    match cli.command {
        Command::Parse { case } => cmd_parse(&case),
        Command::Simulate { model, scenario } => cmd_simulate(&model, scenario.as_ref(), argv),
        Command::Reduce { case, trajectory, rank, output, out } => cmd_reduce(&case, &trajectory, &rank, &output, &out),
        Command::Rom { model, basis, mode, scenario, output } => cmd_rom(&model, &basis, mode.into(), scenario.as_ref(), &output),
        Command::Compare(args) => run_compare(&args, None, argv),
        Command::Fault { compare, scenario, fault_clear_time } => {
            let mut events = load_events(&scenario)?;
            if let Some(t) = fault_clear_time {
                events = with_fault_clearing(&events, t);
            }
            run_compare(&compare, Some((&scenario, events)), argv)
        }
    }
}

/// Runs the CLI and returns the process exit status.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
