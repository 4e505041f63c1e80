use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Invariant violations found while validating a [`crate::PowerCase`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("base MVA must be positive, got {0}")]
    NonPositiveBaseMva(f64),
    #[error("bus {0} appears more than once")]
    DuplicateBus(u32),
    #[error("{record} references unknown bus {bus}")]
    UnknownBus { record: String, bus: u32 },
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("bus {bus} has non-positive voltage magnitude {vm}")]
    NonPositiveVm { bus: u32, vm: f64 },
    #[error("unsupported type {btype} for bus {bus}")]
    UnsupportedBusType { bus: u32, btype: i64 },
    #[error("{record} has zero series impedance")]
    ZeroImpedance { record: String },
    #[error("{record} is in service with non-positive machine base {mbase}")]
    NonPositiveMbase { record: String, mbase: f64 },
    #[error("{record} has a non-finite field")]
    NonFinite { record: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("branch {from}-{to} has zero series impedance")]
    ZeroImpedanceBranch { from: u32, to: u32 },
    #[error("generator at bus {bus} has zero terminal voltage")]
    ZeroTerminalVoltage { bus: u32 },
    #[error("bus {0} is not part of the model")]
    UnknownBus(u32),
    #[error("generator index {0} is out of range")]
    UnknownGenerator(usize),
    #[error("eliminated block is singular (pivot ratio estimate {pivot_ratio:e})")]
    SingularReduction { pivot_ratio: f64 },
    #[error("keep set is invalid: {0}")]
    InvalidKeepSet(&'static str),
    #[error("dynamic parameters cover {found} generators, case has {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("dynamic parameter {name} is out of range for generator {index}")]
    InvalidParam { name: &'static str, index: usize },
}

/// Failures of the time integrator and of dimension checks around it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Newton did not converge at step {step} (residual {residual:e})")]
    NewtonDiverged { step: usize, residual: f64 },
    #[error("{mode} ROM: Newton did not converge at step {step} (residual {residual:e})")]
    RomDiverged { mode: &'static str, step: usize, residual: f64 },
    #[error("singular Newton matrix at step {step}")]
    SingularNewtonMatrix { step: usize },
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(&'static str),
    #[error("empty trajectory")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MorError {
    #[error("requested rank {r} exceeds min(rows, cols) = {max}")]
    RankTooLarge { r: usize, max: usize },
    #[error("energy threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("regularization weight must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("shifted snapshot data has zero energy")]
    ZeroSnapshotEnergy,
    #[error("no snapshots")]
    EmptySnapshots,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("factorization of the regularized normal matrix failed")]
    Factorization,
    #[error("quadratic mode requires a fitted quadratic operator")]
    MissingQuadratic,
    #[error("SVD did not converge")]
    Svd,
    #[error("reduced dimension must be at least 1")]
    ZeroRank,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("trajectories are on different time grids")]
    GridMismatch,
    #[error("selected block has zero norm in the reference trajectory")]
    ZeroNormTruth,
    #[error("machine index {index} out of range for {n} machines")]
    MachineOutOfRange { index: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("event at t={time} lies outside [{t0}, {t_end}]")]
    OutOfRange { time: f64, t0: f64, t_end: f64 },
    #[error("event at t={time} is not aligned with the step grid dt={dt}")]
    Misaligned { time: f64, dt: f64 },
    #[error("events are not sorted by time")]
    Unsorted,
    #[error("event target not found: {0}")]
    UnknownTarget(String),
    #[error("event references removed equipment: {0}")]
    RemovedEquipment(String),
    #[error("network islands after event at t={time}")]
    Islanding { time: f64 },
}

/// Top-level error wrapping every stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mor(#[from] MorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
