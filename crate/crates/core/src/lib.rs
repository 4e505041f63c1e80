//! Swing-equation grid models and their reduced-order counterparts.
//!
//! The crate is `no_std` (it needs `alloc`) and keeps every numerical path
//! free of IO: case ingestion, file formats, timing and the command line live
//! in the `swingmor` companion crate.
//!
//! The pipeline runs in this order:
//!
//! 1. [`case`]: validated bus/generator/branch records.
//! 2. [`network`]: admittance assembly, generator internal nodes, Kron
//!    reduction and the effective-network (EN) / synchronous-motor (SM)
//!    swing parameters.
//! 3. [`swing`] and [`integrate`]: the first-order swing dynamics, their
//!    Jacobian and a fixed-step implicit Euler integrator with Newton solves.
//! 4. [`mor`]: the POD basis and the quadratic-manifold operator fitted by
//!    regularized least squares, plus retained-energy metrics.
//! 5. [`rom`]: Galerkin-reduced dynamics on the linear subspace or on the
//!    quadratic manifold.
//! 6. [`scenario`]: timed disturbances compiled into piecewise models.
//! 7. [`metrics`]: relative trajectory errors and energy sweeps.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod case;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod metrics;
pub mod mor;
pub mod network;
pub mod rom;
pub mod scenario;
pub mod swing;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub use case::{BranchRecord, BusRecord, BusType, GenRecord, PowerCase};
pub use error::{CaseError, Error, MetricError, MorError, NetworkError, Result, ScenarioError, SolveError};
pub use integrate::{implicit_euler_simulate, ImplicitSystem, NewtonSettings};
pub use mor::{ManifoldBasis, PodBasis, QuadOperator, RankSelection, RetainedEnergy};
pub use network::{AdmittanceMatrix, GenDynamicParams, ModelKind, NetworkEdits, SwingModel};
pub use rom::{ReducedTrajectory, RomConfig, RomMode};
pub use scenario::{Event, EventKind, Schedule};
pub use swing::{SnapshotMatrix, SwingState, Trajectory};
