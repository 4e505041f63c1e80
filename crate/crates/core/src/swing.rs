//! First-order swing dynamics `x = (delta; omega)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{MorError, SolveError};
use crate::integrate::{implicit_euler_simulate, ImplicitSystem, NewtonSettings, Samples};
use crate::network::SwingModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SwingState {
    pub delta: DVector<f64>,
    pub omega: DVector<f64>,
}

impl SwingState {
    pub fn new(delta: DVector<f64>, omega: DVector<f64>) -> Self {
        assert_eq!(delta.len(), omega.len());
        SwingState { delta, omega }
    }

    /// Internal EMF angles with zero frequency deviation.
    pub fn initial(model: &SwingModel) -> Self {
        SwingState { delta: model.delta0.clone(), omega: DVector::zeros(model.n()) }
    }

    pub fn from_stacked(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        SwingState { delta: x.rows(0, n).into_owned(), omega: x.rows(n, n).into_owned() }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.delta.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.delta[i] } else { self.omega[i - n] })
    }
}

/// Time grid plus stacked states, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Integration time in seconds; filled in by callers that own a clock.
    pub wall_clock: f64,
}

impl Trajectory {
    pub fn from_samples(s: Samples) -> Self {
        Trajectory { times: s.times, states: s.states, wall_clock: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of machines or nodes.
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |x| x.len() / 2)
    }

    pub fn state(&self, k: usize) -> SwingState {
        SwingState::from_stacked(&self.states[k])
    }

    /// `2n x samples` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let rows = self.states.first().map_or(0, |x| x.len());
        DMatrix::from_fn(rows, self.len(), |i, j| self.states[j][i])
    }

    /// Arithmetic mean over machines of the angle and frequency blocks.
    pub fn averages(&self) -> Vec<(f64, f64)> {
        let n = self.n() as f64;
        self.states
            .iter()
            .map(|x| {
                let k = x.len() / 2;
                (x.rows(0, k).sum() / n, x.rows(k, k).sum() / n)
            })
            .collect()
    }
}

/// Samples as columns and the reference the reductions are centred on.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub x: DMatrix<f64>,
    pub x_ref: DVector<f64>,
}

impl SnapshotMatrix {
    pub fn new(x: DMatrix<f64>, x_ref: DVector<f64>) -> Result<Self, MorError> {
        if x.ncols() == 0 {
            return Err(MorError::EmptySnapshots);
        }
        if x.nrows() != x_ref.len() {
            return Err(MorError::DimensionMismatch { expected: x.nrows(), found: x_ref.len() });
        }
        Ok(SnapshotMatrix { x, x_ref })
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// `X - x_ref 1^T`.
    pub fn shifted(&self) -> DMatrix<f64> {
        let mut s = self.x.clone();
        for mut c in s.column_iter_mut() {
            c -= &self.x_ref;
        }
        s
    }
}

/// Every sample after the first becomes a column; the first is the reference.
pub fn collect_snapshots(traj: &Trajectory) -> Result<SnapshotMatrix, MorError> {
    if traj.len() < 2 {
        return Err(MorError::EmptySnapshots);
    }
    let rows = traj.states[0].len();
    let x = DMatrix::from_fn(rows, traj.len() - 1, |i, j| traj.states[j + 1][i]);
    SnapshotMatrix::new(x, traj.states[0].clone())
}

fn check_dim(model: &SwingModel, x: &[f64]) -> Result<(), SolveError> {
    if x.len() != model.state_dim() {
        return Err(SolveError::DimensionMismatch { expected: model.state_dim(), found: x.len() });
    }
    Ok(())
}

/// `K cos(gamma)` and `K sin(gamma)`. With these the coupling sums become
/// matrix-vector products in `sin(delta)` and `cos(delta)`, so evaluating
/// the dynamics costs `n` trig calls instead of `n^2`.
#[derive(Debug, Clone)]
pub(crate) struct Coupling {
    kc: DMatrix<f64>,
    ks: DMatrix<f64>,
}

impl Coupling {
    pub(crate) fn new(model: &SwingModel) -> Self {
        let kc = model.k.zip_map(&model.gamma, |k, g| k * g.cos());
        let ks = model.k.zip_map(&model.gamma, |k, g| k * g.sin());
        Coupling { kc, ks }
    }

    fn trig(delta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let n = delta.len();
        let mut s = DVector::zeros(n);
        let mut c = DVector::zeros(n);
        for i in 0..n {
            let (si, ci) = delta[i].sin_cos();
            s[i] = si;
            c[i] = ci;
        }
        (s, c)
    }

    /// Writes the full stacked derivative into `out`.
    pub(crate) fn rhs_into(&self, model: &SwingModel, x: &[f64], out: &mut [f64]) {
        let n = model.n();
        let (delta, omega) = x.split_at(n);
        let (s, c) = Self::trig(delta);
        // sin(a - b - g) = (s_a c_b - c_a s_b) cos g - (c_a c_b + s_a s_b) sin g
        let kc_c = &self.kc * &c;
        let kc_s = &self.kc * &s;
        let ks_c = &self.ks * &c;
        let ks_s = &self.ks * &s;
        for i in 0..n {
            let coupling = s[i] * (kc_c[i] - ks_s[i]) - c[i] * (kc_s[i] + ks_c[i]);
            out[i] = omega[i];
            out[n + i] = (-model.d[i] * omega[i] + model.f_const[i] - coupling) / model.m[i];
        }
    }

    /// The `A(delta)` block: `dω̇_i/dδ_j`.
    pub(crate) fn block(&self, model: &SwingModel, delta: &[f64]) -> DMatrix<f64> {
        let n = model.n();
        let (s, c) = Self::trig(delta);
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    let cos_d = c[i] * c[j] + s[i] * s[j];
                    let sin_d = s[i] * c[j] - c[i] * s[j];
                    a[(i, j)] = (self.kc[(i, j)] * cos_d + self.ks[(i, j)] * sin_d) / model.m[i];
                }
            }
        }
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                diag -= a[(i, j)];
            }
            a[(i, i)] = diag;
        }
        a
    }

    fn jacobian(&self, model: &SwingModel, x: &[f64]) -> DMatrix<f64> {
        let n = model.n();
        let a = self.block(model, &x[..n]);
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, n + i)] = -model.d[i] / model.m[i];
        }
        j.view_mut((n, 0), (n, n)).copy_from(&a);
        j
    }
}

pub fn fom_rhs(model: &SwingModel, x: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
    check_dim(model, x.as_slice())?;
    let mut out = DVector::zeros(x.len());
    Coupling::new(model).rhs_into(model, x.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub fn fom_jacobian(model: &SwingModel, x: &DVector<f64>) -> Result<DMatrix<f64>, SolveError> {
    check_dim(model, x.as_slice())?;
    Ok(Coupling::new(model).jacobian(model, x.as_slice()))
}

/// `sum m w^2/2 - sum F delta - sum_{i<j} K cos(delta_i - delta_j)`; conserved
/// by the exact flow when damping and phase shifts vanish.
pub fn swing_energy(model: &SwingModel, x: &DVector<f64>) -> f64 {
    let n = model.n();
    let mut e = 0.0;
    for i in 0..n {
        e += 0.5 * model.m[i] * x[n + i] * x[n + i] - model.f_const[i] * x[i];
        for j in (i + 1)..n {
            e -= model.k[(i, j)] * (x[i] - x[j]).cos();
        }
    }
    e
}

/// Full-order model as an integrator target.
pub struct FomSystem<'a> {
    pub model: &'a SwingModel,
    coupling: Coupling,
}

impl<'a> FomSystem<'a> {
    pub fn new(model: &'a SwingModel) -> Self {
        FomSystem { model, coupling: Coupling::new(model) }
    }
}

impl ImplicitSystem for FomSystem<'_> {
    fn dim(&self) -> usize {
        self.model.state_dim()
    }

    fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.coupling.rhs_into(self.model, x.as_slice(), out.as_mut_slice());
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.coupling.jacobian(self.model, x.as_slice())
    }
}

pub fn simulate_fom(
    model: &SwingModel,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    dt: f64,
    newton: &NewtonSettings,
) -> Result<Trajectory, SolveError> {
    let s = implicit_euler_simulate(&FomSystem::new(model), x0, t0, t_end, dt, newton)?;
    Ok(Trajectory::from_samples(s))
}
