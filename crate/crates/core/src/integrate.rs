//! Fixed-step implicit Euler with a full Newton solve per step.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::SolveError;
use crate::linalg::norm_inf;

/// An autonomous system `x' = f(x)` with a dense Jacobian.
pub trait ImplicitSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Infinity-norm tolerance on the step residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { tol: 1e-10, max_iter: 20 }
    }
}

/// Times and states of an integration, first sample included.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Total Newton iterations over the run.
    pub newton_iterations: usize,
}

/// Number of `dt` steps spanning `[t0, t_end]`, rejecting grids that do not
/// divide the interval.
pub fn step_count(t0: f64, t_end: f64, dt: f64) -> Result<usize, SolveError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SolveError::InvalidTimeGrid("dt must be positive"));
    }
    if !(t_end >= t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(SolveError::InvalidTimeGrid("t_end must not precede t0"));
    }
    let steps = (t_end - t0) / dt;
    let rounded = num_traits::Float::round(steps);
    if (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(SolveError::InvalidTimeGrid("interval is not a multiple of dt"));
    }
    Ok(rounded as usize)
}

/// One implicit Euler step from `x_prev`; returns the new state and the
/// Newton iteration count.
pub fn implicit_euler_step<S: ImplicitSystem + ?Sized>(
    sys: &S,
    x_prev: &DVector<f64>,
    dt: f64,
    newton: &NewtonSettings,
    step: usize,
) -> Result<(DVector<f64>, usize), SolveError> {
    let n = sys.dim();
    let mut x = x_prev.clone();
    let mut f = DVector::zeros(n);
    let residual = |x: &DVector<f64>, f: &mut DVector<f64>| {
        sys.rhs(x, f);
        x - x_prev - &*f * dt
    };
    let mut g = residual(&x, &mut f);
    let mut res = norm_inf(g.as_slice());
    let mut iters = 0;
    while !(res < newton.tol) {
        if iters == newton.max_iter || !res.is_finite() {
            return Err(SolveError::NewtonDiverged { step, residual: res });
        }
        let mut a = sys.jacobian(&x) * (-dt);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let delta = a.lu().solve(&g).ok_or(SolveError::SingularNewtonMatrix { step })?;
        x -= delta;
        iters += 1;
        g = residual(&x, &mut f);
        res = norm_inf(g.as_slice());
    }
    Ok((x, iters))
}

pub fn implicit_euler_simulate<S: ImplicitSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    dt: f64,
    newton: &NewtonSettings,
) -> Result<Samples, SolveError> {
    if x0.len() != sys.dim() {
        return Err(SolveError::DimensionMismatch { expected: sys.dim(), found: x0.len() });
    }
    let steps = step_count(t0, t_end, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t0);
    states.push(x0.clone());
    let mut total = 0;
    for k in 1..=steps {
        let (x, it) = implicit_euler_step(sys, &states[k - 1], dt, newton, k)?;
        total += it;
        times.push(t0 + k as f64 * dt);
        states.push(x);
    }
    Ok(Samples { times, states, newton_iterations: total })
}
