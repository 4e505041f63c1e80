//! Galerkin-reduced swing dynamics on a linear subspace or a quadratic
//! manifold. The full right-hand side is evaluated at the reconstructed
//! state and projected with `V^T`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{MorError, SolveError};
use crate::integrate::{implicit_euler_simulate, ImplicitSystem, NewtonSettings};
use crate::mor::{dedup_kron_jacobian, dedup_kron_vec, ManifoldBasis};
use crate::network::SwingModel;
use crate::swing::{Coupling, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomMode {
    Linear,
    Quadratic,
}

impl RomMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RomMode::Linear => "linear",
            RomMode::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RomConfig {
    pub mode: RomMode,
    pub basis: ManifoldBasis,
    pub t0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub newton: NewtonSettings,
}

impl RomConfig {
    pub fn check(&self) -> Result<(), MorError> {
        if self.mode == RomMode::Quadratic && self.basis.quad.is_none() {
            return Err(MorError::MissingQuadratic);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub xr_states: Vec<DVector<f64>>,
    pub wall_clock: f64,
}

fn check_len(expected: usize, found: usize) -> Result<(), SolveError> {
    if expected != found {
        return Err(SolveError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn project_initial_state(basis: &ManifoldBasis, x0: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
    check_len(basis.dim(), x0.len())?;
    Ok(basis.pod.v.tr_mul(&(x0 - &basis.x_ref)))
}

fn quad_or_err(basis: &ManifoldBasis) -> &DMatrix<f64> {
    &basis.quad.as_ref().expect("quadratic mode checked by caller").vbar
}

/// `x_ref + V q` or `x_ref + V q + V̄ kron(q)`.
pub fn reconstruct(basis: &ManifoldBasis, mode: RomMode, xr: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
    check_len(basis.r(), xr.len())?;
    if mode == RomMode::Quadratic && basis.quad.is_none() {
        return Err(SolveError::DimensionMismatch { expected: basis.r(), found: 0 });
    }
    Ok(reconstruct_unchecked(basis, mode, xr))
}

fn reconstruct_unchecked(basis: &ManifoldBasis, mode: RomMode, xr: &DVector<f64>) -> DVector<f64> {
    let mut x = &basis.x_ref + &basis.pod.v * xr;
    if mode == RomMode::Quadratic {
        x += quad_or_err(basis) * dedup_kron_vec(xr.as_slice());
    }
    x
}

/// Tangent of the reconstruction map, `V` or `V + V̄ dkron(q)/dq`.
pub fn tangent(basis: &ManifoldBasis, mode: RomMode, xr: &DVector<f64>) -> DMatrix<f64> {
    match mode {
        RomMode::Linear => basis.pod.v.clone(),
        RomMode::Quadratic => &basis.pod.v + quad_or_err(basis) * dedup_kron_jacobian(xr.as_slice()),
    }
}

pub fn rom_rhs(
    model: &SwingModel,
    basis: &ManifoldBasis,
    mode: RomMode,
    xr: &DVector<f64>,
) -> Result<DVector<f64>, SolveError> {
    check_len(model.state_dim(), basis.dim())?;
    let x = reconstruct(basis, mode, xr)?;
    let mut f = DVector::zeros(x.len());
    Coupling::new(model).rhs_into(model, x.as_slice(), f.as_mut_slice());
    Ok(basis.pod.v.tr_mul(&f))
}

/// Reduced dynamics as an integrator target.
pub struct RomSystem<'a> {
    pub model: &'a SwingModel,
    pub basis: &'a ManifoldBasis,
    pub mode: RomMode,
    coupling: Coupling,
}

impl<'a> RomSystem<'a> {
    pub fn new(model: &'a SwingModel, basis: &'a ManifoldBasis, mode: RomMode) -> Result<Self, SolveError> {
        check_len(model.state_dim(), basis.dim())?;
        if mode == RomMode::Quadratic && basis.quad.is_none() {
            return Err(SolveError::DimensionMismatch { expected: basis.r(), found: 0 });
        }
        Ok(RomSystem { model, basis, mode, coupling: Coupling::new(model) })
    }

    /// `V^T J(x̂) T(q)` using the block structure of `J`, without forming
    /// the full Jacobian.
    pub fn reduced_jacobian(&self, xr: &DVector<f64>) -> DMatrix<f64> {
        let n = self.model.n();
        let x = reconstruct_unchecked(self.basis, self.mode, xr);
        let t = tangent(self.basis, self.mode, xr);
        let a = self.coupling.block(self.model, &x.as_slice()[..n]);
        let t_delta = t.rows(0, n);
        let t_omega = t.rows(n, n);
        let mut lower = &a * t_delta;
        for i in 0..n {
            let damp = self.model.d[i] / self.model.m[i];
            for c in 0..t.ncols() {
                lower[(i, c)] -= damp * t_omega[(i, c)];
            }
        }
        let v = &self.basis.pod.v;
        v.rows(0, n).tr_mul(&t_omega) + v.rows(n, n).tr_mul(&lower)
    }
}

impl ImplicitSystem for RomSystem<'_> {
    fn dim(&self) -> usize {
        self.basis.r()
    }

    fn rhs(&self, xr: &DVector<f64>, out: &mut DVector<f64>) {
        let x = reconstruct_unchecked(self.basis, self.mode, xr);
        let mut f = DVector::zeros(x.len());
        self.coupling.rhs_into(self.model, x.as_slice(), f.as_mut_slice());
        out.copy_from(&self.basis.pod.v.tr_mul(&f));
    }

    fn jacobian(&self, xr: &DVector<f64>) -> DMatrix<f64> {
        self.reduced_jacobian(xr)
    }
}

pub(crate) fn tag_mode(e: SolveError, mode: RomMode) -> SolveError {
    match e {
        SolveError::NewtonDiverged { step, residual } => SolveError::RomDiverged { mode: mode.as_str(), step, residual },
        other => other,
    }
}

pub fn rom_simulate(model: &SwingModel, config: &RomConfig, xr0: &DVector<f64>) -> Result<ReducedTrajectory, crate::Error> {
    config.check()?;
    let sys = RomSystem::new(model, &config.basis, config.mode)?;
    let s = implicit_euler_simulate(&sys, xr0, config.t0, config.t_end, config.dt, &config.newton)
        .map_err(|e| tag_mode(e, config.mode))?;
    Ok(ReducedTrajectory { times: s.times, xr_states: s.states, wall_clock: 0.0 })
}

pub fn reconstruct_trajectory(
    basis: &ManifoldBasis,
    mode: RomMode,
    rtraj: &ReducedTrajectory,
) -> Result<Trajectory, SolveError> {
    let states = rtraj.xr_states.iter().map(|q| reconstruct(basis, mode, q)).collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory { times: rtraj.times.clone(), states, wall_clock: rtraj.wall_clock })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mor::{pod_basis, PodBasis, QuadOperator, RankSelection};
    use crate::swing::testing::*;
    use crate::swing::{collect_snapshots, fom_rhs, simulate_fom, SwingState};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_basis(n: usize, r: usize, rng: &mut ChaCha8Rng, quad: bool) -> ManifoldBasis {
        let q = DMatrix::from_fn(n, r + 2, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let v = q.columns(0, r).into_owned();
        let perp = q.columns(r, 2).into_owned();
        let p = crate::mor::pair_count(r);
        let vbar = perp * DMatrix::from_fn(2, p, |_, _| rng.gen_range(-0.5..0.5));
        let x_ref = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        ManifoldBasis {
            pod: PodBasis { v, singular_values: DVector::zeros(r), r },
            quad: quad.then(|| QuadOperator { vbar, lambda: 1.0, r, underdetermined: false }),
            x_ref,
        }
    }

    fn identity_basis(n: usize) -> ManifoldBasis {
        ManifoldBasis {
            pod: PodBasis { v: DMatrix::identity(n, n), singular_values: DVector::zeros(n), r: n },
            quad: None,
            x_ref: DVector::zeros(n),
        }
    }

    #[test]
    fn projection_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_basis(8, 3, &mut rng, true);
        assert!(project_initial_state(&b, &b.x_ref).unwrap().amax() == 0.0);
        let a = DVector::from_vec(alloc::vec![0.3, -1.2, 0.7]);
        let x = &b.x_ref + &b.pod.v * &a;
        assert!((project_initial_state(&b, &x).unwrap() - &a).amax() < 1e-12);
        let x = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let q = project_initial_state(&b, &x).unwrap();
        let lhs = (&x - &b.x_ref - &b.pod.v * &q).norm();
        let s = &x - &b.x_ref;
        let rhs = (&s - &b.pod.v * b.pod.v.tr_mul(&s)).norm();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_at_origin_and_degenerate_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = random_basis(8, 3, &mut rng, true);
        let zero = DVector::zeros(3);
        assert_eq!(reconstruct(&b, RomMode::Linear, &zero).unwrap(), b.x_ref);
        assert_eq!(reconstruct(&b, RomMode::Quadratic, &zero).unwrap(), b.x_ref);
        b.quad.as_mut().unwrap().vbar.fill(0.0);
        let q = DVector::from_vec(alloc::vec![0.1, 0.2, -0.3]);
        assert_eq!(reconstruct(&b, RomMode::Linear, &q).unwrap(), reconstruct(&b, RomMode::Quadratic, &q).unwrap());
    }

    #[test]
    fn identity_basis_reproduces_full_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(4, &mut rng, true);
        let b = identity_basis(8);
        let x = random_state(4, &mut rng);
        assert_eq!(rom_rhs(&m, &b, RomMode::Linear, &x).unwrap(), fom_rhs(&m, &x).unwrap());
    }

    #[test]
    fn quadratic_rhs_is_projected_full_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(5, &mut rng, true);
        let b = random_basis(10, 3, &mut rng, true);
        let q = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let x = &b.x_ref + &b.pod.v * &q + &b.quad.as_ref().unwrap().vbar * dedup_kron_vec(q.as_slice());
        let want = b.pod.v.transpose() * fom_rhs(&m, &x).unwrap();
        let got = rom_rhs(&m, &b, RomMode::Quadratic, &q).unwrap();
        assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn missing_operator_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_basis(6, 2, &mut rng, false);
        let cfg = RomConfig { mode: RomMode::Quadratic, basis: b, t0: 0.0, dt: 0.01, t_end: 0.1, newton: NewtonSettings::default() };
        let m = random_model(3, &mut rng, false);
        assert!(matches!(rom_simulate(&m, &cfg, &DVector::zeros(2)), Err(crate::Error::Mor(MorError::MissingQuadratic))));
    }

    #[test]
    fn zero_field_keeps_reduced_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = random_model(3, &mut rng, false);
        m.k.fill(0.0);
        m.f_const.fill(0.0);
        // Zero frequency block makes f vanish everywhere on the basis.
        let mut b = random_basis(6, 2, &mut rng, true);
        b.x_ref.fill(0.0);
        let v = DMatrix::from_row_slice(6, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        b.pod.v = v;
        b.quad.as_mut().unwrap().vbar = DMatrix::from_fn(6, 3, |i, _| if i == 2 { 0.4 } else { 0.0 });
        let cfg = RomConfig { mode: RomMode::Quadratic, basis: b, t0: 0.0, dt: 0.01, t_end: 0.5, newton: NewtonSettings::default() };
        let q0 = DVector::from_vec(alloc::vec![0.3, -0.2]);
        let rt = rom_simulate(&m, &cfg, &q0).unwrap();
        assert!(rt.xr_states.iter().all(|q| *q == q0));
    }

    #[test]
    fn identity_basis_matches_fom() {
        let m = toy3();
        let x0 = SwingState::initial(&m).stacked();
        let fom = simulate_fom(&m, &x0, 0.0, 1.0, 0.01, &NewtonSettings::default()).unwrap();
        let b = identity_basis(6);
        let cfg = RomConfig { mode: RomMode::Linear, basis: b.clone(), t0: 0.0, dt: 0.01, t_end: 1.0, newton: NewtonSettings::default() };
        let rt = rom_simulate(&m, &cfg, &project_initial_state(&b, &x0).unwrap()).unwrap();
        let rec = reconstruct_trajectory(&b, RomMode::Linear, &rt).unwrap();
        assert_eq!(rec.len(), fom.len());
        for (a, c) in rec.states.iter().zip(fom.states.iter()) {
            assert!((a - c).amax() < 1e-10);
        }
    }

    #[test]
    fn zero_operator_matches_linear_run() {
        let m = toy3();
        let x0 = SwingState::initial(&m).stacked();
        let fom = simulate_fom(&m, &x0, 0.0, 2.0, 0.01, &NewtonSettings::default()).unwrap();
        let snaps = collect_snapshots(&fom).unwrap();
        let pod = pod_basis(&snaps, RankSelection::Fixed(2)).unwrap();
        let mut basis = ManifoldBasis::fit(&snaps, pod, 1.0).unwrap();
        basis.quad.as_mut().unwrap().vbar.fill(0.0);
        let q0 = project_initial_state(&basis, &x0).unwrap();
        let run = |mode| {
            let cfg = RomConfig { mode, basis: basis.clone(), t0: 0.0, dt: 0.01, t_end: 2.0, newton: NewtonSettings::default() };
            rom_simulate(&m, &cfg, &q0).unwrap()
        };
        let (a, b) = (run(RomMode::Linear), run(RomMode::Quadratic));
        for (x, y) in a.xr_states.iter().zip(b.xr_states.iter()) {
            assert!((x - y).amax() < 1e-13);
        }
    }

    #[test]
    fn zero_reduced_trajectory_reconstructs_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_basis(6, 2, &mut rng, true);
        let rt = ReducedTrajectory { times: alloc::vec![0.0, 0.1], xr_states: alloc::vec![DVector::zeros(2); 2], wall_clock: 0.0 };
        let t = reconstruct_trajectory(&b, RomMode::Quadratic, &rt).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.states.iter().all(|x| *x == b.x_ref));
    }

    proptest! {
        #[test]
        fn tangent_is_orthonormal_against_basis(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_basis(10, 3, &mut rng, true);
            let q = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let t = tangent(&b, RomMode::Quadratic, &q);
            prop_assert!((b.pod.v.transpose() * t - DMatrix::identity(3, 3)).amax() < 1e-8);
        }

        #[test]
        fn reduced_jacobian_matches_differences(seed in 0u64..500, quad in proptest::bool::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(5, &mut rng, true);
            let b = random_basis(10, 3, &mut rng, true);
            let mode = if quad { RomMode::Quadratic } else { RomMode::Linear };
            let sys = RomSystem::new(&m, &b, mode).unwrap();
            let q = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let j = sys.reduced_jacobian(&q);
            let h = 1e-6;
            for c in 0..3 {
                let mut qp = q.clone(); qp[c] += h;
                let mut qm = q.clone(); qm[c] -= h;
                let fd = (rom_rhs(&m, &b, mode, &qp).unwrap() - rom_rhs(&m, &b, mode, &qm).unwrap()) / (2.0 * h);
                prop_assert!((j.column(c) - &fd).norm() <= 1e-5 * fd.norm().max(1.0));
            }
        }
    }
}
