//! POD bases and the quadratic-manifold correction operator.
//!
//! The manifold approximation is `x ≈ x_ref + V q + V̄ kron(q)` where
//! `kron(q)` holds the unique products `q_i q_j`, `i <= j`, in lexicographic
//! order and without symmetry weights.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::MorError;
use crate::linalg::fix_column_signs;
use crate::swing::SnapshotMatrix;

/// Tag identifying the lifting order and weighting.
pub const PAIRING_TAG: &str = "lex-upper-nounit";

pub const DEFAULT_KAPPA: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSelection {
    Fixed(usize),
    /// Smallest `r` whose cumulative squared singular values exceed this
    /// fraction of the total.
    Energy(f64),
}

impl Default for RankSelection {
    fn default() -> Self {
        RankSelection::Energy(DEFAULT_KAPPA)
    }
}

/// Left singular vectors and the full spectrum of the shifted snapshots.
#[derive(Debug, Clone)]
pub struct PodDecomposition {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

impl PodDecomposition {
    pub fn compute(snaps: &SnapshotMatrix) -> Result<Self, MorError> {
        let s = snaps.shifted();
        if s.iter().all(|&v| v == 0.0) {
            return Err(MorError::ZeroSnapshotEnergy);
        }
        let svd = s.try_svd(true, false, f64::EPSILON, 0).ok_or(MorError::Svd)?;
        let u = svd.u.ok_or(MorError::Svd)?;
        let sigma = svd.singular_values;
        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
        let mut u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
        fix_column_signs(&mut u);
        let singular_values = DVector::from_fn(order.len(), |i, _| sigma[order[i]]);
        Ok(PodDecomposition { u, singular_values })
    }

    pub fn max_rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `sum_{i<=r} s_i^2 / sum s_i^2`.
    pub fn energy_ratio(&self, r: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let head: f64 = self.singular_values.iter().take(r).map(|s| s * s).sum();
        head / total
    }

    pub fn rank_for(&self, sel: RankSelection) -> Result<usize, MorError> {
        let max = self.max_rank();
        match sel {
            RankSelection::Fixed(0) => Err(MorError::ZeroRank),
            RankSelection::Fixed(r) if r > max => Err(MorError::RankTooLarge { r, max }),
            RankSelection::Fixed(r) => Ok(r),
            RankSelection::Energy(kappa) => {
                if !(kappa > 0.0 && kappa < 1.0) {
                    return Err(MorError::InvalidThreshold(kappa));
                }
                let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
                let mut acc = 0.0;
                for (i, s) in self.singular_values.iter().enumerate() {
                    acc += s * s;
                    if acc / total > kappa {
                        return Ok(i + 1);
                    }
                }
                Ok(max)
            }
        }
    }

    pub fn basis(&self, sel: RankSelection) -> Result<PodBasis, MorError> {
        let r = self.rank_for(sel)?;
        Ok(PodBasis { v: self.u.columns(0, r).into_owned(), singular_values: self.singular_values.clone(), r })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub v: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub r: usize,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }
}

pub fn pod_basis(snaps: &SnapshotMatrix, sel: RankSelection) -> Result<PodBasis, MorError> {
    PodDecomposition::compute(snaps)?.basis(sel)
}

/// `r (r + 1) / 2`.
pub fn pair_count(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Lifted position to `(i, j)`, lexicographic with `i <= j`.
pub fn pairing(r: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(r));
    for i in 0..r {
        for j in i..r {
            out.push((i, j));
        }
    }
    out
}

pub fn dedup_kron_vec(xr: &[f64]) -> DVector<f64> {
    let r = xr.len();
    let mut out = DVector::zeros(pair_count(r));
    let mut p = 0;
    for i in 0..r {
        for j in i..r {
            out[p] = xr[i] * xr[j];
            p += 1;
        }
    }
    out
}

pub fn dedup_kron_jacobian(xr: &[f64]) -> DMatrix<f64> {
    let r = xr.len();
    let mut out = DMatrix::zeros(pair_count(r), r);
    let mut p = 0;
    for i in 0..r {
        for j in i..r {
            out[(p, i)] += xr[j];
            out[(p, j)] += xr[i];
            p += 1;
        }
    }
    out
}

/// Column-wise lifting of a reduced-coordinate matrix.
pub fn lift_columns(xr: &DMatrix<f64>) -> DMatrix<f64> {
    let r = xr.nrows();
    let mut out = DMatrix::zeros(pair_count(r), xr.ncols());
    for (c, col) in xr.column_iter().enumerate() {
        let mut p = 0;
        for i in 0..r {
            for j in i..r {
                out[(p, c)] = col[i] * col[j];
                p += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadOperator {
    pub vbar: DMatrix<f64>,
    pub lambda: f64,
    pub r: usize,
    /// Fewer snapshots than lifted coordinates; the fit leans on `lambda`.
    pub underdetermined: bool,
}

impl QuadOperator {
    pub fn pairing(&self) -> Vec<(usize, usize)> {
        pairing(self.r)
    }
}

/// Ridge fit of `V̄` to the projection residual:
/// `V̄ = E P^T (P P^T + lambda I)^{-1}` with a Cholesky solve.
pub fn fit_quadratic_operator(snaps: &SnapshotMatrix, pod: &PodBasis, lambda: f64) -> Result<QuadOperator, MorError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(MorError::InvalidLambda(lambda));
    }
    if pod.dim() != snaps.dim() {
        return Err(MorError::DimensionMismatch { expected: snaps.dim(), found: pod.dim() });
    }
    let s = snaps.shifted();
    let v = &pod.v;
    let xr = v.transpose() * &s;
    let p = lift_columns(&xr);
    let resid = &s - v * &xr;
    let mut normal = &p * p.transpose();
    for i in 0..normal.nrows() {
        normal[(i, i)] += lambda;
    }
    let chol = normal.cholesky().ok_or(MorError::Factorization)?;
    // Solve (P P^T + lambda I) V̄^T = P E^T.
    let rhs = &p * resid.transpose();
    let vbar_t = chol.solve(&rhs);
    let mut vbar = vbar_t.transpose();
    // Remove the rounding-level component along V.
    let leak = v.transpose() * &vbar;
    vbar -= v * leak;
    let underdetermined = snaps.k() <= pair_count(pod.r);
    Ok(QuadOperator { vbar, lambda, r: pod.r, underdetermined })
}

/// The regularized objective `||E - V̄ P||_F^2 + lambda ||V̄||_F^2`.
pub fn quadratic_objective(snaps: &SnapshotMatrix, pod: &PodBasis, vbar: &DMatrix<f64>, lambda: f64) -> f64 {
    let s = snaps.shifted();
    let xr = pod.v.transpose() * &s;
    let p = lift_columns(&xr);
    let resid = &s - &pod.v * &xr - vbar * p;
    resid.norm_squared() + lambda * vbar.norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldBasis {
    pub pod: PodBasis,
    pub quad: Option<QuadOperator>,
    pub x_ref: DVector<f64>,
}

impl ManifoldBasis {
    pub fn r(&self) -> usize {
        self.pod.r
    }

    pub fn dim(&self) -> usize {
        self.pod.dim()
    }

    pub fn linear(pod: PodBasis, x_ref: DVector<f64>) -> Self {
        ManifoldBasis { pod, quad: None, x_ref }
    }

    /// POD basis plus the fitted quadratic operator.
    pub fn fit(snaps: &SnapshotMatrix, pod: PodBasis, lambda: f64) -> Result<Self, MorError> {
        let quad = fit_quadratic_operator(snaps, &pod, lambda)?;
        Ok(ManifoldBasis { pod, quad: Some(quad), x_ref: snaps.x_ref.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetainedEnergy {
    pub linear: f64,
    pub quadratic: f64,
}

pub fn retained_energy(snaps: &SnapshotMatrix, basis: &ManifoldBasis) -> Result<RetainedEnergy, MorError> {
    if basis.dim() != snaps.dim() {
        return Err(MorError::DimensionMismatch { expected: snaps.dim(), found: basis.dim() });
    }
    let s = snaps.shifted();
    let total = s.norm_squared();
    if total == 0.0 {
        return Err(MorError::ZeroSnapshotEnergy);
    }
    let v = &basis.pod.v;
    let xr = v.transpose() * &s;
    let lin = v * &xr;
    let linear = lin.norm_squared() / total;
    let quadratic = match &basis.quad {
        Some(q) => (lin + &q.vbar * lift_columns(&xr)).norm_squared() / total,
        None => linear,
    };
    Ok(RetainedEnergy { linear, quadratic })
}
