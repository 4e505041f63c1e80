//! Dense kernels that nalgebra does not provide directly.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Outcome of an in-place Schur complement.
#[derive(Debug, Clone)]
pub struct Schur {
    /// `Y_kk - Y_ke * Y_ee^{-1} * Y_ek`, ordered like `keep`.
    pub reduced: DMatrix<Complex64>,
    /// Smallest over largest pivot magnitude; a crude conditioning estimate.
    pub pivot_ratio: f64,
}

/// Eliminates `eliminate` from `y` by Gaussian elimination with threshold
/// partial pivoting restricted to the eliminated rows.
///
/// Admittance matrices are sparse, so zero multipliers and zero pivot-row
/// entries are skipped; the arithmetic is still that of a dense
/// factorization. Returns `None` when a pivot is exactly zero.
pub fn schur_complement(y: &DMatrix<Complex64>, eliminate: &[usize], keep: &[usize]) -> Option<Schur> {
    let ne = eliminate.len();
    let n = ne + keep.len();
    assert_eq!(y.nrows(), n);
    let order: Vec<usize> = eliminate.iter().chain(keep.iter()).copied().collect();
    let mut a = DMatrix::from_fn(n, n, |i, j| y[(order[i], order[j])]);
    if ne == 0 {
        return Some(Schur { reduced: a, pivot_ratio: 1.0 });
    }

    let data = a.as_mut_slice();
    let col = |j: usize| j * n;
    let mut pivot_min = f64::INFINITY;
    let mut pivot_max: f64 = 0.0;
    let mut rows: Vec<usize> = Vec::with_capacity(n);
    let mut mult: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];

    for p in 0..ne {
        // Threshold pivoting: keep the diagonal unless it is much smaller
        // than the best candidate in the eliminated rows.
        let cp = col(p);
        let mut best = p;
        let mut best_mag = 0.0;
        for i in p..ne {
            let m = data[cp + i].norm();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        if best_mag == 0.0 || !best_mag.is_finite() {
            return None;
        }
        if data[cp + p].norm() < 0.1 * best_mag {
            for j in 0..n {
                data.swap(col(j) + p, col(j) + best);
            }
        }
        let pivot = data[cp + p];
        pivot_min = pivot_min.min(pivot.norm());
        pivot_max = pivot_max.max(pivot.norm());

        rows.clear();
        let inv = Complex64::new(1.0, 0.0) / pivot;
        for i in (p + 1)..n {
            let v = data[cp + i];
            if v.re != 0.0 || v.im != 0.0 {
                mult[i] = v * inv;
                rows.push(i);
            }
        }
        if rows.is_empty() {
            continue;
        }
        for j in (p + 1)..n {
            let cj = col(j);
            let apj = data[cj + p];
            if apj.re == 0.0 && apj.im == 0.0 {
                continue;
            }
            for &i in &rows {
                data[cj + i] -= mult[i] * apj;
            }
        }
    }

    let nk = keep.len();
    let reduced = DMatrix::from_fn(nk, nk, |i, j| a[(ne + i, ne + j)]);
    if reduced.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    Some(Schur { reduced, pivot_ratio: pivot_min / pivot_max })
}

/// Flips columns so that each column's largest-magnitude entry is positive.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let mut best = 0.0;
        let mut sign = 1.0;
        for v in c.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            c.neg_mut();
        }
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Infinity norm of a vector slice.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}
