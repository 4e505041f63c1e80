//! Trajectory errors and retained-energy sweeps.

use alloc::vec::Vec;

use crate::error::{MetricError, MorError};
use crate::mor::{fit_quadratic_operator, ManifoldBasis, PodDecomposition, RankSelection, RetainedEnergy};
use crate::mor::retained_energy;
use crate::swing::{SnapshotMatrix, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Delta,
    Omega,
    /// Angle row of one machine.
    DeltaOf(usize),
    /// Frequency row of one machine.
    OmegaOf(usize),
}

fn rows(block: Block, n: usize) -> Result<(usize, usize), MetricError> {
    match block {
        Block::Delta => Ok((0, n)),
        Block::Omega => Ok((n, n)),
        Block::DeltaOf(i) | Block::OmegaOf(i) if i >= n => Err(MetricError::MachineOutOfRange { index: i, n }),
        Block::DeltaOf(i) => Ok((i, 1)),
        Block::OmegaOf(i) => Ok((n + i, 1)),
    }
}

/// `||B(truth) - B(approx)||_F / ||B(truth)||_F` over the time-stacked block.
pub fn relative_l2_error(truth: &Trajectory, approx: &Trajectory, block: Block) -> Result<f64, MetricError> {
    if truth.times != approx.times || truth.n() != approx.n() {
        return Err(MetricError::GridMismatch);
    }
    let (start, len) = rows(block, truth.n())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in truth.states.iter().zip(approx.states.iter()) {
        let a = a.rows(start, len);
        num += (a - b.rows(start, len)).norm_squared();
        den += a.norm_squared();
    }
    if den == 0.0 {
        return Err(MetricError::ZeroNormTruth);
    }
    Ok(num_traits::Float::sqrt(num / den))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub r: usize,
    pub linear: f64,
    pub quadratic: f64,
    pub underdetermined: bool,
}

/// Linear and quadratic retained energy for each requested dimension.
/// `r = 0` reports zero energy for both.
pub fn energy_table(snaps: &SnapshotMatrix, rs: &[usize], lambda: f64) -> Result<Vec<EnergyRow>, MorError> {
    let dec = PodDecomposition::compute(snaps)?;
    let mut out = Vec::with_capacity(rs.len());
    for &r in rs {
        if r == 0 {
            out.push(EnergyRow { r, linear: 0.0, quadratic: 0.0, underdetermined: false });
            continue;
        }
        let pod = dec.basis(RankSelection::Fixed(r))?;
        let quad = fit_quadratic_operator(snaps, &pod, lambda)?;
        let underdetermined = quad.underdetermined;
        let basis = ManifoldBasis { pod, quad: Some(quad), x_ref: snaps.x_ref.clone() };
        let RetainedEnergy { linear, quadratic } = retained_energy(snaps, &basis)?;
        out.push(EnergyRow { r, linear, quadratic, underdetermined });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(states: Vec<DVector<f64>>) -> Trajectory {
        Trajectory { times: (0..states.len()).map(|k| k as f64 * 0.1).collect(), states, wall_clock: 0.0 }
    }

    fn random_traj(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Trajectory {
        traj((0..k).map(|_| DVector::from_fn(2 * n, |_, _| rng.gen_range(-1.0..1.0))).collect())
    }

    #[test]
    fn identity_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_traj(&mut rng, 3, 5);
        assert_eq!(relative_l2_error(&t, &t, Block::Delta).unwrap(), 0.0);
        let twice = traj(t.states.iter().map(|x| x * 2.0).collect());
        assert_eq!(relative_l2_error(&t, &twice, Block::Omega).unwrap(), 1.0);
        assert_eq!(relative_l2_error(&t, &twice, Block::OmegaOf(2)).unwrap(), 1.0);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_traj(&mut rng, 4, 7);
        let b = random_traj(&mut rng, 4, 7);
        let (ma, mb) = (a.matrix(), b.matrix());
        for (block, r0, len) in [(Block::Delta, 0, 4), (Block::Omega, 4, 4), (Block::DeltaOf(1), 1, 1), (Block::OmegaOf(3), 7, 1)] {
            let mut num = 0.0;
            for i in r0..r0 + len {
                for j in 0..7 {
                    num += (ma[(i, j)] - mb[(i, j)]).powi(2);
                }
            }
            let mut den = 0.0;
            for i in r0..r0 + len {
                for j in 0..7 {
                    den += ma[(i, j)].powi(2);
                }
            }
            let want = (num / den).sqrt();
            let got = relative_l2_error(&a, &b, block).unwrap();
            assert!((got - want).abs() <= 1e-14 * want.max(1.0), "{block:?}");
        }
    }

    #[test]
    fn error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_traj(&mut rng, 2, 4);
        let b = random_traj(&mut rng, 2, 5);
        assert_eq!(relative_l2_error(&a, &b, Block::Delta), Err(MetricError::GridMismatch));
        let zero = traj(vec![DVector::zeros(4); 4]);
        assert_eq!(relative_l2_error(&zero, &a, Block::Delta), Err(MetricError::ZeroNormTruth));
        assert!(matches!(relative_l2_error(&a, &a, Block::OmegaOf(2)), Err(MetricError::MachineOutOfRange { .. })));
    }

    #[test]
    fn rank_one_energy_table() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let s = DVector::from_fn(12, |i, _| (i as f64 * 0.7).sin());
        let x = &v * s.transpose();
        let snaps = SnapshotMatrix::new(x, DVector::zeros(4)).unwrap();
        let rows = energy_table(&snaps, &[0, 1, 2, 3], 1e-3).unwrap();
        assert_eq!((rows[0].linear, rows[0].quadratic), (0.0, 0.0));
        for row in &rows[1..] {
            assert!((row.linear - 1.0).abs() < 1e-12);
        }
        assert!(energy_table(&snaps, &[5], 1e-3).is_err());
    }
}
