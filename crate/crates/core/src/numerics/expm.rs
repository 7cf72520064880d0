use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::vecops::{axpy, dot, norm, orthogonalize, scale};
use super::HermitianOperator;
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    /// Target error of the whole propagation relative to `‖v‖`.
    pub tol: f64,
    pub max_dim: usize,
    /// Cap on the number of time substeps after adaptive halving.
    pub max_substeps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_dim: 64, max_substeps: 100_000 }
    }
}

/// `exp(−i t A)·v` by Lanczos projection with adaptive time substepping.
///
/// The error budget is shared across substeps in proportion to their length;
/// a substep whose a-posteriori estimate misses its share at the full
/// subspace size is halved.
pub fn krylov_expmv(op: &dyn HermitianOperator, t: f64, v: &[C64], opts: &KrylovOptions) -> Result<Vec<C64>> {
    if v.len() != op.dim() {
        return Err(Error::Dimension(format!("vector of length {} for operator of dim {}", v.len(), op.dim())));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite time {t}")));
    }
    let mut out = v.to_vec();
    if t == 0.0 || norm(v) == 0.0 {
        return Ok(out);
    }
    let total = t.abs();
    let sign = t.signum();
    // a subspace of size m resolves roughly ‖A‖·dt ≲ m/2 in one go
    let mut dt = total.min(0.4 * opts.max_dim as f64 / op.norm_bound());
    let mut done = 0.0;
    let mut substeps = 0;
    while done < total {
        let step = dt.min(total - done);
        let budget = opts.tol * step / total;
        match krylov_step(op, sign * step, &out, opts.max_dim, budget)? {
            Some(next) => {
                out = next;
                done += step;
                substeps += 1;
            }
            None => {
                dt = step / 2.0;
                substeps += 1;
            }
        }
        if substeps > opts.max_substeps {
            return Err(Error::KrylovTolerance { tol: opts.tol, substeps });
        }
    }
    Ok(out)
}

/// Small dense propagation `exp(−i dt T)·e₁` for symmetric tridiagonal `T`.
fn tridiag_exp_e1(alpha: &[f64], beta: &[f64], dt: f64) -> Result<Vec<C64>> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(t, 1e-15, 10_000).ok_or(Error::EigNoConvergence(m))?;
    let mut y = vec![C64::new(0.0, 0.0); m];
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = C64::new(0.0, -dt * lam).exp() * eig.eigenvectors[(0, j)];
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += w * eig.eigenvectors[(r, j)];
        }
    }
    Ok(y)
}

/// One Krylov propagation over `dt`; `None` when the estimate misses `budget`.
fn krylov_step(op: &dyn HermitianOperator, dt: f64, v: &[C64], max_dim: usize, budget: f64) -> Result<Option<Vec<C64>>> {
    let dim = v.len();
    let beta0 = norm(v);
    let cap = max_dim.max(1).min(dim);
    let breakdown = 1e-14 * op.norm_bound();
    let mut q0 = v.to_vec();
    scale(&mut q0, 1.0 / beta0);
    let mut basis = vec![q0];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let y = loop {
        let j = basis.len() - 1;
        op.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        axpy(&mut w, C64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            axpy(&mut w, C64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        orthogonalize(&mut w, &[&basis]);
        alpha.push(a);
        let b = norm(&w);
        let m = alpha.len();
        if b <= breakdown {
            break tridiag_exp_e1(&alpha, &beta, dt)?;
        }
        let y = tridiag_exp_e1(&alpha, &beta, dt)?;
        let estimate = beta0 * b * y[m - 1].norm();
        if estimate <= budget {
            break y;
        }
        if m == cap {
            if cap == dim {
                // the basis spans the whole space; only roundoff remains
                break y;
            }
            return Ok(None);
        }
        beta.push(b);
        let mut next = w.clone();
        scale(&mut next, 1.0 / b);
        basis.push(next);
    };
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for (q, c) in basis.iter().zip(&y) {
        axpy(&mut out, c * beta0, q);
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{expm_hermitian, DenseMatrix, DenseOperator, Pauli, PauliString, PauliSum, PauliTerm};
    use crate::StateVector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heisenberg(n: usize) -> PauliSum {
        let mut terms = Vec::new();
        for i in 0..n - 1 {
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                terms.push(PauliTerm::new(PauliString::pair(i, p, i + 1, p), 0.25));
            }
        }
        PauliSum::new(n, terms)
    }

    fn dist(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn zero_time_is_identity() {
        let h = heisenberg(3);
        let v = StateVector::random(3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let out = krylov_expmv(&h, 0.0, v.amplitudes(), &KrylovOptions::default()).unwrap();
        assert_eq!(out, v.amplitudes());
    }

    #[test]
    fn phase_rotation() {
        let mut m = DenseMatrix::zeros(2, 2);
        m[(1, 1)] = C64::new(std::f64::consts::PI, 0.0);
        let op = DenseOperator::new(m);
        let v = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let out = krylov_expmv(&op, 1.0, &v, &KrylovOptions::default()).unwrap();
        assert!(out[0].norm() < 1e-14);
        assert!((out[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn four_sites_match_dense_expm() {
        let h = heisenberg(4);
        let v = StateVector::random(4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let out = krylov_expmv(&h, 0.3, v.amplitudes(), &KrylovOptions::default()).unwrap();
        let u = expm_hermitian(&h.to_dense(), 0.3).unwrap();
        let exact = u * nalgebra::DVector::from_column_slice(v.amplitudes());
        assert!(dist(&out, exact.as_slice()) < 1e-10);
    }

    #[test]
    fn long_times_are_substepped() {
        let h = heisenberg(8);
        let v = StateVector::random(8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let out = krylov_expmv(&h, 60.0, v.amplitudes(), &KrylovOptions::default()).unwrap();
        let u = expm_hermitian(&h.to_dense(), 60.0).unwrap();
        let exact = u * nalgebra::DVector::from_column_slice(v.amplitudes());
        assert!(dist(&out, exact.as_slice()) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn unitary_and_invertible(n in 2usize..=7, t in -3.0f64..3.0, seed in any::<u64>()) {
            let h = heisenberg(n);
            let opts = KrylovOptions { tol: 1e-10, ..Default::default() };
            let v = StateVector::random(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let fwd = krylov_expmv(&h, t, v.amplitudes(), &opts).unwrap();
            prop_assert!((norm(&fwd) - 1.0).abs() <= opts.tol);
            let back = krylov_expmv(&h, -t, &fwd, &opts).unwrap();
            prop_assert!(dist(&back, v.amplitudes()) <= 2.0 * opts.tol);
        }
    }
}
