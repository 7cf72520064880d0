use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::vecops::{axpy, dot, norm, orthogonalize, scale};
use super::HermitianOperator;
use crate::{Error, Result, C64};

/// Settings for [`lanczos_extremal`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the operator's norm bound.
    pub tol: f64,
    /// Krylov basis size before an explicit restart.
    pub max_subspace: usize,
    pub max_restarts: usize,
    /// Seed for the random start vectors.
    pub seed: u64,
    /// Optional start vector for the lowest eigenpair.
    #[serde(skip)]
    pub start: Option<Vec<C64>>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_subspace: 120, max_restarts: 200, seed: 0x5eed, start: None }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<C64>,
    /// `‖A v − λ v‖` measured on the returned pair.
    pub residual: f64,
}

struct Ritz {
    value: f64,
    vector: Vec<C64>,
}

/// Lowest `k` eigenpairs of a Hermitian operator, in ascending order.
///
/// Pairs are found one at a time; each later search runs in the orthogonal
/// complement of the pairs already locked, so degenerate levels are returned
/// with their full multiplicity. Every Krylov vector is reorthogonalized
/// against the whole basis.
pub fn lanczos_extremal(op: &dyn HermitianOperator, k: usize, opts: &LanczosOptions) -> Result<Vec<Eigenpair>> {
    let dim = op.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("requested zero eigenpairs".into()));
    }
    if k > dim {
        return Err(Error::TooManyEigenpairs { requested: k, dim });
    }
    let scale_ref = op.norm_bound();
    let tol_abs = opts.tol * scale_ref;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<C64>> = Vec::with_capacity(k);
    let mut pairs = Vec::with_capacity(k);
    let mut w = vec![C64::new(0.0, 0.0); dim];

    for index in 0..k {
        let mut start = match (&opts.start, index) {
            (Some(s), 0) if s.len() == dim && norm(s) > 0.0 => s.clone(),
            _ => random_vector(dim, &mut rng),
        };
        let mut restarts = 0;
        loop {
            orthogonalize(&mut start, &[&locked]);
            if norm(&start) < 1e-12 {
                start = random_vector(dim, &mut rng);
                continue;
            }
            let ritz = lanczos_cycle(op, &locked, start, opts.max_subspace, tol_abs)?;
            op.apply(&ritz.vector, &mut w);
            axpy(&mut w, C64::new(-ritz.value, 0.0), &ritz.vector);
            let residual = norm(&w);
            if residual <= tol_abs {
                locked.push(ritz.vector.clone());
                pairs.push(Eigenpair { value: ritz.value, vector: ritz.vector, residual });
                break;
            }
            restarts += 1;
            if restarts > opts.max_restarts {
                return Err(Error::LanczosNoConvergence { index, residual, restarts });
            }
            start = ritz.vector;
        }
    }
    pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(pairs)
}

fn random_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..dim)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

/// Lowest eigenpair of the real symmetric tridiagonal matrix.
fn tridiag_lowest(alpha: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
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
    let (imin, vmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .ok_or(Error::EigNoConvergence(m))?;
    Ok((vmin, eig.eigenvectors.column(imin).iter().copied().collect()))
}

/// One Lanczos run from `start` (already orthogonal to `locked`) up to
/// `max_subspace` vectors; returns the lowest Ritz pair.
fn lanczos_cycle(
    op: &dyn HermitianOperator,
    locked: &[Vec<C64>],
    mut start: Vec<C64>,
    max_subspace: usize,
    tol_abs: f64,
) -> Result<Ritz> {
    let dim = op.dim();
    let cap = max_subspace.max(1).min(dim - locked.len());
    let breakdown = 1e-14 * op.norm_bound();
    let s = 1.0 / norm(&start);
    scale(&mut start, s);

    let mut basis: Vec<Vec<C64>> = vec![start];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let (value, y) = loop {
        let j = basis.len() - 1;
        op.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        axpy(&mut w, C64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            axpy(&mut w, C64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        orthogonalize(&mut w, &[&basis, locked]);
        alpha.push(a);
        let b = norm(&w);
        let m = alpha.len();
        let stop = m == cap || b <= breakdown;
        if stop || m % 4 == 0 {
            let (val, y) = tridiag_lowest(&alpha, &beta)?;
            let estimate = b * y[m - 1].abs();
            if stop || estimate <= 0.1 * tol_abs {
                break (val, y);
            }
        }
        beta.push(b);
        let mut next = w.clone();
        scale(&mut next, 1.0 / b);
        basis.push(next);
    };

    let mut vector = vec![C64::new(0.0, 0.0); dim];
    for (q, &c) in basis.iter().zip(&y) {
        axpy(&mut vector, C64::new(c, 0.0), q);
    }
    orthogonalize(&mut vector, &[locked]);
    let n = norm(&vector);
    scale(&mut vector, 1.0 / n);
    Ok(Ritz { value, vector })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dense_eig_hermitian, DenseMatrix, DenseOperator, Pauli, PauliString, PauliSum, PauliTerm};
    use proptest::prelude::*;
    use rand::Rng;

    fn heisenberg(n: usize) -> PauliSum {
        let mut terms = Vec::new();
        for i in 0..n - 1 {
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                terms.push(PauliTerm::new(PauliString::pair(i, p, i + 1, p), 0.25));
            }
        }
        PauliSum::new(n, terms)
    }

    fn diag(values: &[f64]) -> DenseOperator {
        let n = values.len();
        DenseOperator::new(DenseMatrix::from_fn(n, n, |r, c| {
            if r == c {
                C64::new(values[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    fn check_pairs(op: &dyn HermitianOperator, pairs: &[Eigenpair], tol: f64) {
        for (i, p) in pairs.iter().enumerate() {
            assert!((norm(&p.vector) - 1.0).abs() < 1e-10);
            assert!(p.residual <= tol * op.norm_bound());
            for q in &pairs[..i] {
                assert!(dot(&q.vector, &p.vector).norm() < 1e-8);
            }
        }
        assert!(pairs.windows(2).all(|w| w[0].value <= w[1].value));
    }

    #[test]
    fn diagonal_operator() {
        let op = diag(&[3.0, 1.0, 0.0, 2.0]);
        let pairs = lanczos_extremal(&op, 2, &LanczosOptions::default()).unwrap();
        assert!(pairs[0].value.abs() < 1e-10);
        assert!((pairs[1].value - 1.0).abs() < 1e-10);
        check_pairs(&op, &pairs, 1e-10);
    }

    #[test]
    fn two_site_singlet_triplet() {
        let h = heisenberg(2);
        let pairs = lanczos_extremal(&h, 2, &LanczosOptions::default()).unwrap();
        assert!((pairs[0].value + 0.75).abs() < 1e-10);
        assert!((pairs[1].value - 0.25).abs() < 1e-10);
    }

    #[test]
    fn four_site_matches_dense() {
        let h = heisenberg(4);
        let (vals, _) = dense_eig_hermitian(&h.to_dense()).unwrap();
        let pairs = lanczos_extremal(&h, 1, &LanczosOptions::default()).unwrap();
        assert!((pairs[0].value - vals[0]).abs() < 1e-10);
    }

    #[test]
    fn degenerate_levels_are_all_found() {
        let op = diag(&[1.0, 0.0, 0.0, 0.0, 2.0, 5.0]);
        let pairs = lanczos_extremal(&op, 4, &LanczosOptions::default()).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        for (v, e) in vals.iter().zip([0.0, 0.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-10, "{vals:?}");
        }
        check_pairs(&op, &pairs, 1e-10);
    }

    #[test]
    fn rejects_too_many() {
        let op = diag(&[0.0, 1.0]);
        assert!(matches!(
            lanczos_extremal(&op, 3, &LanczosOptions::default()),
            Err(Error::TooManyEigenpairs { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn agrees_with_dense(dim in 2usize..=256, k in 1usize..=3, seed in any::<u64>()) {
            let k = k.min(dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DenseMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let h = (&a + a.adjoint()).scale(0.5);
            let (vals, _) = dense_eig_hermitian(&h).unwrap();
            let op = DenseOperator::new(h);
            let pairs = lanczos_extremal(&op, k, &LanczosOptions::default()).unwrap();
            for (p, v) in pairs.iter().zip(&vals) {
                prop_assert!((p.value - v).abs() < 1e-10, "{} vs {}", p.value, v);
            }
            check_pairs(&op, &pairs, 1e-10);
        }
    }
}
