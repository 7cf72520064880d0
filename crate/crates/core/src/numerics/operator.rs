use std::fmt;

use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::state::site_bit;
use crate::{par, C64};

/// A Hermitian linear map given by its action on vectors.
pub trait HermitianOperator: Sync {
    fn dim(&self) -> usize;

    /// `y ← A x`. `y` is fully overwritten.
    fn apply(&self, x: &[C64], y: &mut [C64]);

    /// Any upper bound on the spectral norm; used to scale tolerances.
    fn norm_bound(&self) -> f64;
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> [C64; 4] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [l, o, o, -l],
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// Tensor product of single-site Paulis; sites not listed carry the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    ops: Vec<(usize, Pauli)>,
}

impl PauliString {
    pub fn new(mut ops: Vec<(usize, Pauli)>) -> Self {
        ops.sort_by_key(|&(s, _)| s);
        ops.dedup_by_key(|&mut (s, _)| s);
        Self { ops }
    }

    pub fn single(site: usize, p: Pauli) -> Self {
        Self { ops: vec![(site, p)] }
    }

    pub fn pair(a: usize, pa: Pauli, b: usize, pb: Pauli) -> Self {
        Self::new(vec![(a, pa), (b, pb)])
    }

    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    pub fn support(&self) -> Vec<usize> {
        self.ops.iter().map(|&(s, _)| s).collect()
    }

    pub fn overlaps(&self, other: &PauliString) -> bool {
        self.ops.iter().any(|(s, _)| other.ops.iter().any(|(t, _)| s == t))
    }

    /// Matrix of the string restricted to `sites` (which must contain its
    /// support); `sites[0]` is the most significant local bit.
    pub fn local_matrix(&self, sites: &[usize]) -> DenseMatrix {
        let mut m = DenseMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for &s in sites {
            let p = self.ops.iter().find(|(t, _)| *t == s).map(|&(_, p)| p.matrix());
            let f = match p {
                Some(a) => DenseMatrix::from_row_slice(2, 2, &a),
                None => DenseMatrix::identity(2, 2),
            };
            m = m.kronecker(&f);
        }
        m
    }

    /// `(flip mask, sign mask, number of Y factors)` for an `n`-site register.
    fn masks(&self, n: usize) -> (usize, usize, usize) {
        let mut flip = 0;
        let mut sign = 0;
        let mut ny = 0;
        for &(s, p) in &self.ops {
            let b = 1usize << site_bit(n, s);
            match p {
                Pauli::X => flip |= b,
                Pauli::Y => {
                    flip |= b;
                    sign |= b;
                    ny += 1;
                }
                Pauli::Z => sign |= b,
            }
        }
        (flip, sign, ny)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return write!(f, "I");
        }
        for (k, (s, p)) in self.ops.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{p}{s}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub string: PauliString,
    pub coeff: f64,
}

impl PauliTerm {
    pub fn new(string: PauliString, coeff: f64) -> Self {
        Self { string, coeff }
    }
}

/// Terms sharing one bit-flip pattern: `(sign mask, complex coefficient)`.
#[derive(Clone, Debug)]
struct FlipGroup {
    flip: usize,
    parts: Vec<(usize, C64)>,
}

/// Real linear combination of Pauli strings, applied matrix-free.
#[derive(Clone, Debug)]
pub struct PauliSum {
    n_sites: usize,
    terms: Vec<PauliTerm>,
    groups: Vec<FlipGroup>,
}

impl PauliSum {
    pub fn new(n_sites: usize, terms: Vec<PauliTerm>) -> Self {
        let mut groups: Vec<FlipGroup> = Vec::new();
        for t in &terms {
            let (flip, sign, ny) = t.string.masks(n_sites);
            let phase = C64::new(0.0, 1.0).powu(ny as u32) * t.coeff;
            match groups.iter_mut().find(|g| g.flip == flip) {
                Some(g) => g.parts.push((sign, phase)),
                None => groups.push(FlipGroup { flip, parts: vec![(sign, phase)] }),
            }
        }
        Self { n_sites, terms, groups }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    #[inline]
    fn row(&self, a: usize, x: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for g in &self.groups {
            let b = a ^ g.flip;
            let mut coef = C64::new(0.0, 0.0);
            for &(sign, phase) in &g.parts {
                if (b & sign).count_ones() & 1 == 1 {
                    coef -= phase;
                } else {
                    coef += phase;
                }
            }
            acc += coef * x[b];
        }
        acc
    }

    /// Sequential matvec, kept public for benchmarking against [`HermitianOperator::apply`].
    pub fn apply_seq(&self, x: &[C64], y: &mut [C64]) {
        par::fill_indexed_seq(y, |a| self.row(a, x));
    }

    /// Full `2^N × 2^N` matrix. Intended for small oracles.
    pub fn to_dense(&self) -> DenseMatrix {
        let d = self.dim();
        let mut m = DenseMatrix::zeros(d, d);
        for a in 0..d {
            for g in &self.groups {
                let b = a ^ g.flip;
                for &(sign, phase) in &g.parts {
                    let s = if (b & sign).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
                    m[(a, b)] += phase * s;
                }
            }
        }
        m
    }
}

impl HermitianOperator for PauliSum {
    fn dim(&self) -> usize {
        1 << self.n_sites
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        par::fill_indexed(y, |a| self.row(a, x));
    }

    fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum::<f64>().max(f64::MIN_POSITIVE)
    }
}

/// Dense Hermitian matrix as an operator; used by tests and small solvers.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    matrix: DenseMatrix,
    norm: f64,
}

impl DenseOperator {
    pub fn new(matrix: DenseMatrix) -> Self {
        let norm = matrix.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        Self { matrix, norm }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl HermitianOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim();
        for (r, yr) in y.iter_mut().enumerate().take(n) {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..n {
                acc += self.matrix[(r, c)] * x[c];
            }
            *yr = acc;
        }
    }

    fn norm_bound(&self) -> f64 {
        self.norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_sum_matches_kron_construction() {
        // 0.3 X0 Y2 - 0.7 Z1 + 0.2 Y0 Y1 Z2
        let terms = vec![
            PauliTerm::new(PauliString::pair(0, Pauli::X, 2, Pauli::Y), 0.3),
            PauliTerm::new(PauliString::single(1, Pauli::Z), -0.7),
            PauliTerm::new(PauliString::new(vec![(0, Pauli::Y), (1, Pauli::Y), (2, Pauli::Z)]), 0.2),
        ];
        let sum = PauliSum::new(3, terms.clone());
        let mut expected = DenseMatrix::zeros(8, 8);
        for t in &terms {
            expected += t.string.local_matrix(&[0, 1, 2]).scale(t.coeff);
        }
        let got = sum.to_dense();
        assert!((got - &expected).iter().all(|x| x.norm() < 1e-15));

        let x: Vec<C64> = (0..8).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let mut y = vec![C64::new(0.0, 0.0); 8];
        sum.apply(&x, &mut y);
        let xv = nalgebra::DVector::from_vec(x);
        let yv = &expected * xv;
        for i in 0..8 {
            assert!((y[i] - yv[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn display_strings() {
        let p = PauliString::pair(3, Pauli::Z, 1, Pauli::X);
        assert_eq!(p.to_string(), "X1 Z3");
        assert_eq!(p.support(), vec![1, 3]);
    }
}
