//! Open-boundary matrix product states, an MPO for the chain Hamiltonian and a
//! two-site DMRG solver.
//!
//! Site tensors have shape `(left bond, 2, right bond)` and are stored
//! row-major, so the same buffer reads as a `left × (2·right)` matrix or a
//! `(left·2) × right` matrix.
//!
//! # Canonical form
//!
//! [`CanonicalForm::Left`] means every site tensor satisfies
//! `Σ_{σ,b} A[a,σ,b]·conj(A[a',σ,b]) = δ_{aa'}`: each tensor is an isometry
//! from its left bond into (physical, right bond). The first site has a left
//! bond of dimension one, so the condition also fixes the norm. It is produced
//! by a right-to-left sweep and is what the sequential encoder consumes.

mod dmrg;
mod mpo;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{qr_positive, svd, DenseMatrix};
use crate::{Error, Result, StateVector, C64, MAX_STATEVECTOR_SITES};

pub use dmrg::{dmrg_ground, DmrgOptions, DmrgResult};
pub use mpo::{build_mpo, Mpo, MpoTensor};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Rank-3 site tensor with a physical dimension of 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    left: usize,
    right: usize,
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn new(left: usize, right: usize, data: Vec<C64>) -> Result<Self> {
        if left == 0 || right == 0 || data.len() != left * 2 * right {
            return Err(Error::Dimension(format!(
                "tensor ({left}, 2, {right}) with {} entries",
                data.len()
            )));
        }
        Ok(Self { left, right, data })
    }

    pub fn zeros(left: usize, right: usize) -> Self {
        Self { left, right, data: vec![ZERO; left * 2 * right] }
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> C64 {
        self.data[(a * 2 + s) * self.right + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, b: usize, v: C64) {
        self.data[(a * 2 + s) * self.right + b] = v;
    }

    /// `left × (2·right)` view.
    pub fn row_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_row_slice(self.left, 2 * self.right, &self.data)
    }

    /// `(left·2) × right` view.
    pub fn column_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_row_slice(2 * self.left, self.right, &self.data)
    }

    fn from_row_matrix(m: &DenseMatrix) -> Self {
        let (left, cols) = m.shape();
        let data = (0..left).flat_map(|r| (0..cols).map(move |c| m[(r, c)])).collect();
        Self { left, right: cols / 2, data }
    }

    fn from_column_matrix(m: &DenseMatrix) -> Self {
        let (rows, right) = m.shape();
        let data = (0..rows).flat_map(|r| (0..right).map(move |c| m[(r, c)])).collect();
        Self { left: rows / 2, right, data }
    }

    /// `‖Σ_{σ,b} A A† − I‖_max` on the left bond.
    pub fn isometry_residual(&self) -> f64 {
        let m = self.row_matrix();
        let g = &m * m.adjoint() - DenseMatrix::identity(self.left, self.left);
        g.iter().fold(0.0, |acc, x| acc.max(x.norm()))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalForm {
    None,
    Left,
    /// Orthogonality center at the given site.
    Mixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    tensors: Vec<Tensor3>,
    form: CanonicalForm,
}

/// Result of a truncating conversion.
#[derive(Clone, Debug)]
pub struct Compressed {
    pub mps: Mps,
    /// Squared discarded singular values per cut; entry `j` is the cut between
    /// sites `j` and `j+1`.
    pub discarded: Vec<f64>,
}

impl Compressed {
    pub fn total_discarded(&self) -> f64 {
        self.discarded.iter().sum()
    }
}

impl Mps {
    pub fn from_tensors(tensors: Vec<Tensor3>, form: CanonicalForm) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Dimension("MPS without sites".into()));
        }
        if tensors[0].left != 1 || tensors[tensors.len() - 1].right != 1 {
            return Err(Error::Dimension("boundary bonds must have dimension 1".into()));
        }
        for (j, w) in tensors.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::Dimension(format!(
                    "bond {j}: right dim {} does not match left dim {}",
                    w[0].right, w[1].left
                )));
            }
        }
        Ok(Self { tensors, form })
    }

    /// Computational-basis product state; `bits[i]` is the value on site `i`.
    pub fn product(bits: &[u8]) -> Result<Self> {
        let tensors = bits
            .iter()
            .map(|&b| {
                let mut t = Tensor3::zeros(1, 1);
                t.set(0, (b & 1) as usize, 0, C64::new(1.0, 0.0));
                t
            })
            .collect();
        Self::from_tensors(tensors, CanonicalForm::Left)
    }

    /// Random normalized MPS with bond dimensions `min(χ, 2^j, 2^{N−j})`, in
    /// canonical form.
    pub fn random<R: Rng + ?Sized>(n_sites: usize, chi: usize, rng: &mut R) -> Result<Self> {
        if n_sites == 0 || chi == 0 {
            return Err(Error::InvalidArgument("random MPS needs sites and χ ≥ 1".into()));
        }
        let dims = capped_dims(n_sites, chi);
        let tensors = (0..n_sites)
            .map(|j| {
                let (l, r) = (dims[j], dims[j + 1]);
                let data = (0..l * 2 * r)
                    .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect();
                Tensor3 { left: l, right: r, data }
            })
            .collect();
        Self::from_tensors(tensors, CanonicalForm::None)?.left_canonicalize()
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensors(&self) -> &[Tensor3] {
        &self.tensors
    }

    pub fn tensor(&self, site: usize) -> &Tensor3 {
        &self.tensors[site]
    }

    pub fn form(&self) -> CanonicalForm {
        self.form
    }

    /// `D_0, …, D_N` with `D_0 = D_N = 1`.
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(1).chain(self.tensors.iter().map(|t| t.right)).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Largest per-site deviation from the canonical isometry condition.
    pub fn isometry_residual(&self) -> f64 {
        self.tensors.iter().map(Tensor3::isometry_residual).fold(0.0, f64::max)
    }

    /// Exact sequential-SVD decomposition, sweeping right to left.
    pub fn from_statevector(state: &StateVector) -> Result<Self> {
        Ok(Self::from_statevector_truncated(state, usize::MAX)?.mps)
    }

    /// Sequential-SVD decomposition keeping at most `chi` singular values per
    /// cut; the result is renormalized.
    pub fn from_statevector_truncated(state: &StateVector, chi: usize) -> Result<Compressed> {
        if chi == 0 {
            return Err(Error::InvalidArgument("χ must be at least 1".into()));
        }
        let n = state.n_sites();
        let norm = state.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut rest: Vec<C64> = state.amplitudes().iter().map(|a| a / norm).collect();
        let mut right = 1;
        let mut tensors = vec![Tensor3::zeros(1, 1); n];
        let mut discarded = vec![0.0; n.saturating_sub(1)];
        for j in (1..n).rev() {
            let rows = 1usize << j;
            let m = DenseMatrix::from_row_slice(rows, 2 * right, &rest);
            let (kept, vh, us, dropped) = truncated_split(&m, chi)?;
            discarded[j - 1] = dropped;
            tensors[j] = Tensor3::from_row_matrix(&vh);
            rest = (0..rows).flat_map(|r| (0..kept).map(move |c| (r, c))).map(|(r, c)| us[(r, c)]).collect();
            right = kept;
        }
        tensors[0] = Tensor3 { left: 1, right, data: rest };
        let mut mps = Self::from_tensors(tensors, CanonicalForm::Left)?;
        mps.normalize_first()?;
        Ok(Compressed { mps, discarded })
    }

    fn normalize_first(&mut self) -> Result<f64> {
        let t = &mut self.tensors[0];
        let n = t.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        t.data.iter_mut().for_each(|x| *x /= n);
        Ok(n)
    }

    /// Bring every site into the canonical isometric form (see the module
    /// docs) and normalize. Uses phase-fixed LQ steps, so applying it to an
    /// already canonical MPS leaves the tensors unchanged up to roundoff.
    pub fn left_canonicalize(&self) -> Result<Self> {
        let mut tensors = self.tensors.clone();
        for j in (1..tensors.len()).rev() {
            // M = L·Q with Q having orthonormal rows
            let m = tensors[j].row_matrix();
            let (q, r) = qr_positive(&m.adjoint());
            let l = r.adjoint();
            tensors[j] = Tensor3::from_row_matrix(&q.adjoint());
            let prev = tensors[j - 1].column_matrix() * l;
            tensors[j - 1] = Tensor3::from_column_matrix(&prev);
        }
        let mut out = Self { tensors, form: CanonicalForm::Left };
        out.normalize_first()?;
        Ok(out)
    }

    /// Standard left-orthonormal sweep (each site an isometry from
    /// (left bond, physical) into the right bond); the norm ends on the last
    /// site. Used internally before truncation.
    fn right_gauge(&self) -> Self {
        let mut tensors = self.tensors.clone();
        let n = tensors.len();
        for j in 0..n - 1 {
            let (q, r) = qr_positive(&tensors[j].column_matrix());
            tensors[j] = Tensor3::from_column_matrix(&q);
            let next = r * tensors[j + 1].row_matrix();
            tensors[j + 1] = Tensor3::from_row_matrix(&next);
        }
        Self { tensors, form: CanonicalForm::Mixed(n - 1) }
    }

    /// Sequential SVD truncation to bond dimension `chi`, optimal cut by cut.
    /// The result is normalized and canonical.
    pub fn compress(&self, chi: usize) -> Result<Compressed> {
        if chi == 0 {
            return Err(Error::InvalidArgument("χ must be at least 1".into()));
        }
        let mut g = self.right_gauge();
        let n = g.n_sites();
        let last = &g.tensors[n - 1];
        let norm = last.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        g.tensors[n - 1].data.iter_mut().for_each(|x| *x /= norm);
        let mut discarded = vec![0.0; n - 1];
        for j in (1..n).rev() {
            let m = g.tensors[j].row_matrix();
            let (_, vh, us, dropped) = truncated_split(&m, chi)?;
            discarded[j - 1] = dropped;
            g.tensors[j] = Tensor3::from_row_matrix(&vh);
            let prev = g.tensors[j - 1].column_matrix() * us;
            g.tensors[j - 1] = Tensor3::from_column_matrix(&prev);
        }
        g.form = CanonicalForm::Left;
        g.normalize_first()?;
        Ok(Compressed { mps: g, discarded })
    }

    /// Contract to a dense state vector.
    pub fn to_statevector(&self) -> Result<StateVector> {
        let n = self.n_sites();
        if n > MAX_STATEVECTOR_SITES {
            return Err(Error::TooManySites { sites: n, limit: MAX_STATEVECTOR_SITES });
        }
        // acc[(prefix, bond)]
        let mut acc = vec![C64::new(1.0, 0.0)];
        let mut bond = 1;
        for t in &self.tensors {
            let prefixes = acc.len() / bond;
            let mut next = vec![ZERO; prefixes * 2 * t.right];
            for p in 0..prefixes {
                for a in 0..bond {
                    let c = acc[p * bond + a];
                    if c == ZERO {
                        continue;
                    }
                    for s in 0..2 {
                        let dst = (p * 2 + s) * t.right;
                        let src = (a * 2 + s) * t.right;
                        for b in 0..t.right {
                            next[dst + b] += c * t.data[src + b];
                        }
                    }
                }
            }
            acc = next;
            bond = t.right;
        }
        StateVector::from_amplitudes(n, acc)
    }

    /// `⟨self|other⟩` by transfer-matrix contraction.
    pub fn overlap(&self, other: &Mps) -> Result<C64> {
        if self.n_sites() != other.n_sites() {
            return Err(Error::Dimension("overlap of MPS with different lengths".into()));
        }
        let mut env = DenseMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            let mut next = DenseMatrix::zeros(a.right, b.right);
            for s in 0..2 {
                let am = DenseMatrix::from_fn(a.left, a.right, |l, r| a.get(l, s, r));
                let bm = DenseMatrix::from_fn(b.left, b.right, |l, r| b.get(l, s, r));
                next += am.adjoint() * &env * bm;
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }
}

/// Singular values at or below this fraction of the largest are treated as zero.
const RANK_FLOOR: f64 = 1e-14;

/// SVD `M = U·S·Vh` truncated to `chi` values, dropping numerical zeros.
/// Returns `(kept, Vh_kept, U_kept·S_kept, Σ dropped σ²)`.
fn truncated_split(m: &DenseMatrix, chi: usize) -> Result<(usize, DenseMatrix, DenseMatrix, f64)> {
    let d = svd(m)?;
    let floor = RANK_FLOOR * d.s[0];
    let nonzero = d.s.iter().take_while(|&&x| x > floor).count().max(1);
    let kept = nonzero.min(chi);
    let dropped = d.s[kept..].iter().map(|x| x * x).sum();
    let vh = d.vh.rows(0, kept).into_owned();
    let mut us = d.u.columns(0, kept).into_owned();
    for (c, &s) in d.s.iter().take(kept).enumerate() {
        us.column_mut(c).iter_mut().for_each(|x| *x *= s);
    }
    Ok((kept, vh, us, dropped))
}

fn capped_dims(n: usize, chi: usize) -> Vec<usize> {
    (0..=n)
        .map(|j| {
            let e = j.min(n - j).min(63) as u32;
            chi.min(1usize.checked_shl(e).unwrap_or(usize::MAX))
        })
        .collect()
}

/// Singular values across one bipartition of a state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    /// Number of sites on the left of the cut.
    pub cut: usize,
    /// Descending.
    pub values: Vec<f64>,
    pub threshold: f64,
    pub rank: usize,
}

impl SchmidtSpectrum {
    /// Rank under a different relative threshold.
    pub fn rank_at(&self, threshold: f64) -> usize {
        rank_above(&self.values, threshold)
    }
}

/// `#{σ_i > threshold·σ_1}`.
pub fn rank_above(values: &[f64], threshold: f64) -> usize {
    match values.first() {
        Some(&s1) if s1 > 0.0 => values.iter().filter(|&&s| s > threshold * s1).count(),
        _ => 0,
    }
}

/// Schmidt decomposition with the first `cut` sites on the left.
pub fn schmidt_spectrum(state: &StateVector, cut: usize, threshold: f64) -> Result<SchmidtSpectrum> {
    let n = state.n_sites();
    if cut == 0 || cut >= n {
        return Err(Error::OutOfRange(format!("cut {cut} outside 1..{n}")));
    }
    let rows = 1usize << cut;
    let cols = 1usize << (n - cut);
    let m = DenseMatrix::from_row_slice(rows, cols, state.amplitudes());
    // the Gram matrix on the smaller side is cheaper than a full SVD
    let values = if rows.min(cols) <= 64 || rows.max(cols) <= 1024 {
        svd(&m)?.s
    } else {
        let g = if rows <= cols { &m * m.adjoint() } else { m.adjoint() * &m };
        let (ev, _) = crate::numerics::dense_eig_hermitian(&g)?;
        ev.into_iter().rev().map(|x| x.max(0.0).sqrt()).collect()
    };
    let rank = rank_above(&values, threshold);
    Ok(SchmidtSpectrum { cut, values, threshold, rank })
}
