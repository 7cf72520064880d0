use crate::hamiltonian::HamiltonianSpec;
use crate::numerics::{DenseMatrix, Pauli};
use crate::{Error, Result, C64};

/// Rank-4 MPO site tensor `W[a, b]_{σ, σ'} = ⟨σ|W[a,b]|σ'⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpoTensor {
    left: usize,
    right: usize,
    data: Vec<C64>,
}

impl MpoTensor {
    fn zeros(left: usize, right: usize) -> Self {
        Self { left, right, data: vec![C64::new(0.0, 0.0); left * right * 4] }
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, s: usize, t: usize) -> C64 {
        self.data[((a * self.right + b) * 2 + s) * 2 + t]
    }

    fn set_block(&mut self, a: usize, b: usize, op: [C64; 4], scale: f64) {
        for (k, v) in op.iter().enumerate() {
            self.data[(a * self.right + b) * 4 + k] = v * scale;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mpo {
    tensors: Vec<MpoTensor>,
    norm_bound: f64,
}

const IDENTITY: [C64; 4] = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];

/// Bond dimension of the chain MPO.
const WIDTH: usize = 5;
/// Channel that has not placed any operator yet.
const START: usize = 4;
/// Channel that has completed its term.
const DONE: usize = 0;

/// Finite-state-machine MPO. Channels 1–3 carry a pending `X`, `Y`, `Z` of a
/// bond term; the left boundary selects [`START`], the right one [`DONE`].
pub fn build_mpo(spec: &HamiltonianSpec) -> Result<Mpo> {
    spec.validate()?;
    let n = spec.n_sites;
    let c = spec.coupling / 4.0;
    let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut tensors = Vec::with_capacity(n);
    for site in 0..n {
        let mut w = MpoTensor::zeros(WIDTH, WIDTH);
        w.set_block(DONE, DONE, IDENTITY, 1.0);
        w.set_block(START, START, IDENTITY, 1.0);
        w.set_block(START, DONE, Pauli::Z.matrix(), spec.field_coefficient(site));
        for (k, p) in paulis.iter().enumerate() {
            w.set_block(START, 1 + k, p.matrix(), c);
            w.set_block(1 + k, DONE, p.matrix(), 1.0);
        }
        let rows: Vec<usize> = if site == 0 { vec![START] } else { (0..WIDTH).collect() };
        let cols: Vec<usize> = if site == n - 1 { vec![DONE] } else { (0..WIDTH).collect() };
        let mut t = MpoTensor::zeros(rows.len(), cols.len());
        for (i, &a) in rows.iter().enumerate() {
            for (j, &b) in cols.iter().enumerate() {
                for k in 0..4 {
                    t.data[(i * t.right + j) * 4 + k] = w.data[(a * WIDTH + b) * 4 + k];
                }
            }
        }
        tensors.push(t);
    }
    let norm_bound = 3.0 * (n - 1) as f64 * c + n as f64 * spec.field / 2.0;
    Ok(Mpo { tensors, norm_bound: norm_bound.max(f64::MIN_POSITIVE) })
}

impl Mpo {
    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensors(&self) -> &[MpoTensor] {
        &self.tensors
    }

    pub fn tensor(&self, site: usize) -> &MpoTensor {
        &self.tensors[site]
    }

    /// Upper bound on the operator's spectral norm.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `W_0, …, W_N`.
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(self.tensors[0].left).chain(self.tensors.iter().map(|t| t.right)).collect()
    }

    /// Full matrix, for small oracles.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let n = self.n_sites();
        if n > 12 {
            return Err(Error::TooManySites { sites: n, limit: 12 });
        }
        // blocks[b] is the operator accumulated up to the current site on channel b
        let mut blocks = vec![DenseMatrix::from_element(1, 1, C64::new(1.0, 0.0))];
        for t in &self.tensors {
            let dim = blocks[0].nrows() * 2;
            let mut next = vec![DenseMatrix::zeros(dim, dim); t.right];
            for (a, blk) in blocks.iter().enumerate() {
                for (b, nb) in next.iter_mut().enumerate() {
                    let local = DenseMatrix::from_fn(2, 2, |s, u| t.get(a, b, s, u));
                    if local.iter().all(|x| x.norm() == 0.0) {
                        continue;
                    }
                    *nb += blk.kronecker(&local);
                }
            }
            blocks = next;
        }
        Ok(blocks.swap_remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_hamiltonian;

    fn frob(m: &DenseMatrix) -> f64 {
        m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn dense_reconstruction_matches_hamiltonian() {
        for n in 2..=6 {
            for hz in [0.0, 0.5] {
                let spec = HamiltonianSpec::heisenberg(n, hz).unwrap();
                let mpo = build_mpo(&spec).unwrap();
                let h = build_hamiltonian(&spec).unwrap().to_dense();
                assert!(frob(&(mpo.to_dense().unwrap() - h)) < 1e-12, "n={n} hz={hz}");
            }
        }
    }

    #[test]
    fn boundary_dims_are_one() {
        let mpo = build_mpo(&HamiltonianSpec::heisenberg(7, 0.3).unwrap()).unwrap();
        let d = mpo.bond_dims();
        assert_eq!(d.first(), Some(&1));
        assert_eq!(d.last(), Some(&1));
        assert!(d[1..7].iter().all(|&x| x == 5));
    }
}
