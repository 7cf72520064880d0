//! Dense state vectors over spin-1/2 chains.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::HermitianOperator;
use crate::{par, Error, Result, C64, MAX_STATEVECTOR_SITES};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Amplitudes of an `n_sites`-qubit state. Site 0 is the most significant bit
/// of the basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amps: Vec<C64>,
}

/// Bit position of `site` inside a basis index for an `n`-site register.
#[inline]
pub fn site_bit(n: usize, site: usize) -> usize {
    n - 1 - site
}

impl StateVector {
    fn check_sites(n_sites: usize) -> Result<()> {
        // one extra qubit is allowed for the PITE ancilla
        if n_sites == 0 || n_sites > MAX_STATEVECTOR_SITES + 1 {
            return Err(Error::TooManySites { sites: n_sites, limit: MAX_STATEVECTOR_SITES + 1 });
        }
        Ok(())
    }

    /// `|0…0⟩`.
    pub fn zero_state(n_sites: usize) -> Result<Self> {
        Self::basis(n_sites, 0)
    }

    pub fn basis(n_sites: usize, index: usize) -> Result<Self> {
        Self::check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if index >= dim {
            return Err(Error::OutOfRange(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { n_sites, amps })
    }

    pub fn from_amplitudes(n_sites: usize, amps: Vec<C64>) -> Result<Self> {
        Self::check_sites(n_sites)?;
        if amps.len() != 1usize << n_sites {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {} sites",
                amps.len(),
                n_sites
            )));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        Ok(Self { n_sites, amps })
    }

    /// Haar-random normalized state.
    pub fn random<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<Self> {
        Self::check_sites(n_sites)?;
        let amps = (0..1usize << n_sites)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let mut s = Self { n_sites, amps };
        s.normalize()?;
        Ok(s)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        let a = &self.amps;
        par::sum_indexed(a.len(), |i| C64::new(a[i].norm_sqr(), 0.0)).re
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescale to unit norm and return the previous norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / n;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(n)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        inner(&self.amps, &other.amps)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        let (a, b) = (&self.amps, &other.amps);
        par::sum_indexed(a.len(), |i| C64::new((a[i] - b[i]).norm_sqr(), 0.0)).re.sqrt()
    }

    /// Apply a `2^k × 2^k` row-major matrix to `wires`; `wires[0]` is the most
    /// significant bit of the local index.
    pub fn apply_gate(&mut self, wires: &[usize], matrix: &[C64]) {
        let src = std::mem::take(&mut self.amps);
        let mut out = vec![ZERO; src.len()];
        apply_gate_into(self.n_sites, wires, matrix, &src, &mut out);
        self.amps = out;
    }

    /// Sequential variant of [`Self::apply_gate`].
    pub fn apply_gate_seq(&mut self, wires: &[usize], matrix: &[C64]) {
        let src = std::mem::take(&mut self.amps);
        let mut out = vec![ZERO; src.len()];
        let layout = GateLayout::new(self.n_sites, wires);
        par::fill_indexed_seq(&mut out, |a| layout.row(a, matrix, &src));
        self.amps = out;
    }

    /// Multiply amplitude `i` by `phase(i)`.
    pub fn apply_diagonal<F>(&mut self, phase: F)
    where
        F: Fn(usize) -> C64 + Sync + Send,
    {
        let src = std::mem::take(&mut self.amps);
        let mut out = vec![ZERO; src.len()];
        par::fill_indexed(&mut out, |i| src[i] * phase(i));
        self.amps = out;
    }

    pub fn scale(&mut self, factor: C64) {
        self.amps.iter_mut().for_each(|a| *a *= factor);
    }

    /// `self ← self + factor·other`.
    pub fn add_scaled(&mut self, factor: C64, other: &StateVector) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += factor * b;
        }
    }

    /// `⟨self|A|self⟩` for a Hermitian operator.
    pub fn expectation(&self, op: &dyn HermitianOperator) -> f64 {
        let mut y = vec![ZERO; self.amps.len()];
        op.apply(&self.amps, &mut y);
        inner(&self.amps, &y).re
    }

    /// Tensor `self ⊗ other` with `self` on the leading (more significant) sites.
    pub fn kron(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.n_sites + other.n_sites;
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        StateVector::from_amplitudes(n, amps)
    }
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    par::sum_indexed(a.len(), |i| a[i].conj() * b[i])
}

/// Index bookkeeping for applying a small gate to a full register.
pub(crate) struct GateLayout {
    k: usize,
    mask: usize,
    bits: Vec<usize>,
    offsets: Vec<usize>,
}

impl GateLayout {
    pub(crate) fn new(n_sites: usize, wires: &[usize]) -> Self {
        let k = wires.len();
        let bits: Vec<usize> = wires.iter().map(|&w| site_bit(n_sites, w)).collect();
        let mask = bits.iter().fold(0usize, |m, b| m | (1 << b));
        let offsets = (0..1usize << k)
            .map(|j| {
                bits.iter()
                    .enumerate()
                    .filter(|(q, _)| (j >> (k - 1 - q)) & 1 == 1)
                    .fold(0usize, |o, (_, b)| o | (1 << b))
            })
            .collect();
        Self { k, mask, bits, offsets }
    }

    #[inline]
    fn local(&self, a: usize) -> usize {
        let mut row = 0;
        for (q, b) in self.bits.iter().enumerate() {
            row |= ((a >> b) & 1) << (self.k - 1 - q);
        }
        row
    }

    #[inline]
    pub(crate) fn row(&self, a: usize, matrix: &[C64], src: &[C64]) -> C64 {
        let dim = self.offsets.len();
        let base = a & !self.mask;
        let row = self.local(a);
        let m = &matrix[row * dim..(row + 1) * dim];
        let mut acc = ZERO;
        for (mj, off) in m.iter().zip(&self.offsets) {
            acc += mj * src[base | off];
        }
        acc
    }
}

pub(crate) fn apply_gate_into(
    n_sites: usize,
    wires: &[usize],
    matrix: &[C64],
    src: &[C64],
    out: &mut [C64],
) {
    debug_assert_eq!(matrix.len(), 1 << (2 * wires.len()));
    let layout = GateLayout::new(n_sites, wires);
    par::fill_indexed(out, |a| layout.row(a, matrix, src));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn x_on_site0_flips_msb() {
        let mut s = StateVector::zero_state(3).unwrap();
        let x = [c(0.0), c(1.0), c(1.0), c(0.0)];
        s.apply_gate(&[0], &x);
        assert_eq!(s.amplitudes()[0b100], c(1.0));
    }

    #[test]
    fn cnot_wire_order() {
        // control on wire 2, target wire 0
        let cnot = [
            c(1.),
            c(0.),
            c(0.),
            c(0.),
            c(0.),
            c(1.),
            c(0.),
            c(0.),
            c(0.),
            c(0.),
            c(0.),
            c(1.),
            c(0.),
            c(0.),
            c(1.),
            c(0.),
        ];
        let mut s = StateVector::basis(3, 0b001).unwrap();
        s.apply_gate(&[2, 0], &cnot);
        assert_eq!(s.amplitudes()[0b101], c(1.0));
    }

    #[test]
    fn random_state_is_normalized_and_seeded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = StateVector::random(5, &mut r1).unwrap();
        let b = StateVector::random(5, &mut r2).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-14);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(StateVector::from_amplitudes(2, vec![c(1.0); 3]).is_err());
        assert!(StateVector::zero_state(40).is_err());
    }
}
