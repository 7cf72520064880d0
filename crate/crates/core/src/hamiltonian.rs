//! Open Heisenberg chain with a staggered longitudinal field,
//!
//! `H = (J/4) Σ_i (X_i X_{i+1} + Y_i Y_{i+1} + Z_i Z_{i+1}) + (h_z/2) Σ_i (−1)^i Z_i`,
//!
//! with sites labelled from 1 in the sign convention, so the first site (index
//! 0 in code) carries `−h_z/2`.

use serde::{Deserialize, Serialize};

use crate::numerics::{
    lanczos_extremal, svd, DenseMatrix, HermitianOperator, LanczosOptions, Pauli, PauliString, PauliSum, PauliTerm,
};
use crate::state::site_bit;
use crate::{Error, Result, StateVector, MAX_STATEVECTOR_SITES};

/// Gaps below this are treated as degenerate ground spaces.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n_sites: usize,
    /// Exchange coupling `J`.
    pub coupling: f64,
    /// Staggered field amplitude `h_z`.
    pub field: f64,
}

impl HamiltonianSpec {
    pub fn new(n_sites: usize, coupling: f64, field: f64) -> Result<Self> {
        let spec = Self { n_sites, coupling, field };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit coupling.
    pub fn heisenberg(n_sites: usize, field: f64) -> Result<Self> {
        Self::new(n_sites, 1.0, field)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::InvalidHamiltonian(format!("need at least 2 sites, got {}", self.n_sites)));
        }
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(Error::InvalidHamiltonian(format!("coupling must be positive, got {}", self.coupling)));
        }
        if !(self.field.is_finite() && self.field >= 0.0) {
            return Err(Error::InvalidHamiltonian(format!("field must be nonnegative, got {}", self.field)));
        }
        Ok(())
    }

    /// Field coefficient on code site `site`.
    pub fn field_coefficient(&self, site: usize) -> f64 {
        let sign = if (site + 1) % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.field / 2.0
    }

    fn bond_terms(&self, left: usize) -> [PauliTerm; 3] {
        let c = self.coupling / 4.0;
        [Pauli::X, Pauli::Y, Pauli::Z].map(|p| PauliTerm::new(PauliString::pair(left, p, left + 1, p), c))
    }

    fn field_terms(&self) -> Vec<PauliTerm> {
        (0..self.n_sites)
            .map(|i| PauliTerm::new(PauliString::single(i, Pauli::Z), self.field_coefficient(i)))
            .collect()
    }
}

/// Terms grouped for the symmetric Trotter split. Within each bond group the
/// bonds are pairwise disjoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSplit {
    pub n_sites: usize,
    /// Bonds `(0,1), (2,3), …` (the first, third, … bonds of the chain).
    pub even_bonds: Vec<PauliTerm>,
    /// Bonds `(1,2), (3,4), …`.
    pub odd_bonds: Vec<PauliTerm>,
    pub field_terms: Vec<PauliTerm>,
}

impl TermSplit {
    pub fn all_terms(&self) -> impl Iterator<Item = &PauliTerm> {
        self.even_bonds.iter().chain(&self.odd_bonds).chain(&self.field_terms)
    }

    pub fn to_operator(&self) -> PauliSum {
        PauliSum::new(self.n_sites, self.all_terms().cloned().collect())
    }
}

pub fn build_hamiltonian(spec: &HamiltonianSpec) -> Result<PauliSum> {
    spec.validate()?;
    let mut terms: Vec<PauliTerm> = (0..spec.n_sites - 1).flat_map(|i| spec.bond_terms(i)).collect();
    terms.extend(spec.field_terms());
    Ok(PauliSum::new(spec.n_sites, terms))
}

pub fn split_terms(spec: &HamiltonianSpec) -> Result<TermSplit> {
    spec.validate()?;
    let mut even_bonds = Vec::new();
    let mut odd_bonds = Vec::new();
    for i in 0..spec.n_sites - 1 {
        let target = if i % 2 == 0 { &mut even_bonds } else { &mut odd_bonds };
        target.extend(spec.bond_terms(i));
    }
    Ok(TermSplit { n_sites: spec.n_sites, even_bonds, odd_bonds, field_terms: spec.field_terms() })
}

/// Low-lying spectrum from Lanczos.
#[derive(Clone, Debug)]
pub struct ReferenceSpectrum {
    pub e0: f64,
    pub e1: f64,
    /// `e1 − e0`.
    pub gap: f64,
    pub ground: StateVector,
    /// Orthonormal basis of the ground space; more than one vector only when
    /// the gap is below [`DEGENERACY_TOL`].
    pub ground_space: Vec<StateVector>,
    pub degenerate: bool,
    pub max_residual: f64,
}

impl ReferenceSpectrum {
    /// Weight of `state` inside the ground space.
    pub fn ground_fidelity(&self, state: &StateVector) -> f64 {
        self.ground_space.iter().map(|g| g.fidelity(state)).sum()
    }
}

pub fn reference_spectrum(spec: &HamiltonianSpec, opts: &LanczosOptions) -> Result<ReferenceSpectrum> {
    spec.validate()?;
    if spec.n_sites > MAX_STATEVECTOR_SITES {
        return Err(Error::TooManySites { sites: spec.n_sites, limit: MAX_STATEVECTOR_SITES });
    }
    let h = build_hamiltonian(spec)?;
    let dim = h.dim();
    let mut k = 2;
    let mut pairs = lanczos_extremal(&h, k, opts)?;
    // widen the request until the ground space is exhausted
    while pairs[k - 1].value - pairs[0].value < DEGENERACY_TOL && k < dim.min(16) {
        k = (2 * k).min(dim.min(16));
        pairs = lanczos_extremal(&h, k, opts)?;
    }
    let e0 = pairs[0].value;
    let e1 = pairs[1].value;
    let gap = (e1 - e0).max(0.0);
    let degenerate = gap < DEGENERACY_TOL;
    let max_residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    let mut ground_space = Vec::new();
    for p in &pairs {
        if p.value - e0 < DEGENERACY_TOL {
            ground_space.push(StateVector::from_amplitudes(spec.n_sites, p.vector.clone())?);
        }
    }
    Ok(ReferenceSpectrum {
        e0,
        e1,
        gap,
        ground: ground_space[0].clone(),
        ground_space,
        degenerate,
        max_residual,
    })
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.contains(x))
}

fn commutator(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a * b - b * a
}

fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    if m.iter().all(|x| x.norm() == 0.0) {
        return Ok(0.0);
    }
    Ok(svd(m)?.s[0])
}

/// `Σ_{a,b,c} ‖[h_c,[h_b,h_a]]‖` over all ordered triples of Hamiltonian terms.
///
/// Triples whose supports cannot overlap are skipped; each surviving nested
/// commutator is built densely on the union of the three supports.
pub fn commutator_prefactor(spec: &HamiltonianSpec) -> Result<f64> {
    let h = build_hamiltonian(spec)?;
    let terms = h.terms();
    let supports: Vec<Vec<usize>> = terms.iter().map(|t| t.string.support()).collect();
    let mut total = 0.0;
    for (a, ta) in terms.iter().enumerate() {
        for (b, tb) in terms.iter().enumerate() {
            if !intersects(&supports[a], &supports[b]) {
                continue;
            }
            let ab = union(&supports[a], &supports[b]);
            for (c, tc) in terms.iter().enumerate() {
                if !intersects(&supports[c], &ab) {
                    continue;
                }
                let sites = union(&ab, &supports[c]);
                let ha = ta.string.local_matrix(&sites).scale(ta.coeff);
                let hb = tb.string.local_matrix(&sites).scale(tb.coeff);
                let hc = tc.string.local_matrix(&sites).scale(tc.coeff);
                total += spectral_norm(&commutator(&hc, &commutator(&hb, &ha)))?;
            }
        }
    }
    Ok(total)
}

/// `|0101…⟩`: even code sites up, odd code sites down.
pub fn neel_state(n_sites: usize) -> Result<StateVector> {
    let index = (1..n_sites).step_by(2).fold(0usize, |acc, s| acc | (1 << site_bit(n_sites, s)));
    StateVector::basis(n_sites, index)
}

/// Total `Σ_i Z_i` eigenvalue of basis index `index`.
pub fn magnetization(n_sites: usize, index: usize) -> i64 {
    let ones = (index & ((1 << n_sites) - 1)).count_ones() as i64;
    n_sites as i64 - 2 * ones
}
