//! Sequential matrix-product-disentangler encoder.
//!
//! A bond-2 canonical MPS (see [`crate::mps`]) is turned into a staircase of
//! gates `G[1], …, G[N]`. `G[n]` acts on sites `(n, n+1)` and maps
//! `|j⟩|0⟩ ↦ Σ_{k,l} A[n]_{j,k,l} |k⟩|l⟩`: the bond index arrives on site `n`,
//! the physical index stays there and the outgoing bond moves to site `n+1`.
//! The last site gets a single-qubit gate. Applying `G[1]` first and `G[N]`
//! last to `|0…0⟩` prepares the MPS; the reverse sequence of adjoints, which
//! is one disentangling layer `Û`, maps the MPS back to `|0…0⟩`.

use serde::{Deserialize, Serialize};

use crate::fits::{fit_logistic, LogisticFit};
use crate::mps::{schmidt_spectrum, Mps, Tensor3};
use crate::numerics::DenseMatrix;
use crate::{Error, Result, StateVector, C64};

/// Tolerance on the isometry condition of input tensors.
pub const ISOMETRY_TOL: f64 = 1e-8;

/// A 1- or 2-site unitary stored row-major; `wires[0]` is the more
/// significant local bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderGate {
    pub wires: Vec<usize>,
    pub matrix: Vec<C64>,
}

impl EncoderGate {
    pub fn dim(&self) -> usize {
        1 << self.wires.len()
    }

    pub fn adjoint(&self) -> EncoderGate {
        let d = self.dim();
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for c in 0..d {
                m[c * d + r] = self.matrix[r * d + c].conj();
            }
        }
        EncoderGate { wires: self.wires.clone(), matrix: m }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_row_slice(self.dim(), self.dim(), &self.matrix)
    }

    /// `max |G†G − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.to_dense();
        let e = g.adjoint() * &g - DenseMatrix::identity(self.dim(), self.dim());
        e.iter().fold(0.0, |a, x| a.max(x.norm()))
    }
}

/// Complete orthonormal columns (placed at `fixed` positions) into a unitary.
///
/// Free columns are filled in increasing position order from the orthogonal
/// complement, taking at each step the standard basis vector with the largest
/// remaining component; each new column has its first nonzero entry made
/// real and positive.
fn complete_columns(dim: usize, fixed: &[(usize, Vec<C64>)]) -> Vec<C64> {
    let mut cols: Vec<Option<Vec<C64>>> = vec![None; dim];
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for (pos, v) in fixed {
        cols[*pos] = Some(v.clone());
        basis.push(v.clone());
    }
    for slot in cols.iter_mut().filter(|c| c.is_none()) {
        let mut best: Option<(f64, Vec<C64>)> = None;
        for e in 0..dim {
            let mut v = vec![C64::new(0.0, 0.0); dim];
            v[e] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for q in &basis {
                    let c: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(bn, _)| n > *bn + 1e-12) {
                best = Some((n, v));
            }
        }
        let (n, mut v) = best.expect("complement is nonempty");
        v.iter_mut().for_each(|x| *x /= n);
        if let Some(first) = v.iter().find(|x| x.norm() > 1e-12).copied() {
            let phase = first.conj() / first.norm();
            v.iter_mut().for_each(|x| *x *= phase);
        }
        basis.push(v.clone());
        *slot = Some(v);
    }
    let mut m = vec![C64::new(0.0, 0.0); dim * dim];
    for (c, col) in cols.into_iter().enumerate() {
        for (r, x) in col.expect("all columns filled").into_iter().enumerate() {
            m[r * dim + c] = x;
        }
    }
    m
}

/// Unitary completion of one canonical site tensor of bond dimension ≤ 2.
///
/// With a right bond of 1 the result is a single-qubit gate
/// `⟨k|G|j⟩ = A_{j,k,0}`; otherwise a two-qubit gate with
/// `⟨k,l|G|j,0⟩ = A_{j,k,l}`. Missing bond values are zero-padded.
pub fn complete_isometry(a: &Tensor3, site: usize, last: bool) -> Result<EncoderGate> {
    let (dl, dr) = (a.left(), a.right());
    if dl > 2 || dr > 2 {
        return Err(Error::Dimension(format!("site {site}: bond dims ({dl}, {dr}) exceed 2")));
    }
    let res = a.isometry_residual();
    if !(res <= ISOMETRY_TOL) {
        return Err(Error::NotIsometric(res));
    }
    if last {
        if dr != 1 {
            return Err(Error::Dimension(format!("last site {site} has right bond {dr}")));
        }
        let fixed: Vec<(usize, Vec<C64>)> = (0..dl).map(|j| (j, (0..2).map(|k| a.get(j, k, 0)).collect())).collect();
        return Ok(EncoderGate { wires: vec![site], matrix: complete_columns(2, &fixed) });
    }
    let fixed: Vec<(usize, Vec<C64>)> = (0..dl)
        .map(|j| {
            let mut v = vec![C64::new(0.0, 0.0); 4];
            for k in 0..2 {
                for l in 0..dr {
                    v[k * 2 + l] = a.get(j, k, l);
                }
            }
            (j * 2, v)
        })
        .collect();
    Ok(EncoderGate { wires: vec![site, site + 1], matrix: complete_columns(4, &fixed) })
}

/// One disentangling layer. `gates` holds the encoding gates in disentangling
/// order: the last site's single-qubit gate first, then `(N−2, N−1)`, down to
/// `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpdLayer {
    pub index: usize,
    pub n_sites: usize,
    pub gates: Vec<EncoderGate>,
}

impl MpdLayer {
    /// Apply `Û`: adjoints of the stored gates, in stored order.
    pub fn disentangle(&self, state: &mut StateVector) {
        for g in &self.gates {
            let a = g.adjoint();
            state.apply_gate(&a.wires, &a.matrix);
        }
    }

    /// Apply `Û†`: the stored gates in reverse order.
    pub fn encode(&self, state: &mut StateVector) {
        for g in self.gates.iter().rev() {
            state.apply_gate(&g.wires, &g.matrix);
        }
    }
}

/// Build the layer that disentangles a canonical MPS with bond dimension ≤ 2.
pub fn build_mpd_layer(mps: &Mps, index: usize) -> Result<MpdLayer> {
    let n = mps.n_sites();
    if mps.max_bond() > 2 {
        return Err(Error::Dimension(format!("layer source has bond dimension {}", mps.max_bond())));
    }
    let mut gates = Vec::with_capacity(n);
    for site in (0..n).rev() {
        gates.push(complete_isometry(mps.tensor(site), site, site == n - 1)?);
    }
    Ok(MpdLayer { index, n_sites: n, gates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderOptions {
    pub max_layers: usize,
    /// Relative singular-value floor for the central Schmidt rank.
    pub rank_threshold: f64,
    /// Stop once the layer count reaches this multiple of the first layer at
    /// which the central rank reaches half its maximum.
    pub stop_after_crossing: Option<f64>,
    /// Layers always built before the crossing rule may stop the run.
    pub min_layers: usize,
}

impl EncoderOptions {
    pub fn fixed(max_layers: usize) -> Self {
        Self { max_layers, rank_threshold: 1e-10, stop_after_crossing: None, min_layers: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: usize,
    /// Central Schmidt rank of the state after `layer` disentangling layers.
    pub chi_cut: usize,
    pub chi_ratio: f64,
    /// Ground-space fidelity of the `layer`-layer encoded state.
    pub fidelity: f64,
    pub if_per_site: f64,
    /// Weight dropped by the bond-2 truncation that built this layer.
    pub discarded_weight: f64,
    pub central_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingDiagnostics {
    pub n_sites: usize,
    pub chi_max: usize,
    pub rank_threshold: f64,
    /// Starts with layer 0, the untouched input.
    pub records: Vec<LayerRecord>,
}

impl EncodingDiagnostics {
    /// Records re-ranked with another singular-value floor.
    pub fn ranks_at(&self, threshold: f64) -> Vec<usize> {
        self.records.iter().map(|r| crate::mps::rank_above(&r.central_values, threshold)).collect()
    }

    /// First layer whose central rank reaches half of the maximum.
    pub fn half_rank_crossing(&self) -> Option<usize> {
        self.records.iter().find(|r| 2 * r.chi_cut >= self.chi_max).map(|r| r.layer)
    }

    pub fn record(&self, layer: usize) -> Option<&LayerRecord> {
        self.records.iter().find(|r| r.layer == layer)
    }
}

pub fn central_cut(n_sites: usize) -> usize {
    n_sites / 2
}

pub fn chi_max(n_sites: usize) -> usize {
    1 << central_cut(n_sites)
}

/// Repeatedly truncate the current state to bond dimension 2, build the layer
/// that disentangles the truncated MPS and apply it to the untruncated state.
///
/// `references` spans the target (ground) space; the fidelity of the encoded
/// state is the sum of its squared overlaps with these vectors.
pub fn run_disentangler(
    psi0: &StateVector,
    references: &[StateVector],
    opts: &EncoderOptions,
) -> Result<(Vec<MpdLayer>, EncodingDiagnostics)> {
    let n = psi0.n_sites();
    if n < 2 {
        return Err(Error::InvalidArgument("encoder needs at least two sites".into()));
    }
    if references.is_empty() || references.iter().any(|r| r.n_sites() != n) {
        return Err(Error::InvalidArgument("reference states missing or of the wrong size".into()));
    }
    let mut current = psi0.clone();
    current.normalize()?;
    let mut tracked: Vec<StateVector> = references.to_vec();
    let cut = central_cut(n);
    let chi_max = chi_max(n);
    let record = |layer: usize, state: &StateVector, tracked: &[StateVector], discarded: f64| -> Result<LayerRecord> {
        let sp = schmidt_spectrum(state, cut, opts.rank_threshold)?;
        let fidelity: f64 = tracked.iter().map(|t| t.amplitudes()[0].norm_sqr()).sum::<f64>().min(1.0);
        Ok(LayerRecord {
            layer,
            chi_cut: sp.rank,
            chi_ratio: sp.rank as f64 / chi_max as f64,
            fidelity,
            if_per_site: (1.0 - fidelity).max(0.0) / n as f64,
            discarded_weight: discarded,
            central_values: sp.values,
        })
    };
    let mut records = vec![record(0, &current, &tracked, 0.0)?];
    let mut layers = Vec::with_capacity(opts.max_layers);
    let mut crossing: Option<usize> = None;
    for k in 1..=opts.max_layers {
        let compressed = Mps::from_statevector_truncated(&current, 2)?;
        let layer = build_mpd_layer(&compressed.mps, k)?;
        layer.disentangle(&mut current);
        for t in tracked.iter_mut() {
            layer.disentangle(t);
        }
        let rec = record(k, &current, &tracked, compressed.total_discarded())?;
        if crossing.is_none() && 2 * rec.chi_cut >= chi_max {
            crossing = Some(k);
        }
        records.push(rec);
        layers.push(layer);
        if let (Some(f), Some(c)) = (opts.stop_after_crossing, crossing) {
            if k >= opts.min_layers && k as f64 >= f * c as f64 {
                break;
            }
        }
    }
    Ok((layers, EncodingDiagnostics { n_sites: n, chi_max, rank_threshold: opts.rank_threshold, records }))
}

/// `Û_1†…Û_L†|0…0⟩`.
pub fn encode_state(layers: &[MpdLayer], n_sites: usize, depth: usize) -> Result<StateVector> {
    if depth > layers.len() {
        return Err(Error::OutOfRange(format!("{depth} layers requested, {} built", layers.len())));
    }
    let mut s = StateVector::zero_state(n_sites)?;
    for layer in layers[..depth].iter().rev() {
        layer.encode(&mut s);
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LStar {
    /// Inflection point of the logistic fit.
    pub l_star: f64,
    pub fit: LogisticFit,
    /// First layer with `χ_cut ≥ χ_max/2`.
    pub crossing: Option<usize>,
}

/// Logistic fit of `χ_cut/χ_max` against the layer index.
pub fn find_lstar(diag: &EncodingDiagnostics) -> Result<LStar> {
    if diag.records.len() < 5 {
        return Err(Error::FitFailure(format!("{} layer records; need at least 5", diag.records.len())));
    }
    let l: Vec<f64> = diag.records.iter().map(|r| r.layer as f64).collect();
    let r: Vec<f64> = diag.records.iter().map(|r| r.chi_ratio).collect();
    let fit = fit_logistic(&l, &r)?;
    Ok(LStar { l_star: fit.l_star, fit, crossing: diag.half_rank_crossing() })
}
