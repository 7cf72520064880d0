use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CanonicalForm, Mpo, MpoTensor, Mps, Tensor3, RANK_FLOOR};
use crate::numerics::{lanczos_extremal, svd, DenseMatrix, HermitianOperator, LanczosOptions};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmrgOptions {
    pub chi_max: usize,
    pub max_sweeps: usize,
    /// Stop once the energy changes by less than this between sweeps.
    pub e_tol: f64,
    /// Seed of the random bond-2 starting state.
    pub seed: u64,
    /// Relative residual tolerance of the local eigensolver.
    pub local_tol: f64,
    pub local_subspace: usize,
}

impl DmrgOptions {
    pub fn new(chi_max: usize) -> Self {
        Self { chi_max, ..Self::default() }
    }
}

impl Default for DmrgOptions {
    fn default() -> Self {
        Self { chi_max: 16, max_sweeps: 30, e_tol: 1e-10, seed: 1234, local_tol: 1e-10, local_subspace: 32 }
    }
}

#[derive(Clone, Debug)]
pub struct DmrgResult {
    /// Normalized, in [`CanonicalForm::Left`].
    pub mps: Mps,
    /// `⟨ψ|H|ψ⟩` of the returned state.
    pub energy: f64,
    /// Energy after each full sweep.
    pub sweep_energies: Vec<f64>,
    /// `true` if the energy tolerance was met, `false` if the sweep cap ended the run.
    pub converged: bool,
    /// Set when some sweep raised the energy beyond roundoff.
    pub non_monotonic: bool,
    /// Largest discarded weight of any truncation in the final sweep.
    pub max_discarded: f64,
}

/// Left or right environment with index `(bond, mpo bond, bond')`.
#[derive(Clone, Debug)]
struct Env {
    d: usize,
    w: usize,
    data: Vec<C64>,
}

impl Env {
    fn trivial() -> Self {
        Self { d: 1, w: 1, data: vec![C64::new(1.0, 0.0)] }
    }

    #[inline]
    fn at(&self, a: usize, w: usize, b: usize) -> C64 {
        self.data[(a * self.w + w) * self.d + b]
    }
}

/// Grow a left environment over one site.
fn extend_left(env: &Env, a: &Tensor3, w: &MpoTensor) -> Env {
    let (dl, dr) = (a.left(), a.right());
    let (wl, wr) = (w.left(), w.right());
    // t1[x, wa, s', b'] = Σ_{x'} L[x, wa, x'] A[x', s', b']
    let mut t1 = vec![ZERO; dl * wl * 2 * dr];
    for x in 0..dl {
        for wa in 0..wl {
            for xp in 0..dl {
                let l = env.at(x, wa, xp);
                if l == ZERO {
                    continue;
                }
                for sp in 0..2 {
                    for bp in 0..dr {
                        t1[((x * wl + wa) * 2 + sp) * dr + bp] += l * a.get(xp, sp, bp);
                    }
                }
            }
        }
    }
    // t2[x, wb, s, b'] = Σ_{wa, s'} W[wa, wb, s, s'] t1[x, wa, s', b']
    let mut t2 = vec![ZERO; dl * wr * 2 * dr];
    for wa in 0..wl {
        for wb in 0..wr {
            for s in 0..2 {
                for sp in 0..2 {
                    let wv = w.get(wa, wb, s, sp);
                    if wv == ZERO {
                        continue;
                    }
                    for x in 0..dl {
                        let src = ((x * wl + wa) * 2 + sp) * dr;
                        let dst = ((x * wr + wb) * 2 + s) * dr;
                        for bp in 0..dr {
                            t2[dst + bp] += wv * t1[src + bp];
                        }
                    }
                }
            }
        }
    }
    // L'[b, wb, b'] = Σ_{x, s} conj(A[x, s, b]) t2[x, wb, s, b']
    let mut out = vec![ZERO; dr * wr * dr];
    for x in 0..dl {
        for s in 0..2 {
            for b in 0..dr {
                let c = a.get(x, s, b).conj();
                if c == ZERO {
                    continue;
                }
                for wb in 0..wr {
                    let src = ((x * wr + wb) * 2 + s) * dr;
                    let dst = (b * wr + wb) * dr;
                    for bp in 0..dr {
                        out[dst + bp] += c * t2[src + bp];
                    }
                }
            }
        }
    }
    Env { d: dr, w: wr, data: out }
}

/// Grow a right environment over one site.
fn extend_right(env: &Env, a: &Tensor3, w: &MpoTensor) -> Env {
    let (dl, dr) = (a.left(), a.right());
    let (wl, wr) = (w.left(), w.right());
    // t1[x', s', wb, y] = Σ_{y'} A[x', s', y'] R[y, wb, y']
    let mut t1 = vec![ZERO; dl * 2 * wr * dr];
    for xp in 0..dl {
        for sp in 0..2 {
            for y in 0..dr {
                for wb in 0..wr {
                    let mut acc = ZERO;
                    for yp in 0..dr {
                        acc += a.get(xp, sp, yp) * env.at(y, wb, yp);
                    }
                    t1[((xp * 2 + sp) * wr + wb) * dr + y] = acc;
                }
            }
        }
    }
    // t2[x', s, wa, y] = Σ_{wb, s'} W[wa, wb, s, s'] t1[x', s', wb, y]
    let mut t2 = vec![ZERO; dl * 2 * wl * dr];
    for wa in 0..wl {
        for wb in 0..wr {
            for s in 0..2 {
                for sp in 0..2 {
                    let wv = w.get(wa, wb, s, sp);
                    if wv == ZERO {
                        continue;
                    }
                    for xp in 0..dl {
                        let src = ((xp * 2 + sp) * wr + wb) * dr;
                        let dst = ((xp * 2 + s) * wl + wa) * dr;
                        for y in 0..dr {
                            t2[dst + y] += wv * t1[src + y];
                        }
                    }
                }
            }
        }
    }
    // R'[x, wa, x'] = Σ_{s, y} conj(A[x, s, y]) t2[x', s, wa, y]
    let mut out = vec![ZERO; dl * wl * dl];
    for x in 0..dl {
        for wa in 0..wl {
            for xp in 0..dl {
                let mut acc = ZERO;
                for s in 0..2 {
                    for y in 0..dr {
                        acc += a.get(x, s, y).conj() * t2[((xp * 2 + s) * wl + wa) * dr + y];
                    }
                }
                out[(x * wl + wa) * dl + xp] = acc;
            }
        }
    }
    Env { d: dl, w: wl, data: out }
}

/// Projected Hamiltonian on two neighbouring sites, acting on
/// `θ[a, s1, s2, b]` stored row-major.
struct TwoSiteOperator<'a> {
    left: &'a Env,
    right: &'a Env,
    w1: &'a MpoTensor,
    w2: &'a MpoTensor,
    norm_bound: f64,
}

impl TwoSiteOperator<'_> {
    fn shape(&self) -> (usize, usize) {
        (self.left.d, self.right.d)
    }
}

impl HermitianOperator for TwoSiteOperator<'_> {
    fn dim(&self) -> usize {
        let (dl, dr) = self.shape();
        dl * 4 * dr
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let (dl, dr) = self.shape();
        let (w0, w1, w2) = (self.w1.left(), self.w1.right(), self.w2.right());
        // x1[a, wa, s1', s2', b'] = Σ_{a'} L[a, wa, a'] θ[a', s1', s2', b']
        let blk = 4 * dr;
        let mut x1 = vec![ZERO; dl * w0 * blk];
        for a in 0..dl {
            for wa in 0..w0 {
                let dst = (a * w0 + wa) * blk;
                for ap in 0..dl {
                    let l = self.left.at(a, wa, ap);
                    if l == ZERO {
                        continue;
                    }
                    for k in 0..blk {
                        x1[dst + k] += l * x[ap * blk + k];
                    }
                }
            }
        }
        // x2[a, wb, s1, s2', b'] = Σ_{wa, s1'} W1[wa, wb, s1, s1'] x1[a, wa, s1', s2', b']
        let half = 2 * dr;
        let mut x2 = vec![ZERO; dl * w1 * blk];
        for wa in 0..w0 {
            for wb in 0..w1 {
                for s1 in 0..2 {
                    for s1p in 0..2 {
                        let wv = self.w1.get(wa, wb, s1, s1p);
                        if wv == ZERO {
                            continue;
                        }
                        for a in 0..dl {
                            let src = (a * w0 + wa) * blk + s1p * half;
                            let dst = (a * w1 + wb) * blk + s1 * half;
                            for k in 0..half {
                                x2[dst + k] += wv * x1[src + k];
                            }
                        }
                    }
                }
            }
        }
        // x3[a, wc, s1, s2, b'] = Σ_{wb, s2'} W2[wb, wc, s2, s2'] x2[a, wb, s1, s2', b']
        let mut x3 = vec![ZERO; dl * w2 * blk];
        for wb in 0..w1 {
            for wc in 0..w2 {
                for s2 in 0..2 {
                    for s2p in 0..2 {
                        let wv = self.w2.get(wb, wc, s2, s2p);
                        if wv == ZERO {
                            continue;
                        }
                        for a in 0..dl {
                            for s1 in 0..2 {
                                let src = (a * w1 + wb) * blk + s1 * half + s2p * dr;
                                let dst = (a * w2 + wc) * blk + s1 * half + s2 * dr;
                                for bp in 0..dr {
                                    x3[dst + bp] += wv * x2[src + bp];
                                }
                            }
                        }
                    }
                }
            }
        }
        // y[a, s1, s2, b] = Σ_{wc, b'} x3[a, wc, s1, s2, b'] R[b, wc, b']
        for a in 0..dl {
            for ss in 0..4 {
                for b in 0..dr {
                    let mut acc = ZERO;
                    for wc in 0..w2 {
                        let src = (a * w2 + wc) * blk + ss * dr;
                        for bp in 0..dr {
                            acc += x3[src + bp] * self.right.at(b, wc, bp);
                        }
                    }
                    y[(a * 4 + ss) * dr + b] = acc;
                }
            }
        }
    }

    fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// `⟨ψ|W|ψ⟩` by a full left-to-right contraction.
pub(crate) fn mpo_expectation(mps: &Mps, mpo: &Mpo) -> C64 {
    let mut env = Env::trivial();
    for (a, w) in mps.tensors().iter().zip(mpo.tensors()) {
        env = extend_left(&env, a, w);
    }
    env.data[0]
}

struct Split {
    u: DenseMatrix,
    s: Vec<f64>,
    vh: DenseMatrix,
    discarded: f64,
}

/// Truncated SVD of `θ` reshaped to `(2·D_l) × (2·D_r)`; kept singular values
/// are renormalized.
fn split_two_site(theta: &[C64], dl: usize, dr: usize, chi: usize) -> Result<Split> {
    let m = DenseMatrix::from_row_slice(2 * dl, 2 * dr, theta);
    let d = svd(&m)?;
    let floor = RANK_FLOOR * d.s[0];
    let kept = d.s.iter().take_while(|&&x| x > floor).count().clamp(1, chi);
    let discarded = d.s[kept..].iter().map(|x| x * x).sum();
    let norm = d.s[..kept].iter().map(|x| x * x).sum::<f64>().sqrt();
    let s = d.s[..kept].iter().map(|x| x / norm).collect();
    Ok(Split { u: d.u.columns(0, kept).into_owned(), s, vh: d.vh.rows(0, kept).into_owned(), discarded })
}

fn scale_rows(m: &mut DenseMatrix, s: &[f64]) {
    for (r, &x) in s.iter().enumerate() {
        m.row_mut(r).iter_mut().for_each(|v| *v *= x);
    }
}

fn scale_cols(m: &mut DenseMatrix, s: &[f64]) {
    for (c, &x) in s.iter().enumerate() {
        m.column_mut(c).iter_mut().for_each(|v| *v *= x);
    }
}

fn two_site_theta(a: &Tensor3, b: &Tensor3) -> Vec<C64> {
    let m = a.column_matrix() * b.row_matrix();
    let (rows, cols) = m.shape();
    (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| m[(r, c)]).collect()
}

/// Two-site DMRG ground state.
///
/// Starts from a seeded random bond-2 MPS and alternates left-to-right and
/// right-to-left sweeps; each full sweep ends moving left, so the returned
/// state is in [`CanonicalForm::Left`].
pub fn dmrg_ground(mpo: &Mpo, opts: &DmrgOptions) -> Result<DmrgResult> {
    if opts.chi_max < 2 {
        return Err(Error::InvalidArgument(format!("χ_max must be at least 2, got {}", opts.chi_max)));
    }
    if opts.max_sweeps == 0 {
        return Err(Error::InvalidArgument("need at least one sweep".into()));
    }
    let n = mpo.n_sites();
    if n < 2 {
        return Err(Error::InvalidArgument("DMRG needs at least two sites".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tensors = Mps::random(n, 2, &mut rng)?.tensors().to_vec();

    let mut lefts: Vec<Env> = vec![Env::trivial(); n];
    let mut rights: Vec<Env> = vec![Env::trivial(); n];
    for i in (1..n).rev() {
        rights[i - 1] = extend_right(&rights[i], &tensors[i], mpo.tensor(i));
    }

    let mut local = LanczosOptions {
        tol: opts.local_tol,
        max_subspace: opts.local_subspace,
        max_restarts: 500,
        seed: opts.seed,
        start: None,
    };
    let mut optimize = |i: usize, tensors: &[Tensor3], lefts: &[Env], rights: &[Env]| -> Result<(Vec<C64>, usize, usize)> {
        let op = TwoSiteOperator {
            left: &lefts[i],
            right: &rights[i + 1],
            w1: mpo.tensor(i),
            w2: mpo.tensor(i + 1),
            norm_bound: mpo.norm_bound(),
        };
        local.start = Some(two_site_theta(&tensors[i], &tensors[i + 1]));
        local.seed = local.seed.wrapping_add(1);
        let pair = lanczos_extremal(&op, 1, &local)?.swap_remove(0);
        Ok((pair.vector, op.left.d, op.right.d))
    };

    let mut sweep_energies: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut non_monotonic = false;
    let mut max_discarded = 0.0;
    for _ in 0..opts.max_sweeps {
        max_discarded = 0.0f64;
        for i in 0..n - 1 {
            let (theta, dl, dr) = optimize(i, &tensors, &lefts, &rights)?;
            let mut sp = split_two_site(&theta, dl, dr, opts.chi_max)?;
            max_discarded = max_discarded.max(sp.discarded);
            scale_rows(&mut sp.vh, &sp.s);
            tensors[i] = Tensor3::from_column_matrix(&sp.u);
            tensors[i + 1] = Tensor3::from_row_matrix(&sp.vh);
            lefts[i + 1] = extend_left(&lefts[i], &tensors[i], mpo.tensor(i));
        }
        for i in (0..n - 1).rev() {
            let (theta, dl, dr) = optimize(i, &tensors, &lefts, &rights)?;
            let mut sp = split_two_site(&theta, dl, dr, opts.chi_max)?;
            max_discarded = max_discarded.max(sp.discarded);
            scale_cols(&mut sp.u, &sp.s);
            tensors[i] = Tensor3::from_column_matrix(&sp.u);
            tensors[i + 1] = Tensor3::from_row_matrix(&sp.vh);
            rights[i] = extend_right(&rights[i + 1], &tensors[i + 1], mpo.tensor(i + 1));
        }
        let mps = Mps::from_tensors(tensors.clone(), CanonicalForm::Left)?;
        let e = mpo_expectation(&mps, mpo).re;
        if let Some(&prev) = sweep_energies.last() {
            if e > prev + 1e-10 * prev.abs().max(1.0) {
                non_monotonic = true;
            }
            sweep_energies.push(e);
            if (e - prev).abs() < opts.e_tol {
                converged = true;
                break;
            }
        } else {
            sweep_energies.push(e);
        }
    }
    let mps = Mps::from_tensors(tensors, CanonicalForm::Left)?;
    let energy = *sweep_energies.last().unwrap_or(&f64::NAN);
    Ok(DmrgResult { mps, energy, sweep_energies, converged, non_monotonic, max_discarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_hamiltonian, reference_spectrum, HamiltonianSpec};
    use crate::mps::build_mpo;

    fn run(n: usize, hz: f64, chi: usize) -> (DmrgResult, crate::hamiltonian::ReferenceSpectrum) {
        let spec = HamiltonianSpec::heisenberg(n, hz).unwrap();
        let res = dmrg_ground(&build_mpo(&spec).unwrap(), &DmrgOptions::new(chi)).unwrap();
        let r = reference_spectrum(&spec, &LanczosOptions::default()).unwrap();
        (res, r)
    }

    #[test]
    fn two_sites_exact() {
        let (res, _) = run(2, 0.0, 2);
        assert!((res.energy + 0.75).abs() < 1e-10);
    }

    #[test]
    fn lossless_eight_sites() {
        let (res, r) = run(8, 0.5, 16);
        assert!((res.energy - r.e0).abs() < 1e-9, "{} vs {}", res.energy, r.e0);
        assert!(res.converged && !res.non_monotonic);
        assert!(res.mps.isometry_residual() < 1e-10);
        let psi = res.mps.to_statevector().unwrap();
        assert!(r.ground_fidelity(&psi) > 1.0 - 1e-9);
    }

    #[test]
    fn truncated_is_variational() {
        let (res, r) = run(8, 0.0, 8);
        assert!(res.energy >= r.e0 - 1e-9);
        assert!(res.energy - r.e0 < 1e-3);
        assert!(res.sweep_energies.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn energy_matches_statevector_expectation() {
        let spec = HamiltonianSpec::heisenberg(6, 0.3).unwrap();
        let res = dmrg_ground(&build_mpo(&spec).unwrap(), &DmrgOptions::new(4)).unwrap();
        let psi = res.mps.to_statevector().unwrap();
        let e = psi.expectation(&build_hamiltonian(&spec).unwrap());
        assert!((e - res.energy).abs() < 1e-10);
    }

    #[test]
    fn reproduces_ground_state_up_to_ten_sites() {
        for n in [4, 6, 10] {
            let (res, r) = run(n, 0.5, 1 << (n / 2));
            let psi = res.mps.to_statevector().unwrap();
            assert!(r.ground_fidelity(&psi) > 1.0 - 1e-8, "n={n}");
        }
    }

    #[test]
    fn rejects_small_bond() {
        let spec = HamiltonianSpec::heisenberg(4, 0.0).unwrap();
        assert!(dmrg_ground(&build_mpo(&spec).unwrap(), &DmrgOptions::new(1)).is_err());
    }
}
