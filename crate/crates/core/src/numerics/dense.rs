use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result, C64};

/// Dense complex matrix.
pub type DenseMatrix = DMatrix<C64>;

/// Thin singular value decomposition `M = U·diag(S)·Vh`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    /// Nonnegative, descending.
    pub s: Vec<f64>,
    pub vh: DenseMatrix,
}

const SVD_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 10_000;

/// Thin SVD with singular values sorted in descending order.
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("empty {rows}x{cols} matrix")));
    }
    if m.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    let dec = m
        .clone()
        .try_svd(true, true, SVD_EPS, MAX_SWEEPS)
        .ok_or(Error::SvdNoConvergence { rows, cols })?;
    let (u, vt) = match (dec.u, dec.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::SvdNoConvergence { rows, cols }),
    };
    let k = dec.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let s = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u = DenseMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]);
    let vh = DenseMatrix::from_fn(k, cols, |r, c| vt[(order[r], c)]);
    Ok(Svd { u, s, vh })
}

/// Thin QR factorization with a real nonnegative diagonal on `R`; unique for
/// full column rank.
pub fn qr_positive(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            q.column_mut(i).iter_mut().for_each(|x| *x *= phase);
            r.row_mut(i).iter_mut().for_each(|x| *x *= phase.conj());
        }
    }
    (q, r)
}

fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.norm()))
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching eigenvectors as columns.
pub fn dense_eig_hermitian(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let (rows, cols) = m.shape();
    if rows != cols || rows == 0 {
        return Err(Error::Dimension(format!("eigensolver needs a square matrix, got {rows}x{cols}")));
    }
    let dev = (m - m.adjoint()).iter().fold(0.0f64, |a, x| a.max(x.norm()));
    if dev > 1e-12 * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(herm, 1e-15, MAX_SWEEPS).ok_or(Error::EigNoConvergence(rows))?;
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(rows, rows, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `exp(-i t H)` for a dense Hermitian `H`.
pub fn expm_hermitian(h: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let (vals, vecs) = dense_eig_hermitian(h)?;
    let n = vals.len();
    let phases = DenseMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(0.0, -t * vals[r]).exp()
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(&vecs * phases * vecs.adjoint())
}
