//! Small vector kernels shared by the Krylov solvers.

use crate::state::inner;
use crate::C64;

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    inner(a, b)
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    inner(a, a).re.max(0.0).sqrt()
}

/// `y ← y + s·x`
pub(crate) fn axpy(y: &mut [C64], s: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub(crate) fn scale(y: &mut [C64], s: f64) {
    y.iter_mut().for_each(|v| *v *= s);
}

/// Two passes of classical Gram–Schmidt against every vector in `sets`.
pub(crate) fn orthogonalize(w: &mut [C64], sets: &[&[Vec<C64>]]) {
    for _ in 0..2 {
        for set in sets {
            for q in set.iter() {
                let c = dot(q, w);
                axpy(w, -c, q);
            }
        }
    }
}
