//! Damped Gauss–Newton (Levenberg–Marquardt) with optional lower bounds.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    pub step_tol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, step_tol: 1e-12, lambda0: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    /// `‖r‖₂` at `x`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `‖r(x)‖²` where `model(x)` returns `(r, J)` with `J = ∂r/∂x`.
/// Coordinates with a lower bound are projected onto it after every step.
pub(crate) fn minimize<F>(model: F, x0: &[f64], lower: &[Option<f64>], opts: &LmOptions) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<(Vec<f64>, DMatrix<f64>)>,
{
    let project = |x: &mut [f64]| {
        for (xi, lo) in x.iter_mut().zip(lower) {
            if let Some(lo) = lo {
                if *xi < *lo {
                    *xi = *lo;
                }
            }
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut r, mut jac) = model(&x)?;
    let mut cost = sq(&r);
    if !cost.is_finite() {
        return None;
    }
    let mut lambda = opts.lambda0;
    let p = x.len();
    for it in 1..=opts.max_iter {
        let jt = jac.transpose();
        let g = &jt * DVector::from_column_slice(&r);
        let a = &jt * &jac;
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for i in 0..p {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial);
            let moved = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if moved <= opts.step_tol * (scale + opts.step_tol) {
                small_step = true;
                break;
            }
            if let Some((tr, tj)) = model(&trial) {
                let tc = sq(&tr);
                if tc.is_finite() && tc <= cost {
                    let rel = (cost - tc) / cost.max(f64::MIN_POSITIVE);
                    x = trial;
                    r = tr;
                    jac = tj;
                    cost = tc;
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    if rel < 1e-30 {
                        small_step = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if small_step || !accepted {
            return Some(LmOutcome { x, residual: cost.sqrt(), iterations: it, converged: small_step || cost == 0.0 });
        }
        if cost == 0.0 {
            return Some(LmOutcome { x, residual: 0.0, iterations: it, converged: true });
        }
    }
    Some(LmOutcome { x, residual: cost.sqrt(), iterations: opts.max_iter, converged: false })
}

fn sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let model = |p: &[f64]| {
            let r = xs.iter().map(|x| p[0] + p[1] * x - (1.0 + 2.0 * x)).collect();
            let j = DMatrix::from_fn(4, 2, |i, c| if c == 0 { 1.0 } else { xs[i] });
            Some((r, j))
        };
        let out = minimize(model, &[0.0, 0.0], &[None, None], &LmOptions::default()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-10 && (out.x[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn respects_lower_bound() {
        // minimum of (x + 1)² constrained to x ≥ 0
        let model = |p: &[f64]| Some((vec![p[0] + 1.0], DMatrix::from_element(1, 1, 1.0)));
        let out = minimize(model, &[3.0], &[Some(0.0)], &LmOptions::default()).unwrap();
        assert_eq!(out.x[0], 0.0);
    }
}
