//! Curve fits for encoder diagnostics and resource scaling.
//!
//! * logistic rank growth `r(l) = 1/(1 + (1/r0 − 1)·e^{−γl})` with inflection
//!   point `L* = ln(1/r0 − 1)/γ`,
//! * tail model `y(l) = C + A·e^{−kl}` with `C, A, k ≥ 0`,
//! * power law `y = α·N^β` by least squares on logarithms.
//!
//! All fitters are deterministic: multi-start grids are fixed and no random
//! numbers are drawn.

mod lm;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
use lm::{minimize, LmOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub r0: f64,
    pub gamma: f64,
    /// Inflection point `ln(1/r0 − 1)/γ`.
    pub l_star: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn eval(&self, l: f64) -> f64 {
        logistic(self.r0, self.gamma, l)
    }
}

pub fn logistic(r0: f64, gamma: f64, l: f64) -> f64 {
    1.0 / (1.0 + (1.0 / r0 - 1.0) * (-gamma * l).exp())
}

const R0_MIN: f64 = 1e-12;
const GAMMA_MIN: f64 = 1e-12;

fn logistic_model(l: &[f64], r: &[f64], p: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let (r0, gamma) = (p[0].min(1.0), p[1]);
    let q = 1.0 / r0 - 1.0;
    let mut res = Vec::with_capacity(l.len());
    let mut jac = DMatrix::zeros(l.len(), 2);
    for (i, (&li, &ri)) in l.iter().zip(r).enumerate() {
        let e = (-gamma * li).exp();
        let d = 1.0 + q * e;
        res.push(1.0 / d - ri);
        jac[(i, 0)] = e / (d * d * r0 * r0);
        jac[(i, 1)] = q * e * li / (d * d);
    }
    res.iter().all(|x| x.is_finite()).then_some((res, jac))
}

/// Least-squares logistic fit over a fixed grid of starting points.
pub fn fit_logistic(l: &[f64], r: &[f64]) -> Result<LogisticFit> {
    if l.len() != r.len() {
        return Err(Error::Dimension(format!("{} abscissae, {} values", l.len(), r.len())));
    }
    if l.len() < 5 {
        return Err(Error::FitFailure(format!("logistic fit needs at least 5 points, got {}", l.len())));
    }
    if r.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::FitFailure("logistic data must lie in (0, 1]".into()));
    }
    let first = r[0];
    if r.iter().all(|&v| v == first) {
        return Err(Error::FitFailure(format!("constant data (all values {first}); no inflection to locate")));
    }
    let span = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - l.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = span.max(1.0);
    let opts = LmOptions::default();
    let mut best: Option<(f64, lm::LmOutcome)> = None;
    for r0 in [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.3, 0.6, 0.9] {
        // growth rates from one e-fold per window up to a few per layer
        for g in std::iter::successors(Some(0.3 / span), |g| Some(g * 3.0)).take_while(|g| *g < 10.0) {
            let x0 = [r0, g];
            let Some(out) = minimize(|p| logistic_model(l, r, p), &x0, &[Some(R0_MIN), Some(GAMMA_MIN)], &opts) else {
                continue;
            };
            if out.x[0] > 1.0 || !out.residual.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|(c, _)| out.residual < *c) {
                best = Some((out.residual, out));
            }
        }
    }
    let (_, out) = best.ok_or_else(|| Error::FitFailure("every logistic start diverged".into()))?;
    let (r0, gamma) = (out.x[0], out.x[1]);
    if r0 >= 1.0 {
        return Err(Error::FitFailure("fitted r0 = 1; the curve is already saturated".into()));
    }
    if gamma <= 1e3 * GAMMA_MIN {
        return Err(Error::FitFailure("growth rate collapsed to zero; data show no sigmoid".into()));
    }
    Ok(LogisticFit {
        r0,
        gamma,
        l_star: (1.0 / r0 - 1.0).ln() / gamma,
        residual_norm: out.residual,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// How tail residuals are weighted.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailWeighting {
    /// Plain residuals `model − y`.
    Absolute,
    /// Residuals divided by the data, `(model − y)/y`; every decade of the
    /// semilog tail counts equally.
    #[default]
    Relative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub c: f64,
    pub a: f64,
    pub k: f64,
    /// Inclusive layer window.
    pub window: (f64, f64),
    pub points: usize,
    pub residual_norm: f64,
    pub weighting: TailWeighting,
    /// Names of parameters pinned at their zero bound.
    pub active_constraints: Vec<String>,
    pub converged: bool,
}

impl TailFit {
    pub fn eval(&self, l: f64) -> f64 {
        self.c + self.a * (-self.k * l).exp()
    }
}

fn tail_model(l: &[f64], y: &[f64], w: &[f64], p: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let (c, a, k) = (p[0], p[1], p[2]);
    let mut res = Vec::with_capacity(l.len());
    let mut jac = DMatrix::zeros(l.len(), 3);
    for (i, ((&li, &yi), &wi)) in l.iter().zip(y).zip(w).enumerate() {
        let e = (-k * li).exp();
        res.push(wi * (c + a * e - yi));
        jac[(i, 0)] = wi;
        jac[(i, 1)] = wi * e;
        jac[(i, 2)] = -wi * a * li * e;
    }
    res.iter().all(|x| x.is_finite()).then_some((res, jac))
}

/// Bounded fit of `C + A·e^{−kl}` to the points with `l` inside `window`.
pub fn fit_tail(l: &[f64], y: &[f64], window: (f64, f64), weighting: TailWeighting) -> Result<TailFit> {
    if l.len() != y.len() {
        return Err(Error::Dimension(format!("{} abscissae, {} values", l.len(), y.len())));
    }
    let (lo, hi) = window;
    let (wl, wy): (Vec<f64>, Vec<f64>) =
        l.iter().zip(y).filter(|(li, _)| **li >= lo && **li <= hi).map(|(a, b)| (*a, *b)).unzip();
    if wl.is_empty() {
        return Err(Error::EmptyWindow(format!("no data in layer window {lo}..{hi}")));
    }
    if wl.len() < 6 {
        return Err(Error::EmptyWindow(format!("only {} points in layer window {lo}..{hi}; need 6", wl.len())));
    }
    if wy.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::FitFailure("tail data must be positive and finite".into()));
    }
    let weights: Vec<f64> = match weighting {
        TailWeighting::Absolute => vec![1.0; wy.len()],
        TailWeighting::Relative => wy.iter().map(|v| 1.0 / v).collect(),
    };
    // log-linear start for (A, k)
    let n = wl.len() as f64;
    let mx = wl.iter().sum::<f64>() / n;
    let logs: Vec<f64> = wy.iter().map(|v| v.ln()).collect();
    let my = logs.iter().sum::<f64>() / n;
    let sxx: f64 = wl.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::SingularJacobian("all window points share one layer index".into()));
    }
    let slope = wl.iter().zip(&logs).map(|(x, v)| (x - mx) * (v - my)).sum::<f64>() / sxx;
    let k0 = (-slope).max(1e-6 / (hi - lo).max(1.0));
    let a0 = (my + k0 * mx).exp();
    let ymin = wy.iter().cloned().fold(f64::INFINITY, f64::min);

    let opts = LmOptions::default();
    let bounds = [Some(0.0), Some(0.0), Some(0.0)];
    let mut best: Option<lm::LmOutcome> = None;
    for cf in [0.0, 0.3, 0.6, 0.9] {
        for kf in [0.5, 1.0, 2.0] {
            let x0 = [cf * ymin, a0 * (1.0 - cf).max(0.1), k0 * kf];
            let Some(out) = minimize(|p| tail_model(&wl, &wy, &weights, p), &x0, &bounds, &opts) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| out.residual < b.residual) {
                best = Some(out);
            }
        }
    }
    let out = best.ok_or_else(|| Error::FitFailure("every tail start diverged".into()))?;
    let jac_ok = tail_model(&wl, &wy, &weights, &out.x)
        .map(|(_, j)| {
            let jtj = j.transpose() * &j;
            jtj.determinant().abs() > 0.0
        })
        .unwrap_or(false);
    if !jac_ok && out.x[1] > 0.0 && out.x[2] > 0.0 {
        return Err(Error::SingularJacobian("tail Jacobian is rank deficient at the optimum".into()));
    }
    let mut p = out.x.clone();
    let ymax = wy.iter().cloned().fold(0.0, f64::max);
    let snap = [1e-10 * ymin, 1e-12 * ymax, 1e-12 / (hi - lo).max(1.0)];
    let mut active = Vec::new();
    for (i, name) in ["C", "A", "k"].iter().enumerate() {
        if p[i] <= snap[i] {
            p[i] = 0.0;
            active.push(name.to_string());
        }
    }
    Ok(TailFit {
        c: p[0],
        a: p[1],
        k: p[2],
        window,
        points: wl.len(),
        residual_norm: out.residual,
        weighting,
        active_constraints: active,
        converged: out.converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub beta: f64,
    /// `None` when the fit is exactly determined (two points).
    pub stderr_beta: Option<f64>,
    pub r2_log: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.alpha * n.powf(self.beta)
    }
}

/// `y = α·N^β` by ordinary least squares on `(ln N, ln y)`.
pub fn fit_powerlaw(n: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if n.len() != y.len() {
        return Err(Error::Dimension(format!("{} sizes, {} values", n.len(), y.len())));
    }
    if n.len() < 2 {
        return Err(Error::FitFailure("power-law fit needs at least 2 points".into()));
    }
    if n.iter().chain(y).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("power-law data must be positive and finite".into()));
    }
    let xs: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitFailure("all sizes are equal".into()));
    }
    let beta = xs.iter().zip(&ys).map(|(x, v)| (x - mx) * (v - my)).sum::<f64>() / sxx;
    let intercept = my - beta * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, v)| (v - intercept - beta * x).powi(2)).sum();
    let sst: f64 = ys.iter().map(|v| (v - my).powi(2)).sum();
    let r2_log = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let stderr_beta = (xs.len() > 2).then(|| (ssr / (m - 2.0) / sxx).sqrt());
    Ok(PowerLawFit { alpha: intercept.exp(), beta, stderr_beta, r2_log, points: xs.len() })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum DeltaL {
    Layers(f64),
    /// The tail floor `C` already sits at or above the per-site target.
    Unreachable,
}

/// Extra layers `(1/k)·ln(A/(ε/N − C))` needed to bring the tail model to `ε/N`.
pub fn predict_delta_l(tail: &TailFit, n_sites: usize, eps: f64) -> Result<DeltaL> {
    if !(tail.k > 0.0) {
        return Err(Error::InvalidArgument("tail decay rate k must be positive".into()));
    }
    let target = eps / n_sites as f64 - tail.c;
    if target <= 0.0 {
        return Ok(DeltaL::Unreachable);
    }
    Ok(DeltaL::Layers((tail.a / target).ln() / tail.k))
}

/// Default tail windows by chain length (inclusive layer ranges).
pub fn default_tail_window(n_sites: usize) -> Option<(usize, usize)> {
    match n_sites {
        8 => Some((20, 100)),
        10 => Some((50, 250)),
        12 => Some((200, 900)),
        14 => Some((100, 400)),
        16 => Some((1100, 1800)),
        18 => Some((200, 400)),
        20 => Some((1100, 1800)),
        _ => None,
    }
}

/// Least-squares slope of `ln y` against `ln x`; a bare slope without the
/// rest of [`PowerLawFit`].
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(fit_powerlaw(x, y)?.beta)
}

/// Ordinary least-squares line `y = a + b·x` with its coefficient of determination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::FitFailure("linear fit needs at least 2 paired points".into()));
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitFailure("all abscissae are equal".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(LinearFit { intercept, slope, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn logistic_roundtrip() {
        let l: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let r: Vec<f64> = l.iter().map(|&x| logistic(0.1, 0.3, x)).collect();
        let f = fit_logistic(&l, &r).unwrap();
        assert!(rel(f.r0, 0.1) < 1e-6 && rel(f.gamma, 0.3) < 1e-6, "{f:?}");
        assert!(rel(f.l_star, 9f64.ln() / 0.3) < 1e-6);
    }

    #[test]
    fn logistic_inflection_closed_form() {
        let l: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let r: Vec<f64> = l.iter().map(|&x| logistic(1.0 / 16.0, 0.5, x)).collect();
        let f = fit_logistic(&l, &r).unwrap();
        assert!((f.l_star - 15f64.ln() / 0.5).abs() < 1e-6);
    }

    #[test]
    fn logistic_rejects_constant() {
        let l: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(fit_logistic(&l, &[1.0; 10]), Err(Error::FitFailure(_))));
        assert!(matches!(fit_logistic(&l, &[0.5; 10]), Err(Error::FitFailure(_))));
    }

    #[test]
    fn logistic_with_noise() {
        let l: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut errs: Vec<f64> = (0..20)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let r: Vec<f64> = l
                    .iter()
                    .map(|&x| (logistic(0.05, 0.25, x) * (1.0 + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal))).min(1.0))
                    .collect();
                rel(fit_logistic(&l, &r).unwrap().gamma, 0.25)
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[10] < 0.05, "{errs:?}");
    }

    #[test]
    fn tail_roundtrip() {
        let l: Vec<f64> = (0..=2000).step_by(5).map(|i| i as f64).collect();
        let y: Vec<f64> = l.iter().map(|&x| 1e-9 + 1e-3 * (-0.01 * x).exp()).collect();
        let f = fit_tail(&l, &y, (0.0, 2000.0), TailWeighting::Relative).unwrap();
        assert!(rel(f.c, 1e-9) < 1e-4 && rel(f.a, 1e-3) < 1e-4 && rel(f.k, 0.01) < 1e-4, "{f:?}");
        assert!(f.active_constraints.is_empty());
    }

    #[test]
    fn tail_pure_exponential_pins_floor() {
        let l: Vec<f64> = (20..=100).map(|i| i as f64).collect();
        let y: Vec<f64> = l.iter().map(|&x| 2e-3 * (-0.05 * x).exp()).collect();
        for w in [TailWeighting::Absolute, TailWeighting::Relative] {
            let f = fit_tail(&l, &y, (20.0, 100.0), w).unwrap();
            assert_eq!(f.c, 0.0);
            assert!(f.active_constraints.contains(&"C".to_string()));
            assert!(rel(f.k, 0.05) < 1e-6);
        }
    }

    #[test]
    fn tail_window_errors() {
        let l: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = vec![1.0; 10];
        assert!(matches!(fit_tail(&l, &y, (50.0, 60.0), TailWeighting::Relative), Err(Error::EmptyWindow(_))));
        assert!(matches!(fit_tail(&l, &y, (0.0, 3.0), TailWeighting::Relative), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn powerlaw_examples() {
        let n = [8.0, 10.0, 12.0, 14.0, 16.0];
        let y: Vec<f64> = n.iter().map(|v: &f64| 2.0 * v.powi(3)).collect();
        let f = fit_powerlaw(&n, &y).unwrap();
        assert!((f.beta - 3.0).abs() < 1e-12 && (f.r2_log - 1.0).abs() < 1e-12);

        let y: Vec<f64> = n.iter().map(|v: &f64| 1549.0 * v.powf(1.521)).collect();
        let f = fit_powerlaw(&n, &y).unwrap();
        assert!(rel(f.alpha, 1549.0) < 1e-6 && rel(f.beta, 1.521) < 1e-6);

        let f = fit_powerlaw(&[8.0, 16.0], &[3.0, 12.0]).unwrap();
        assert!((f.beta - 2.0).abs() < 1e-12 && f.stderr_beta.is_none());
        assert!(fit_powerlaw(&[8.0, 10.0, 12.0], &[1.0, -1.0, 2.0]).is_err());
    }

    fn tail(c: f64, a: f64, k: f64) -> TailFit {
        TailFit {
            c,
            a,
            k,
            window: (0.0, 1.0),
            points: 0,
            residual_norm: 0.0,
            weighting: TailWeighting::Relative,
            active_constraints: vec![],
            converged: true,
        }
    }

    #[test]
    fn delta_l_examples() {
        let t = tail(0.0, 1e-3, 0.01);
        let DeltaL::Layers(d) = predict_delta_l(&t, 8, 1e-6).unwrap() else { panic!() };
        assert!((d - 100.0 * (1e-3f64 / 1.25e-7).ln()).abs() < 1e-9);
        assert!((d - 898.7).abs() < 0.1);
        let DeltaL::Layers(d2) = predict_delta_l(&t, 8, 2e-6).unwrap() else { panic!() };
        assert!(d2 < d);
        assert_eq!(predict_delta_l(&tail(1.25e-7, 1e-3, 0.01), 8, 1e-6).unwrap(), DeltaL::Unreachable);
        assert!(predict_delta_l(&tail(0.0, 1e-3, 0.0), 8, 1e-6).is_err());
    }

    #[test]
    fn default_windows() {
        assert_eq!(default_tail_window(8), Some((20, 100)));
        assert_eq!(default_tail_window(16), Some((1100, 1800)));
        assert_eq!(default_tail_window(9), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn powerlaw_scale_equivariant(beta in -3.0f64..3.0, c in 0.01f64..100.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = [8.0, 10.0, 12.0, 14.0];
            let y: Vec<f64> = n.iter().map(|v: &f64| v.powf(beta) * (1.0 + 0.1 * rng.random::<f64>())).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let a = fit_powerlaw(&n, &y).unwrap();
            let b = fit_powerlaw(&n, &ys).unwrap();
            prop_assert!(rel(b.alpha, a.alpha * c) < 1e-10);
            prop_assert!((a.beta - b.beta).abs() < 1e-10);
            prop_assert!((a.stderr_beta.unwrap() - b.stderr_beta.unwrap()).abs() < 1e-10);
            prop_assert!((a.r2_log - b.r2_log).abs() < 1e-10);
        }

        #[test]
        fn tail_respects_bounds(c in 0.0f64..1e-4, a in 1e-4f64..1e-2, k in 0.0f64..0.1, noise in 0.0f64..0.05, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l: Vec<f64> = (0..60).map(|i| i as f64).collect();
            let y: Vec<f64> = l.iter().map(|&x| (c + a * (-k * x).exp()) * (1.0 + noise * (rng.random::<f64>() - 0.5))).collect();
            if let Ok(f) = fit_tail(&l, &y, (0.0, 59.0), TailWeighting::Relative) {
                prop_assert!(f.c >= 0.0 && f.a >= 0.0 && f.k >= 0.0);
            }
        }

        #[test]
        fn logistic_beats_every_grid_start(r0 in 0.01f64..0.3, g in 0.05f64..1.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l: Vec<f64> = (0..30).map(|i| i as f64).collect();
            let r: Vec<f64> = l.iter().map(|&x| (logistic(r0, g, x) * (1.0 + 0.02 * (rng.random::<f64>() - 0.5))).min(1.0)).collect();
            let f = fit_logistic(&l, &r).unwrap();
            for s0 in [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.3, 0.6, 0.9] {
                for gs in [0.3, 1.0, 3.0, 10.0, 30.0] {
                    let (res, _) = logistic_model(&l, &r, &[s0, gs / 29.0]).unwrap();
                    let start = res.iter().map(|v| v * v).sum::<f64>().sqrt();
                    prop_assert!(f.residual_norm <= start + 1e-12);
                }
            }
        }
    }
}
