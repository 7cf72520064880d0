//! Probabilistic imaginary-time evolution with a deterministic linear
//! schedule.
//!
//! One step post-selects the ancilla branch carrying
//! `f(H̃) = m0[cos(sΔτ H̃) − (1/s) sin(sΔτ H̃)] = cos(sΔτ H̃ + arccos m0)`,
//! `H̃ = H − E_shift`, `s = m0/√(1−m0²)`. The exact backend evaluates both
//! real-time propagators with Krylov; the Trotter backend replaces them by
//! powers of the symmetric slice, with the repetition count calibrated per
//! step against the exact one-step state.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::circuit::{build_pite_step, cost, CircuitCost, PiteStepParams};
use crate::hamiltonian::{build_hamiltonian, split_terms, HamiltonianSpec, ReferenceSpectrum, TermSplit};
use crate::numerics::{expm_hermitian, krylov_expmv, DenseMatrix, KrylovOptions, PauliSum};
use crate::state::site_bit;
use crate::{Error, Result, StateVector, C64, CHEMICAL_ACCURACY};

/// Trotter repetitions are never raised past this.
pub const MAX_REPS: usize = 1024;
/// Smallest gap the schedule accepts.
pub const MIN_GAP: f64 = 1e-8;
/// Location of the single-eigenvalue filter minimum, in units of π.
pub const SUPPRESSION_POINT: f64 = 0.62;

/// `s = m0/√(1−m0²)`.
pub fn s_of_m0(m0: f64) -> f64 {
    m0 / (1.0 - m0 * m0).sqrt()
}

/// Success amplitude of an eigencomponent at excitation `delta` above the shift.
pub fn filter_amplitude(m0: f64, delta: f64, dtau: f64) -> f64 {
    let s = s_of_m0(m0);
    let x = delta * s * dtau;
    m0 * (x.cos() - x.sin() / s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleInputs {
    /// Energy shift, the DMRG ground energy.
    pub e_shift: f64,
    /// Effective gap used for the largest step.
    pub gap: f64,
    /// Reference ground-state weight of the initial state.
    pub w0_ref: f64,
    /// Total infidelity target, split equally into algorithmic and Trotter parts.
    pub epsilon: f64,
    pub m0: f64,
    /// `Δτ_min = Δτ_max · dtau_min_ratio`.
    pub dtau_min_ratio: f64,
}

impl ScheduleInputs {
    pub fn new(e_shift: f64, gap: f64, w0_ref: f64) -> Self {
        Self { e_shift, gap, w0_ref, epsilon: 1e-6, m0: 0.999, dtau_min_ratio: 1.0 / 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub m0: f64,
    pub s: f64,
    pub e_shift: f64,
    pub gap: f64,
    pub w0_ref: f64,
    pub epsilon: f64,
    pub eps_alg: f64,
    pub eps_trot: f64,
    pub eps_tilde: f64,
    pub k_safe: usize,
    /// The step-count formula gave a non-positive value and was raised to 1.
    pub k_safe_clamped: bool,
    pub dtau_min: f64,
    pub dtau_max: f64,
    pub dtaus: Vec<f64>,
    /// Per-step Trotter budgets, proportional to `Δτ³`.
    pub budgets: Vec<f64>,
}

/// `ε(4−ε)/(2−ε)²`.
pub fn eps_tilde(eps: f64) -> f64 {
    eps * (4.0 - eps) / ((2.0 - eps) * (2.0 - eps))
}

/// Unrounded step count `(3/(2 ln 2))·ln((1−w0)/(ε̃·w0))`.
pub fn k_safe_raw(w0: f64, eps_alg: f64) -> f64 {
    3.0 / (2.0 * std::f64::consts::LN_2) * ((1.0 - w0) / (eps_tilde(eps_alg) * w0)).ln()
}

/// Reference weights up to `1 + W0_ROUNDOFF` are treated as exactly 1.
pub const W0_ROUNDOFF: f64 = 1e-12;

pub fn make_schedule(inp: &ScheduleInputs) -> Result<Schedule> {
    if !(inp.gap >= MIN_GAP) {
        return Err(Error::Schedule(format!("effective gap {:e} below {MIN_GAP:e}; the largest step would diverge", inp.gap)));
    }
    if !(inp.w0_ref > 0.0 && inp.w0_ref <= 1.0 + W0_ROUNDOFF) {
        return Err(Error::Schedule(format!("reference weight {} outside (0, 1]", inp.w0_ref)));
    }
    if !(inp.epsilon > 0.0 && inp.epsilon < 1.0) {
        return Err(Error::Schedule(format!("epsilon {} outside (0, 1)", inp.epsilon)));
    }
    if !(inp.m0 > 0.0 && inp.m0 < 1.0) {
        return Err(Error::Schedule(format!("m0 {} outside (0, 1)", inp.m0)));
    }
    if !(inp.dtau_min_ratio > 0.0 && inp.dtau_min_ratio <= 1.0) || !inp.e_shift.is_finite() {
        return Err(Error::Schedule("dtau_min_ratio must lie in (0, 1] and the shift be finite".into()));
    }
    let s = s_of_m0(inp.m0);
    let dtau_max = SUPPRESSION_POINT * std::f64::consts::PI / (s * inp.gap);
    let dtau_min = dtau_max * inp.dtau_min_ratio;
    let (eps_alg, eps_trot) = (inp.epsilon / 2.0, inp.epsilon / 2.0);
    let raw = k_safe_raw(inp.w0_ref.min(1.0), eps_alg).ceil();
    let k_safe_clamped = raw < 1.0;
    let k_safe = if k_safe_clamped { 1 } else { raw as usize };
    let dtaus: Vec<f64> = if k_safe == 1 {
        vec![dtau_max]
    } else {
        (0..k_safe).map(|k| dtau_min + k as f64 / (k_safe - 1) as f64 * (dtau_max - dtau_min)).collect()
    };
    let cube_sum: f64 = dtaus.iter().map(|d| d.powi(3)).sum();
    let budgets = dtaus.iter().map(|d| eps_trot * d.powi(3) / cube_sum).collect();
    Ok(Schedule {
        m0: inp.m0,
        s,
        e_shift: inp.e_shift,
        gap: inp.gap,
        w0_ref: inp.w0_ref,
        epsilon: inp.epsilon,
        eps_alg,
        eps_trot,
        eps_tilde: eps_tilde(eps_alg),
        k_safe,
        k_safe_clamped,
        dtau_min,
        dtau_max,
        dtaus,
        budgets,
    })
}

impl Schedule {
    pub fn step_params(&self, dtau: f64) -> Result<PiteStepParams> {
        PiteStepParams::new(self.m0, self.e_shift, dtau)
    }
}

/// Post-selected state and its success probability.
#[derive(Clone, Debug)]
pub struct FilterOutcome {
    pub state: StateVector,
    pub probability: f64,
}

/// `(e^{iβ} u(−α) + e^{−iβ} u(α))/2` with `u(t) = e^{−itH̃}v`, `β = arccos m0`.
fn combine(n: usize, m0: f64, plus: Vec<C64>, minus: Vec<C64>) -> Result<FilterOutcome> {
    let beta = m0.acos();
    let (a, b) = (C64::from_polar(0.5, -beta), C64::from_polar(0.5, beta));
    let amps: Vec<C64> = plus.iter().zip(&minus).map(|(p, m)| a * p + b * m).collect();
    let mut state = StateVector::from_amplitudes(n, amps)?;
    let probability = state.norm_sqr();
    state.normalize()?;
    Ok(FilterOutcome { state, probability })
}

/// One exact filter step. `h` is the unshifted Hamiltonian.
pub fn exact_filter_apply(
    state: &StateVector,
    h: &PauliSum,
    dtau: f64,
    schedule: &Schedule,
    kopts: &KrylovOptions,
) -> Result<FilterOutcome> {
    let alpha = schedule.s * dtau;
    let shift = |v: Vec<C64>, t: f64| -> Vec<C64> {
        let ph = C64::from_polar(1.0, t * schedule.e_shift);
        v.into_iter().map(|x| x * ph).collect()
    };
    let plus = shift(krylov_expmv(h, alpha, state.amplitudes(), kopts)?, alpha);
    let minus = shift(krylov_expmv(h, -alpha, state.amplitudes(), kopts)?, -alpha);
    combine(state.n_sites(), schedule.m0, plus, minus)
}

/// Symmetric Trotter propagation on the state vector. Each bond's commuting
/// `XX`, `YY`, `ZZ` terms are exponentiated together, which equals the
/// product of their separate rotations in the circuit builders.
#[derive(Clone, Debug)]
pub struct TrotterPropagator {
    n_sites: usize,
    even: Vec<((usize, usize), DenseMatrix)>,
    odd: Vec<((usize, usize), DenseMatrix)>,
    field: Vec<f64>,
}

fn bond_hamiltonians(n: usize, terms: &[crate::numerics::PauliTerm]) -> Vec<((usize, usize), DenseMatrix)> {
    let mut by_bond: BTreeMap<(usize, usize), DenseMatrix> = BTreeMap::new();
    for t in terms {
        let sup = t.string.support();
        let key = (sup[0], sup[1]);
        let local = t.string.local_matrix(&[key.0, key.1]) * C64::new(t.coeff, 0.0);
        *by_bond.entry(key).or_insert_with(|| DenseMatrix::zeros(4, 4)) += local;
    }
    debug_assert!(by_bond.keys().all(|&(a, b)| b < n && a < b));
    by_bond.into_iter().collect()
}

impl TrotterPropagator {
    pub fn new(split: &TermSplit) -> Self {
        let n = split.n_sites;
        let mut field = vec![0.0; n];
        for t in &split.field_terms {
            field[t.string.support()[0]] += t.coeff;
        }
        Self { n_sites: n, even: bond_hamiltonians(n, &split.even_bonds), odd: bond_hamiltonians(n, &split.odd_bonds), field }
    }

    fn bond_layer(group: &[((usize, usize), DenseMatrix)], t: f64) -> Result<Vec<([usize; 2], Vec<C64>)>> {
        group
            .iter()
            .map(|((a, b), h)| {
                let u = expm_hermitian(h, t)?;
                Ok(([*a, *b], u.transpose().iter().cloned().collect()))
            })
            .collect()
    }

    fn apply_layer(state: &mut StateVector, layer: &[([usize; 2], Vec<C64>)]) {
        for (w, m) in layer {
            state.apply_gate(w, m);
        }
    }

    fn apply_field(&self, state: &mut StateVector, t: f64) {
        if self.field.iter().all(|&c| c == 0.0) {
            return;
        }
        let n = self.n_sites;
        let shifts: Vec<(usize, f64)> = self.field.iter().enumerate().map(|(i, &c)| (site_bit(n, i), c)).collect();
        state.apply_diagonal(|x| {
            let e: f64 = shifts.iter().map(|&(b, c)| if (x >> b) & 1 == 1 { -c } else { c }).sum();
            C64::from_polar(1.0, -t * e)
        });
    }

    /// `[S2(t/r)]^r` applied in place, with adjacent even half-steps fused.
    pub fn evolve(&self, state: &mut StateVector, t: f64, reps: usize) -> Result<()> {
        if state.n_sites() != self.n_sites {
            return Err(Error::Dimension(format!("{}-site propagator on {} sites", self.n_sites, state.n_sites())));
        }
        if reps == 0 {
            return Err(Error::InvalidArgument("at least one Trotter repetition".into()));
        }
        if t == 0.0 {
            return Ok(());
        }
        let dt = t / reps as f64;
        let even_half = Self::bond_layer(&self.even, dt / 2.0)?;
        let even_full = Self::bond_layer(&self.even, dt)?;
        let odd_half = Self::bond_layer(&self.odd, dt / 2.0)?;
        Self::apply_layer(state, &even_half);
        for k in 0..reps {
            Self::apply_layer(state, &odd_half);
            self.apply_field(state, dt);
            Self::apply_layer(state, &odd_half);
            Self::apply_layer(state, if k + 1 == reps { &even_half } else { &even_full });
        }
        Ok(())
    }
}

/// One filter step with both propagators replaced by `[S2(±α/r)]^r`.
pub fn trotter_filter_apply(
    state: &StateVector,
    prop: &TrotterPropagator,
    dtau: f64,
    reps: usize,
    schedule: &Schedule,
) -> Result<FilterOutcome> {
    let alpha = schedule.s * dtau;
    let run = |t: f64| -> Result<Vec<C64>> {
        let mut s = state.clone();
        prop.evolve(&mut s, t, reps)?;
        let ph = C64::from_polar(1.0, t * schedule.e_shift);
        Ok(s.into_amplitudes().into_iter().map(|x| x * ph).collect())
    };
    combine(state.n_sites(), schedule.m0, run(alpha)?, run(-alpha)?)
}

/// How a Trotterized one-step state is compared with the exact one.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMetric {
    /// `1 − |⟨exact|trotter⟩|²`, in the same units as the infidelity target.
    #[default]
    Infidelity,
    /// `‖exact − trotter‖`.
    Distance,
}

impl CalibrationMetric {
    pub fn measure(self, exact: &StateVector, trotter: &StateVector) -> f64 {
        match self {
            CalibrationMetric::Infidelity => (1.0 - exact.fidelity(trotter)).max(0.0),
            CalibrationMetric::Distance => exact.distance(trotter),
        }
    }
}

impl std::fmt::Display for CalibrationMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalibrationMetric::Infidelity => "infidelity",
            CalibrationMetric::Distance => "distance",
        })
    }
}

impl std::str::FromStr for CalibrationMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "infidelity" => Ok(CalibrationMetric::Infidelity),
            "distance" => Ok(CalibrationMetric::Distance),
            _ => Err(Error::InvalidArgument(format!("unknown calibration metric `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub reps: usize,
    /// Mismatch between the normalized exact and Trotter one-step states.
    pub error: f64,
    /// The budget was still missed at [`MAX_REPS`].
    pub cap_hit: bool,
}

/// Smallest repetition count whose normalized one-step state lies within
/// `budget` of `exact` under `metric`, by doubling then bisection.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_reps(
    state: &StateVector,
    exact: &StateVector,
    prop: &TrotterPropagator,
    dtau: f64,
    budget: f64,
    schedule: &Schedule,
    metric: CalibrationMetric,
) -> Result<Calibration> {
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument(format!("Trotter budget {budget} must be positive")));
    }
    let err = |r: usize| -> Result<f64> { Ok(metric.measure(exact, &trotter_filter_apply(state, prop, dtau, r, schedule)?.state)) };
    if dtau == 0.0 {
        return Ok(Calibration { reps: 1, error: err(1)?, cap_hit: false });
    }
    let mut hi = 1;
    let mut hi_err = err(1)?;
    while hi_err > budget {
        if hi >= MAX_REPS {
            return Ok(Calibration { reps: MAX_REPS, error: hi_err, cap_hit: true });
        }
        hi = (2 * hi).min(MAX_REPS);
        hi_err = err(hi)?;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 && lo >= 1 {
        let mid = (lo + hi) / 2;
        let e = err(mid)?;
        if e <= budget {
            hi = mid;
            hi_err = e;
        } else {
            lo = mid;
        }
    }
    Ok(Calibration { reps: hi, error: hi_err, cap_hit: false })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Krylov propagators; depth is reported for one repetition.
    ExactFilter,
    Trotter,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::ExactFilter => "exact-filter",
            Backend::Trotter => "trotter",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-filter" | "exact" => Ok(Backend::ExactFilter),
            "trotter" => Ok(Backend::Trotter),
            _ => Err(Error::InvalidArgument(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub dtau: f64,
    pub reps: usize,
    pub cap_hit: bool,
    pub p: f64,
    pub p_cum: f64,
    pub infidelity: f64,
    pub delta_e: f64,
    pub depth: usize,
    pub depth_cum: usize,
    pub rzz: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initializer: String,
    pub backend: Backend,
    /// `records[0]` is the initial state.
    pub records: Vec<StepRecord>,
    /// Trotter calibration fell back to the cap on some step.
    pub any_cap_hit: bool,
}

/// Everything a trajectory needs from the Hamiltonian.
#[derive(Clone, Debug)]
pub struct PiteContext {
    pub hamiltonian: PauliSum,
    pub split: TermSplit,
    pub propagator: TrotterPropagator,
    pub krylov: KrylovOptions,
    pub calibration: CalibrationMetric,
}

impl PiteContext {
    pub fn new(spec: &HamiltonianSpec) -> Result<Self> {
        let split = split_terms(spec)?;
        Ok(Self {
            hamiltonian: build_hamiltonian(spec)?,
            propagator: TrotterPropagator::new(&split),
            split,
            krylov: KrylovOptions::default(),
            calibration: CalibrationMetric::default(),
        })
    }
}

/// Stop once the energy error is this far below chemical accuracy.
pub const STOP_MARGIN: f64 = 10.0;

/// Run the schedule from `init`. Depth per step is that of the compiled
/// PITE step circuit with the step's repetition count.
pub fn run_trajectory(
    init: &StateVector,
    initializer: &str,
    schedule: &Schedule,
    backend: Backend,
    reference: &ReferenceSpectrum,
    ctx: &PiteContext,
) -> Result<Trajectory> {
    let mut state = init.clone();
    state.normalize()?;
    let measure = |s: &StateVector| (1.0 - reference.ground_fidelity(s), s.expectation(&ctx.hamiltonian) - reference.e0);
    let (if0, de0) = measure(&state);
    let mut records = vec![StepRecord {
        k: 0,
        dtau: 0.0,
        reps: 0,
        cap_hit: false,
        p: 1.0,
        p_cum: 1.0,
        infidelity: if0,
        delta_e: de0,
        depth: 0,
        depth_cum: 0,
        rzz: 0,
    }];
    let mut costs: HashMap<usize, CircuitCost> = HashMap::new();
    let mut any_cap_hit = false;
    let stop = CHEMICAL_ACCURACY / STOP_MARGIN;
    if de0 < stop {
        return Ok(Trajectory { initializer: initializer.into(), backend, records, any_cap_hit });
    }
    for (k, (&dtau, &budget)) in schedule.dtaus.iter().zip(&schedule.budgets).enumerate() {
        let exact = exact_filter_apply(&state, &ctx.hamiltonian, dtau, schedule, &ctx.krylov)?;
        let (outcome, reps, cap_hit) = match backend {
            Backend::ExactFilter => (exact, 1, false),
            Backend::Trotter => {
                let cal = calibrate_reps(&state, &exact.state, &ctx.propagator, dtau, budget, schedule, ctx.calibration)?;
                (trotter_filter_apply(&state, &ctx.propagator, dtau, cal.reps, schedule)?, cal.reps, cal.cap_hit)
            }
        };
        any_cap_hit |= cap_hit;
        // gate structure depends only on the repetition count
        let c = match costs.get(&reps) {
            Some(c) => *c,
            None => {
                let c = cost(&build_pite_step(&ctx.split, &schedule.step_params(dtau)?, reps)?);
                costs.insert(reps, c);
                c
            }
        };
        state = outcome.state;
        let (inf, de) = measure(&state);
        let prev = records.last().expect("initial record");
        let rec = StepRecord {
            k: k + 1,
            dtau,
            reps,
            cap_hit,
            p: outcome.probability,
            p_cum: prev.p_cum * outcome.probability,
            infidelity: inf,
            delta_e: de,
            depth: c.depth,
            depth_cum: prev.depth_cum + c.depth,
            rzz: c.rzz,
        };
        records.push(rec);
        if de < stop {
            break;
        }
    }
    Ok(Trajectory { initializer: initializer.into(), backend, records, any_cap_hit })
}

/// Resources at the energy-error target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Crossing {
    Reached {
        /// Fractional step index of the crossing.
        k: f64,
        d_raw: f64,
        d_post: f64,
        p_cum: f64,
    },
    NotReached {
        final_delta_e: f64,
        d_raw: f64,
        p_cum: f64,
    },
}

impl Crossing {
    pub fn reached(&self) -> bool {
        matches!(self, Crossing::Reached { .. })
    }

    pub fn p_cum(&self) -> f64 {
        match *self {
            Crossing::Reached { p_cum, .. } | Crossing::NotReached { p_cum, .. } => p_cum,
        }
    }

    pub fn d_raw(&self) -> f64 {
        match *self {
            Crossing::Reached { d_raw, .. } | Crossing::NotReached { d_raw, .. } => d_raw,
        }
    }
}

/// Locate where `ΔE` first drops to `target`, interpolating `log10 ΔE`
/// linearly in cumulative depth and `P_cum` linearly alongside.
pub fn crossing_metrics(traj: &Trajectory, target: f64) -> Crossing {
    let log = |x: f64| x.max(1e-300).log10();
    let recs = &traj.records;
    for (i, r) in recs.iter().enumerate() {
        if r.delta_e > target {
            continue;
        }
        if i == 0 || r.delta_e == target {
            let d = r.depth_cum as f64;
            return Crossing::Reached { k: r.k as f64, d_raw: d, d_post: d / r.p_cum, p_cum: r.p_cum };
        }
        let a = &recs[i - 1];
        let frac = (log(a.delta_e) - log(target)) / (log(a.delta_e) - log(r.delta_e));
        let d_raw = a.depth_cum as f64 + frac * (r.depth_cum as f64 - a.depth_cum as f64);
        let p_cum = a.p_cum + frac * (r.p_cum - a.p_cum);
        return Crossing::Reached { k: a.k as f64 + frac, d_raw, d_post: d_raw / p_cum, p_cum };
    }
    let last = recs.last().expect("trajectory has an initial record");
    Crossing::NotReached { final_delta_e: last.delta_e, d_raw: last.depth_cum as f64, p_cum: last.p_cum }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_pite_step;
    use crate::hamiltonian::{neel_state, reference_spectrum};
    use crate::numerics::{dense_eig_hermitian, LanczosOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule_for(e_shift: f64, gap: f64, w0: f64) -> Schedule {
        make_schedule(&ScheduleInputs::new(e_shift, gap, w0)).unwrap()
    }

    #[test]
    fn schedule_constants() {
        assert!((s_of_m0(0.999) - 22.34).abs() < 0.01);
        assert_eq!(k_safe_raw(0.9, 0.5e-6).ceil() as usize, 27);
        let sch = schedule_for(-1.0, 1.0, 0.9);
        assert_eq!(sch.k_safe, 27);
        assert!((sch.dtau_max - 0.62 * std::f64::consts::PI / 22.3439).abs() < 1e-4);
        assert!((sch.dtau_max - 0.08717).abs() < 1e-5);
        assert!((sch.budgets.iter().sum::<f64>() - sch.eps_trot).abs() < 1e-12 * sch.eps_trot.max(1.0));
        assert_eq!(sch.dtaus.len(), 27);
        assert!((sch.dtaus[0] - sch.dtau_max / 50.0).abs() < 1e-15);
        assert!((sch.dtaus[26] - sch.dtau_max).abs() < 1e-15);
        assert!(sch.dtaus.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn schedule_guards() {
        assert!(matches!(make_schedule(&ScheduleInputs::new(0.0, 1e-9, 0.5)), Err(Error::Schedule(_))));
        assert!(make_schedule(&ScheduleInputs::new(0.0, 0.0, 0.5)).is_err());
        assert!(make_schedule(&ScheduleInputs::new(0.0, 1.0, 1.1)).is_err());
        assert!(make_schedule(&ScheduleInputs::new(0.0, 1.0, 0.0)).is_err());
        assert_eq!(make_schedule(&ScheduleInputs::new(0.0, 1.0, 1.0 + 1e-14)).unwrap().k_safe, 1);
        let sch = schedule_for(0.0, 1.0, 1.0 - 1e-9);
        assert!(sch.k_safe_clamped);
        assert_eq!(sch.k_safe, 1);
        assert_eq!(sch.dtaus, vec![sch.dtau_max]);
    }

    #[test]
    fn filter_is_shifted_cosine() {
        for &(d, t) in &[(0.0, 0.1), (0.3, 0.05), (1.7, 0.08)] {
            let s = s_of_m0(0.999);
            let want = (d * s * t + 0.999f64.acos()).cos();
            assert!((filter_amplitude(0.999, d, t) - want).abs() < 1e-12);
        }
        let s = s_of_m0(0.999);
        let x = 0.62 * std::f64::consts::PI;
        assert!((filter_amplitude(0.999, 1.0, x / s) - 0.999 * (x.cos() - x.sin() / s)).abs() < 1e-15);
    }

    struct Dense4 {
        ctx: PiteContext,
        vals: Vec<f64>,
        vecs: DenseMatrix,
    }

    fn dense(n: usize, hz: f64) -> Dense4 {
        let ctx = PiteContext::new(&HamiltonianSpec::heisenberg(n, hz).unwrap()).unwrap();
        let (vals, vecs) = dense_eig_hermitian(&ctx.hamiltonian.to_dense()).unwrap();
        Dense4 { ctx, vals, vecs }
    }

    fn components(d: &Dense4, s: &StateVector) -> Vec<C64> {
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        (d.vecs.adjoint() * v).iter().cloned().collect()
    }

    #[test]
    fn exact_filter_spectral_law() {
        let d = dense(4, 0.5);
        let sch = schedule_for(d.vals[0], d.vals[1] - d.vals[0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let psi = StateVector::random(4, &mut rng).unwrap();
        let dtau = 0.07;
        let out = exact_filter_apply(&psi, &d.ctx.hamiltonian, dtau, &sch, &d.ctx.krylov).unwrap();
        let c_in = components(&d, &psi);
        let c_out = components(&d, &out.state);
        let root_p = out.probability.sqrt();
        let mut p = 0.0;
        for i in 0..16 {
            let f = filter_amplitude(0.999, d.vals[i] - d.vals[0], dtau);
            assert!((c_out[i] * root_p - c_in[i] * f).norm() < 1e-10);
            p += c_in[i].norm_sqr() * f * f;
        }
        assert!((out.probability - p).abs() < 1e-10);
    }

    #[test]
    fn ground_state_success_is_m0_squared() {
        let d = dense(4, 0.0);
        let sch = schedule_for(d.vals[0], d.vals[1] - d.vals[0], 0.5);
        let g: Vec<C64> = d.vecs.column(0).iter().cloned().collect();
        let psi = StateVector::from_amplitudes(4, g).unwrap();
        let out = exact_filter_apply(&psi, &d.ctx.hamiltonian, sch.dtau_max, &sch, &d.ctx.krylov).unwrap();
        assert!((out.probability - 0.998001).abs() < 1e-9);
        assert!(1.0 - out.state.fidelity(&psi) < 1e-12);
    }

    #[test]
    fn trotter_converges_to_exact() {
        let d = dense(4, 0.5);
        let sch = schedule_for(d.vals[0], d.vals[1] - d.vals[0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let psi = StateVector::random(4, &mut rng).unwrap();
        let exact = exact_filter_apply(&psi, &d.ctx.hamiltonian, sch.dtau_max, &sch, &d.ctx.krylov).unwrap();
        let trot = trotter_filter_apply(&psi, &d.ctx.propagator, sch.dtau_max, 8192, &sch).unwrap();
        assert!(trot.state.distance(&exact.state) < 1e-8);
        assert!((trot.probability - exact.probability).abs() < 1e-8);
    }

    #[test]
    fn single_bond_is_exact_for_any_reps() {
        let d = dense(2, 0.0);
        let sch = schedule_for(d.vals[0], d.vals[1] - d.vals[0], 0.5);
        let psi = StateVector::basis(2, 1).unwrap();
        let exact = exact_filter_apply(&psi, &d.ctx.hamiltonian, 0.05, &sch, &d.ctx.krylov).unwrap();
        let trot = trotter_filter_apply(&psi, &d.ctx.propagator, 0.05, 1, &sch).unwrap();
        assert!(trot.state.distance(&exact.state) < 1e-12);
    }

    #[test]
    fn trotter_error_is_second_order() {
        let ctx = PiteContext::new(&HamiltonianSpec::heisenberg(6, 0.5).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let psi = StateVector::random(6, &mut rng).unwrap();
        let t = 1.0;
        let exact = krylov_expmv(&ctx.hamiltonian, t, psi.amplitudes(), &ctx.krylov).unwrap();
        let exact = StateVector::from_amplitudes(6, exact).unwrap();
        let rs = [4.0, 8.0, 16.0, 32.0];
        let errs: Vec<f64> = rs
            .iter()
            .map(|&r| {
                let mut s = psi.clone();
                ctx.propagator.evolve(&mut s, t, r as usize).unwrap();
                s.distance(&exact)
            })
            .collect();
        let slope = crate::fits::loglog_slope(&rs, &errs).unwrap();
        assert!((slope + 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn propagator_matches_slice_circuit() {
        let spec = HamiltonianSpec::heisenberg(5, 0.6).unwrap();
        let ctx = PiteContext::new(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let psi = StateVector::random(5, &mut rng).unwrap();
        let mut a = psi.clone();
        ctx.propagator.evolve(&mut a, 0.9, 3).unwrap();
        let mut b = psi.clone();
        for _ in 0..3 {
            crate::circuit::build_trotter_slice(&ctx.split, 0.3).apply(&mut b).unwrap();
        }
        assert!(a.distance(&b) < 1e-12);
    }

    #[test]
    fn circuit_branch_equals_trotter_filter() {
        let spec = HamiltonianSpec::heisenberg(2, 0.0).unwrap();
        let ctx = PiteContext::new(&spec).unwrap();
        let sch = schedule_for(-0.75, 1.0, 0.5);
        let psi = StateVector::from_amplitudes(2, vec![C64::new(0.1, 0.0), C64::new(0.7, 0.2), C64::new(-0.5, 0.1), C64::new(0.3, -0.3)]).unwrap();
        let mut psi = psi;
        psi.normalize().unwrap();
        let c = build_pite_step(&ctx.split, &sch.step_params(0.05).unwrap(), 4).unwrap();
        let mut full = StateVector::zero_state(1).unwrap().kron(&psi).unwrap();
        c.apply(&mut full).unwrap();
        let branch = StateVector::from_amplitudes(2, full.amplitudes()[..4].to_vec()).unwrap();
        let t = trotter_filter_apply(&psi, &ctx.propagator, 0.05, 4, &sch).unwrap();
        let overlap = branch.inner(&t.state).norm_sqr() / branch.norm_sqr();
        assert!((1.0 - overlap).abs() < 1e-10);
        assert!((branch.norm_sqr() - t.probability).abs() < 1e-10);
    }

    #[test]
    fn calibration_certificate() {
        let d = dense(6, 0.5);
        let sch = schedule_for(d.vals[0], d.vals[1] - d.vals[0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let psi = StateVector::random(6, &mut rng).unwrap();
        let dtau = sch.dtau_max;
        let exact = exact_filter_apply(&psi, &d.ctx.hamiltonian, dtau, &sch, &d.ctx.krylov).unwrap().state;
        let cal = calibrate_reps(&psi, &exact, &d.ctx.propagator, dtau, 1e-5, &sch, CalibrationMetric::Distance).unwrap();
        let err = |r| trotter_filter_apply(&psi, &d.ctx.propagator, dtau, r, &sch).unwrap().state.distance(&exact);
        assert!(!cal.cap_hit);
        assert!(err(cal.reps) <= 1e-5);
        assert!(cal.reps > 1 && err(cal.reps - 1) > 1e-5);

        let capped = calibrate_reps(&psi, &exact, &d.ctx.propagator, dtau, 1e-12, &sch, CalibrationMetric::Distance).unwrap();
        assert!(capped.cap_hit && capped.reps == MAX_REPS && capped.error > 1e-12);

        let inf = calibrate_reps(&psi, &exact, &d.ctx.propagator, dtau, 1e-10, &sch, CalibrationMetric::Infidelity).unwrap();
        let inf_err = |r| 1.0 - trotter_filter_apply(&psi, &d.ctx.propagator, dtau, r, &sch).unwrap().state.fidelity(&exact);
        assert!(!inf.cap_hit && inf_err(inf.reps) <= 1e-10 && inf_err(inf.reps - 1) > 1e-10);

        let one = calibrate_reps(&psi, &exact, &d.ctx.propagator, dtau, 1.0, &sch, CalibrationMetric::Distance).unwrap();
        assert_eq!(one.reps, 1);
        let zero = exact_filter_apply(&psi, &d.ctx.hamiltonian, 0.0, &sch, &d.ctx.krylov).unwrap().state;
        assert_eq!(calibrate_reps(&psi, &zero, &d.ctx.propagator, 0.0, 1e-12, &sch, CalibrationMetric::Distance).unwrap().reps, 1);
    }

    fn reference(n: usize, hz: f64) -> ReferenceSpectrum {
        reference_spectrum(&HamiltonianSpec::heisenberg(n, hz).unwrap(), &LanczosOptions::default()).unwrap()
    }

    #[test]
    fn ground_state_is_a_fixed_point() {
        let r = reference(6, 0.5);
        let ctx = PiteContext::new(&HamiltonianSpec::heisenberg(6, 0.5).unwrap()).unwrap();
        let mut sch = schedule_for(r.e0, r.gap, 0.5);
        sch.dtaus.truncate(5);
        sch.budgets.truncate(5);
        let mut ground = r.ground.clone();
        ground.normalize().unwrap();
        let traj = run_trajectory(&ground, "exact", &sch, Backend::ExactFilter, &r, &ctx).unwrap();
        // the ground state starts below the stopping threshold
        assert_eq!(traj.records.len(), 1);
        let mut state = ground.clone();
        let mut p_cum = 1.0;
        for k in 0..5 {
            let out = exact_filter_apply(&state, &ctx.hamiltonian, sch.dtaus[k], &sch, &ctx.krylov).unwrap();
            p_cum *= out.probability;
            state = out.state;
            assert!(1.0 - r.ground_fidelity(&state) <= 1e-10);
            assert!((p_cum - 0.999f64.powi(2 * (k as i32 + 1))).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_backend_trajectory_monotone() {
        let r = reference(6, 0.5);
        let ctx = PiteContext::new(&HamiltonianSpec::heisenberg(6, 0.5).unwrap()).unwrap();
        let neel = neel_state(6).unwrap();
        let w0 = r.ground_fidelity(&neel);
        let sch = schedule_for(r.e0, r.gap, w0);
        let traj = run_trajectory(&neel, "neel", &sch, Backend::ExactFilter, &r, &ctx).unwrap();
        assert!(traj.records.len() > 2);
        for w in traj.records.windows(2) {
            assert!(w[1].delta_e <= w[0].delta_e + 1e-12);
            assert!(w[1].p_cum <= w[0].p_cum && w[1].p_cum > 0.0);
            assert!(w[1].depth_cum >= w[0].depth_cum);
        }
        // excited weight against the cumulative filter factor
        let d = dense(6, 0.5);
        let c0 = components(&d, &neel);
        let last = traj.records.len() - 1;
        let mut excited = 0.0;
        let mut ground = c0[0].norm_sqr();
        for (i, c) in c0.iter().enumerate() {
            let delta = d.vals[i] - d.vals[0];
            let factor: f64 = sch.dtaus[..last].iter().map(|&t| (filter_amplitude(sch.m0, delta, t) / sch.m0).powi(2)).product();
            if delta > 1e-8 {
                excited += c.norm_sqr() * factor;
            } else if i > 0 {
                ground += c.norm_sqr();
            }
        }
        let predicted = excited / (excited + ground);
        let measured = traj.records[last].infidelity;
        assert!(measured <= 2.0 * predicted + 1e-12 && measured >= predicted / 2.0, "{measured} vs {predicted}");
    }

    #[test]
    fn trotter_trajectory_calibrates_each_step() {
        let r = reference(4, 0.5);
        let ctx = PiteContext::new(&HamiltonianSpec::heisenberg(4, 0.5).unwrap()).unwrap();
        let neel = neel_state(4).unwrap();
        let sch = schedule_for(r.e0, r.gap, r.ground_fidelity(&neel));
        let traj = run_trajectory(&neel, "neel", &sch, Backend::Trotter, &r, &ctx).unwrap();
        assert!(traj.records[1..].iter().all(|s| s.reps >= 1 && s.depth > 0));
        assert!(traj.records.last().unwrap().delta_e < CHEMICAL_ACCURACY);
    }

    fn synthetic(des: &[f64], depth: usize) -> Trajectory {
        Trajectory {
            initializer: "test".into(),
            backend: Backend::ExactFilter,
            any_cap_hit: false,
            records: des
                .iter()
                .enumerate()
                .map(|(k, &de)| StepRecord {
                    k,
                    dtau: 0.0,
                    reps: 1,
                    cap_hit: false,
                    p: 0.9,
                    p_cum: 0.9f64.powi(k as i32),
                    infidelity: 0.0,
                    delta_e: de,
                    depth,
                    depth_cum: k * depth,
                    rzz: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn crossing_examples() {
        let traj = synthetic(&[1.0, 1e-1, 1e-2, 1e-3, 1e-4], 100);
        let Crossing::Reached { k, d_raw, d_post, p_cum } = crossing_metrics(&traj, 10f64.powf(-2.5)) else { panic!() };
        assert!((d_raw - 250.0).abs() < 1e-9);
        assert!((k - 2.5).abs() < 1e-12);
        assert!((p_cum - (0.81 + 0.5 * (0.729 - 0.81))).abs() < 1e-12);
        assert!((d_post - d_raw / p_cum).abs() < 1e-9);

        let Crossing::Reached { k, d_raw, .. } = crossing_metrics(&traj, 1e-2) else { panic!() };
        assert_eq!(k, 2.0);
        assert_eq!(d_raw, 200.0);

        let c = crossing_metrics(&traj, 0.5);
        assert!(c.reached() && c.d_raw() <= 100.0);

        let c = crossing_metrics(&traj, 1e-6);
        assert!(matches!(c, Crossing::NotReached { final_delta_e, .. } if final_delta_e == 1e-4));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn success_probability_in_unit_interval(seed in any::<u64>(), dtau in 0.0f64..0.2) {
            let d = dense(4, 0.3);
            let sch = schedule_for(d.vals[0], d.vals[1] - d.vals[0], 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = StateVector::random(4, &mut rng).unwrap();
            let out = exact_filter_apply(&psi, &d.ctx.hamiltonian, dtau, &sch, &d.ctx.krylov).unwrap();
            prop_assert!(out.probability > 0.0 && out.probability <= 1.0 + 1e-12);
            prop_assert!((out.state.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn budgets_sum_to_trotter_share(w0 in 0.01f64..0.99, gap in 0.01f64..3.0, eps in 1e-8f64..1e-2) {
            let mut inp = ScheduleInputs::new(-2.0, gap, w0);
            inp.epsilon = eps;
            let sch = make_schedule(&inp).unwrap();
            prop_assert!((sch.budgets.iter().sum::<f64>() - sch.eps_trot).abs() <= 1e-12 * sch.eps_trot);
            prop_assert!(sch.k_safe >= 1);
            prop_assert!(sch.dtaus.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
