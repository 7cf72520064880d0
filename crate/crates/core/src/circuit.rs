//! Gate-level circuit IR, builders for Trotter slices and PITE steps, and
//! the lowering/merging passes used for depth accounting.
//!
//! Conventions: `RZZ(θ) = exp(−iθ/2 Z⊗Z)`, `RZ(φ) = exp(−iφ/2 Z)`,
//! `RX(φ) = exp(−iφ/2 X)`. `CtrlRzz(φ)` on wires `[c, i, j]` applies
//! `RZZ_ij(φ)` when the control is `|1⟩`; `CtrlRz(φ)` on `[c, t]` likewise.
//! Depth is the longest path through the gate dependency DAG with unit cost
//! per gate, measured after [`lower`] and [`merge_1q`] ("convention-D1").

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::encoder::MpdLayer;
use crate::hamiltonian::TermSplit;
use crate::numerics::{DenseMatrix, Pauli, PauliTerm};
use crate::state::site_bit;
use crate::{Error, Result, StateVector, C64};

/// Version tag of the text dump.
pub const TEXT_FORMAT: &str = "gsprep-circuit v1";

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    Rzz(f64),
    Rz(f64),
    Rx(f64),
    H,
    S,
    Sdg,
    U1q(Vec<C64>),
    U2q(Vec<C64>),
    CtrlRzz(f64),
    CtrlRz(f64),
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Rz(_) | GateKind::Rx(_) | GateKind::H | GateKind::S | GateKind::Sdg | GateKind::U1q(_) => 1,
            GateKind::Rzz(_) | GateKind::U2q(_) | GateKind::CtrlRz(_) => 2,
            GateKind::CtrlRzz(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Rzz(_) => "rzz",
            GateKind::Rz(_) => "rz",
            GateKind::Rx(_) => "rx",
            GateKind::H => "h",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::U1q(_) => "u1q",
            GateKind::U2q(_) => "u2q",
            GateKind::CtrlRzz(_) => "crzz",
            GateKind::CtrlRz(_) => "crz",
        }
    }

    fn angle(&self) -> Option<f64> {
        match *self {
            GateKind::Rzz(a) | GateKind::Rz(a) | GateKind::Rx(a) | GateKind::CtrlRzz(a) | GateKind::CtrlRz(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub wires: Vec<usize>,
}

fn rz_matrix(phi: f64) -> [C64; 4] {
    [C64::from_polar(1.0, -phi / 2.0), ZERO, ZERO, C64::from_polar(1.0, phi / 2.0)]
}

fn rx_matrix(phi: f64) -> [C64; 4] {
    let (c, s) = ((phi / 2.0).cos(), (phi / 2.0).sin());
    [C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)]
}

/// Ancilla basis gate `W = (1/√2)[[1, −i], [1, i]]`.
pub fn w_matrix() -> [C64; 4] {
    let h = FRAC_1_SQRT_2;
    [C64::new(h, 0.0), C64::new(0.0, -h), C64::new(h, 0.0), C64::new(0.0, h)]
}

fn adjoint2(m: &[C64]) -> Vec<C64> {
    vec![m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()]
}

fn mul2(a: &[C64], b: &[C64]) -> [C64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

impl Gate {
    pub fn new(kind: GateKind, wires: Vec<usize>) -> Self {
        Self { kind, wires }
    }

    pub fn rzz(a: usize, b: usize, theta: f64) -> Self {
        Self::new(GateKind::Rzz(theta), vec![a, b])
    }

    pub fn rz(w: usize, phi: f64) -> Self {
        Self::new(GateKind::Rz(phi), vec![w])
    }

    pub fn rx(w: usize, phi: f64) -> Self {
        Self::new(GateKind::Rx(phi), vec![w])
    }

    pub fn h(w: usize) -> Self {
        Self::new(GateKind::H, vec![w])
    }

    pub fn u1q(w: usize, m: &[C64]) -> Self {
        Self::new(GateKind::U1q(m.to_vec()), vec![w])
    }

    /// Whether the gate is diagonal in the computational basis.
    fn diagonal(&self) -> bool {
        matches!(self.kind, GateKind::Rzz(_) | GateKind::Rz(_) | GateKind::CtrlRzz(_) | GateKind::CtrlRz(_))
    }

    /// Phase applied to a computational basis state with the given local
    /// bits, for diagonal gates.
    fn diagonal_phase(&self, bits: &[bool]) -> C64 {
        let z = |b: bool| if b { -1.0 } else { 1.0 };
        match self.kind {
            GateKind::Rz(p) => C64::from_polar(1.0, -p / 2.0 * z(bits[0])),
            GateKind::Rzz(t) => C64::from_polar(1.0, -t / 2.0 * z(bits[0]) * z(bits[1])),
            GateKind::CtrlRz(p) if bits[0] => C64::from_polar(1.0, -p / 2.0 * z(bits[1])),
            GateKind::CtrlRzz(t) if bits[0] => C64::from_polar(1.0, -t / 2.0 * z(bits[1]) * z(bits[2])),
            _ => ONE,
        }
    }

    /// Row-major matrix on `wires`, `wires[0]` most significant.
    pub fn matrix(&self) -> Vec<C64> {
        let h = FRAC_1_SQRT_2;
        match &self.kind {
            GateKind::Rx(p) => rx_matrix(*p).to_vec(),
            GateKind::H => vec![C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)],
            GateKind::S => vec![ONE, ZERO, ZERO, I],
            GateKind::Sdg => vec![ONE, ZERO, ZERO, -I],
            GateKind::U1q(m) | GateKind::U2q(m) => m.clone(),
            _ => {
                let k = self.wires.len();
                let d = 1usize << k;
                let mut m = vec![ZERO; d * d];
                for x in 0..d {
                    let bits: Vec<bool> = (0..k).map(|q| (x >> (k - 1 - q)) & 1 == 1).collect();
                    m[x * d + x] = self.diagonal_phase(&bits);
                }
                m
            }
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.wires.len() != self.kind.arity() {
            return Err(Error::InvalidArgument(format!("{} expects {} wires", self.kind.name(), self.kind.arity())));
        }
        if self.wires.iter().any(|&w| w >= n_qubits) {
            return Err(Error::OutOfRange(format!("{} wires {:?} on {n_qubits} qubits", self.kind.name(), self.wires)));
        }
        for (i, w) in self.wires.iter().enumerate() {
            if self.wires[..i].contains(w) {
                return Err(Error::InvalidArgument(format!("repeated wire {w}")));
            }
        }
        if self.kind.angle().is_some_and(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite gate angle".into()));
        }
        let dim = 1usize << self.wires.len();
        if let GateKind::U1q(m) | GateKind::U2q(m) = &self.kind {
            if m.len() != dim * dim {
                return Err(Error::Dimension(format!("{} matrix has {} entries", self.kind.name(), m.len())));
            }
        }
        Ok(())
    }
}

/// Ordered gate list with a global phase `e^{i·global_phase}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub global_phase: f64,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, gates: Vec::new(), global_phase: 0.0 }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Self { n_qubits, gates, global_phase: 0.0 })
    }

    /// Builders only push gates they construct; wires are checked in debug builds.
    fn push(&mut self, g: Gate) {
        debug_assert!(g.validate(self.n_qubits).is_ok(), "{g:?}");
        self.gates.push(g);
    }

    pub fn extend(&mut self, other: &Circuit) {
        debug_assert_eq!(self.n_qubits, other.n_qubits);
        self.gates.extend(other.gates.iter().cloned());
        self.global_phase += other.global_phase;
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.gates.iter().try_for_each(|g| g.validate(self.n_qubits))
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        if state.n_sites() != self.n_qubits {
            return Err(Error::Dimension(format!("{}-qubit circuit on {} sites", self.n_qubits, state.n_sites())));
        }
        let n = self.n_qubits;
        for g in &self.gates {
            if g.diagonal() {
                let shifts: Vec<usize> = g.wires.iter().map(|&w| site_bit(n, w)).collect();
                state.apply_diagonal(|x| {
                    let mut bits = [false; 3];
                    for (b, s) in bits.iter_mut().zip(&shifts) {
                        *b = (x >> s) & 1 == 1;
                    }
                    g.diagonal_phase(&bits[..shifts.len()])
                });
            } else {
                state.apply_gate(&g.wires, &g.matrix());
            }
        }
        if self.global_phase != 0.0 {
            state.scale(C64::from_polar(1.0, self.global_phase));
        }
        Ok(())
    }

    /// Dense unitary, for small oracles.
    pub fn unitary(&self) -> Result<DenseMatrix> {
        if self.n_qubits > 10 {
            return Err(Error::TooManySites { sites: self.n_qubits, limit: 10 });
        }
        let d = 1usize << self.n_qubits;
        let mut u = DenseMatrix::zeros(d, d);
        for c in 0..d {
            let mut s = StateVector::basis(self.n_qubits, c)?;
            self.apply(&mut s)?;
            for (r, a) in s.amplitudes().iter().enumerate() {
                u[(r, c)] = *a;
            }
        }
        Ok(u)
    }

    /// One gate per line: name, wires, then the angle if any.
    pub fn to_text(&self) -> String {
        let mut out = format!("{TEXT_FORMAT}\nqubits {}\nglobal_phase {}\n", self.n_qubits, self.global_phase);
        for g in &self.gates {
            let wires: Vec<String> = g.wires.iter().map(|w| w.to_string()).collect();
            let _ = write!(out, "{} {}", g.kind.name(), wires.join(","));
            if let Some(a) = g.kind.angle() {
                let _ = write!(out, " {a}");
            }
            out.push('\n');
        }
        out
    }
}

/// Native sequence for a controlled rotation, and the global phase it
/// introduces. A zero angle lowers to nothing.
///
/// `CtrlRz(φ)[c,t] = RZ_t(φ/2)·RZZ_ct(−φ/2)`.
/// `CtrlRzz(φ)[c,i,j] = RZZ_ij(φ/2)·exp(iφ/4 Z_c Z_i Z_j)`; the three-body
/// rotation is `RZZ_cj(−φ/2)` conjugated by `CNOT_{i→j}`, and each CNOT is
/// `H_j·CZ·H_j` with `CZ = e^{−iπ/4}·RZ_i(−π/2)·RZ_j(−π/2)·RZZ_ij(π/2)`.
pub fn lower_controlled(g: &Gate) -> (Vec<Gate>, f64) {
    match g.kind {
        GateKind::CtrlRz(p) if p != 0.0 => {
            let (c, t) = (g.wires[0], g.wires[1]);
            (vec![Gate::rz(t, p / 2.0), Gate::rzz(c, t, -p / 2.0)], 0.0)
        }
        GateKind::CtrlRzz(p) if p != 0.0 => {
            let (c, i, j) = (g.wires[0], g.wires[1], g.wires[2]);
            let cnot = || {
                vec![
                    Gate::h(j),
                    Gate::rz(i, -FRAC_PI_2),
                    Gate::rz(j, -FRAC_PI_2),
                    Gate::rzz(i, j, FRAC_PI_2),
                    Gate::h(j),
                ]
            };
            let mut out = vec![Gate::rzz(i, j, p / 2.0)];
            out.extend(cnot());
            out.push(Gate::rzz(c, j, -p / 2.0));
            out.extend(cnot());
            (out, -FRAC_PI_2)
        }
        GateKind::CtrlRz(_) | GateKind::CtrlRzz(_) => (Vec::new(), 0.0),
        _ => (vec![g.clone()], 0.0),
    }
}

/// Replace every controlled rotation by its native sequence.
pub fn lower(c: &Circuit) -> Circuit {
    let mut out = Circuit::new(c.n_qubits);
    out.global_phase = c.global_phase;
    for g in &c.gates {
        let (gates, phase) = lower_controlled(g);
        out.gates.extend(gates);
        out.global_phase += phase;
    }
    out
}

fn one_qubit_matrix(g: &Gate) -> [C64; 4] {
    match g.kind {
        GateKind::Rz(p) => rz_matrix(p),
        _ => {
            let m = g.matrix();
            [m[0], m[1], m[2], m[3]]
        }
    }
}

const MERGE_TOL: f64 = 1e-13;

/// Phase of `m` if it is a multiple of the identity.
fn identity_phase(m: &[C64; 4]) -> Option<f64> {
    (m[1].norm() < MERGE_TOL && m[2].norm() < MERGE_TOL && (m[0] - m[3]).norm() < MERGE_TOL).then(|| m[0].arg())
}

/// Fuse a run of single-qubit gates on one wire; `None` when the product is
/// a pure phase.
fn fuse(run: &[Gate], phase: &mut f64) -> Option<Gate> {
    let w = run[0].wires[0];
    if run.len() == 1 {
        let m = one_qubit_matrix(&run[0]);
        if let Some(p) = identity_phase(&m) {
            *phase += p;
            return None;
        }
        return Some(run[0].clone());
    }
    let m = run.iter().fold([ONE, ZERO, ZERO, ONE], |acc, g| mul2(&one_qubit_matrix(g), &acc));
    if let Some(p) = identity_phase(&m) {
        *phase += p;
        return None;
    }
    let sum = |f: fn(&GateKind) -> Option<f64>| run.iter().map(|g| f(&g.kind)).sum::<Option<f64>>();
    if let Some(a) = sum(|k| if let GateKind::Rz(a) = k { Some(*a) } else { None }) {
        // RZ(a) with a folded into (−2π, 2π]; RZ(a + 2π) = −RZ(a)
        let folded = a - 2.0 * PI * (a / (2.0 * PI)).round();
        *phase += PI * (a / (2.0 * PI)).round();
        return Some(Gate::rz(w, folded));
    }
    if let Some(a) = sum(|k| if let GateKind::Rx(a) = k { Some(*a) } else { None }) {
        let folded = a - 2.0 * PI * (a / (2.0 * PI)).round();
        *phase += PI * (a / (2.0 * PI)).round();
        return Some(Gate::rx(w, folded));
    }
    Some(Gate::u1q(w, &m))
}

/// Fuse maximal runs of single-qubit gates on each wire. Runs of `RZ` (or
/// `RX`) stay `RZ` (`RX`); mixed runs become `U1q`; pure phases are dropped
/// into the global phase.
pub fn merge_1q(c: &Circuit) -> Circuit {
    let mut out = Circuit::new(c.n_qubits);
    let mut phase = c.global_phase;
    let mut pending: Vec<Vec<Gate>> = vec![Vec::new(); c.n_qubits];
    let flush = |run: &mut Vec<Gate>, out: &mut Circuit, phase: &mut f64| {
        if !run.is_empty() {
            if let Some(g) = fuse(run, phase) {
                out.gates.push(g);
            }
            run.clear();
        }
    };
    for g in &c.gates {
        if g.wires.len() == 1 {
            pending[g.wires[0]].push(g.clone());
            continue;
        }
        for &w in &g.wires {
            flush(&mut pending[w], &mut out, &mut phase);
        }
        out.gates.push(g.clone());
    }
    for run in pending.iter_mut() {
        flush(run, &mut out, &mut phase);
    }
    out.global_phase = phase;
    out
}

/// `merge_1q(lower(c))`.
pub fn compile(c: &Circuit) -> Circuit {
    merge_1q(&lower(c))
}

/// Longest path through the wire-dependency DAG, unit cost per gate.
pub fn dag_depth(c: &Circuit) -> usize {
    let mut level = vec![0usize; c.n_qubits];
    let mut depth = 0;
    for g in &c.gates {
        let d = 1 + g.wires.iter().map(|&w| level[w]).max().unwrap_or(0);
        for &w in &g.wires {
            level[w] = d;
        }
        depth = depth.max(d);
    }
    depth
}

/// Number of two-wire `RZZ` gates.
pub fn rzz_count(c: &Circuit) -> usize {
    c.gates.iter().filter(|g| matches!(g.kind, GateKind::Rzz(_))).count()
}

/// Append `exp(−i·dt·term)` on `offset`-shifted wires, conditioned on
/// `control` if given. Bond terms use basis changes onto `ZZ`.
fn push_term(c: &mut Circuit, term: &PauliTerm, dt: f64, control: Option<usize>, offset: usize) {
    let angle = 2.0 * term.coeff * dt;
    let ops = term.string.ops();
    match ops {
        [(site, Pauli::Z)] => {
            let t = site + offset;
            c.push(match control {
                Some(a) => Gate::new(GateKind::CtrlRz(angle), vec![a, t]),
                None => Gate::rz(t, angle),
            });
        }
        [(i, p), (j, q)] if p == q => {
            let (i, j) = (i + offset, j + offset);
            let (pre, post): (Vec<GateKind>, Vec<GateKind>) = match p {
                Pauli::X => (vec![GateKind::H], vec![GateKind::H]),
                Pauli::Y => (vec![GateKind::Sdg, GateKind::H], vec![GateKind::H, GateKind::S]),
                Pauli::Z => (vec![], vec![]),
            };
            for k in &pre {
                c.push(Gate::new(k.clone(), vec![i]));
                c.push(Gate::new(k.clone(), vec![j]));
            }
            c.push(match control {
                Some(a) => Gate::new(GateKind::CtrlRzz(angle), vec![a, i, j]),
                None => Gate::rzz(i, j, angle),
            });
            for k in &post {
                c.push(Gate::new(k.clone(), vec![i]));
                c.push(Gate::new(k.clone(), vec![j]));
            }
        }
        _ => unreachable!("chain Hamiltonian terms are Z or matched Pauli pairs"),
    }
}

fn push_slice(c: &mut Circuit, split: &TermSplit, dt: f64, control: Option<usize>, offset: usize) {
    let half = |c: &mut Circuit, terms: &[PauliTerm]| terms.iter().for_each(|t| push_term(c, t, dt / 2.0, control, offset));
    half(c, &split.even_bonds);
    half(c, &split.odd_bonds);
    split.field_terms.iter().for_each(|t| push_term(c, t, dt, control, offset));
    half(c, &split.odd_bonds);
    half(c, &split.even_bonds);
}

/// Symmetric slice `E(δt/2)·O(δt/2)·F(δt)·O(δt/2)·E(δt/2)` on `N` qubits.
pub fn build_trotter_slice(split: &TermSplit, dt: f64) -> Circuit {
    let mut c = Circuit::new(split.n_sites);
    push_slice(&mut c, split, dt, None, 0);
    c
}

/// Ancilla-controlled `[S2(t/r)]^r` on an `N+1` qubit register with the
/// ancilla at wire 0.
pub fn build_controlled_evolution(split: &TermSplit, t: f64, reps: usize) -> Circuit {
    let mut c = Circuit::new(split.n_sites + 1);
    let dt = t / reps.max(1) as f64;
    for _ in 0..reps.max(1) {
        push_slice(&mut c, split, dt, Some(0), 1);
    }
    c
}

/// Parameters of one PITE step with success amplitude
/// `m0[cos(sΔτ H̃) − (1/s) sin(sΔτ H̃)]`, `H̃ = H − shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiteStepParams {
    pub m0: f64,
    pub shift: f64,
    pub dtau: f64,
}

impl PiteStepParams {
    pub fn new(m0: f64, shift: f64, dtau: f64) -> Result<Self> {
        if !(m0 > 0.0 && m0 < 1.0) || !shift.is_finite() || !dtau.is_finite() {
            return Err(Error::InvalidArgument(format!("m0 = {m0}, shift = {shift}, dtau = {dtau}")));
        }
        Ok(Self { m0, shift, dtau })
    }

    pub fn s(&self) -> f64 {
        self.m0 / (1.0 - self.m0 * self.m0).sqrt()
    }

    /// Real-time evolution length `sΔτ`.
    pub fn alpha(&self) -> f64 {
        self.s() * self.dtau
    }

    pub fn big_theta(&self) -> f64 {
        ((self.m0 + (1.0 - self.m0 * self.m0).sqrt()) / std::f64::consts::SQRT_2).clamp(-1.0, 1.0).acos()
    }

    pub fn kappa(&self) -> f64 {
        if self.m0 >= FRAC_1_SQRT_2 {
            1.0
        } else {
            -1.0
        }
    }

    /// Ancilla rotation angle; the energy shift enters here as a phase.
    pub fn theta_eff(&self) -> f64 {
        self.kappa() * self.big_theta() + self.alpha() * self.shift
    }
}

/// One PITE step on `N+1` qubits, ancilla at wire 0:
/// `H, W, RX(π), c-U(α), RX(−π), c-U(−α), RZ(−2θ_eff), W†` with
/// `U(t) = [S2(t/r)]^r` for the unshifted Hamiltonian. The ancilla-`|0⟩`
/// branch carries `cos(αH̃ + arccos m0)` up to Trotter error.
pub fn build_pite_step(split: &TermSplit, params: &PiteStepParams, reps: usize) -> Result<Circuit> {
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one Trotter repetition".into()));
    }
    let n = split.n_sites + 1;
    let alpha = params.alpha();
    let mut c = Circuit::new(n);
    c.push(Gate::h(0));
    c.push(Gate::u1q(0, &w_matrix()));
    c.push(Gate::rx(0, PI));
    c.extend(&build_controlled_evolution(split, alpha, reps));
    c.push(Gate::rx(0, -PI));
    c.extend(&build_controlled_evolution(split, -alpha, reps));
    c.push(Gate::rz(0, -2.0 * params.theta_eff()));
    c.push(Gate::u1q(0, &adjoint2(&w_matrix())));
    Ok(c)
}

/// Encoding circuit `Û_1†…Û_L†` at the abstract-gate level.
pub fn encoding_circuit(layers: &[MpdLayer], n_sites: usize, depth: usize) -> Result<Circuit> {
    if depth > layers.len() {
        return Err(Error::OutOfRange(format!("{depth} layers requested, {} built", layers.len())));
    }
    let mut c = Circuit::new(n_sites);
    for layer in layers[..depth].iter().rev() {
        for g in layer.gates.iter().rev() {
            let kind = if g.wires.len() == 1 { GateKind::U1q(g.matrix.clone()) } else { GateKind::U2q(g.matrix.clone()) };
            c.push(Gate::new(kind, g.wires.clone()));
        }
    }
    Ok(c)
}

/// Tag attached to every reported depth.
pub const DEPTH_CONVENTION: &str = "convention-D1";

/// Depth and `RZZ` count of a compiled circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitCost {
    pub depth: usize,
    pub rzz: usize,
    pub gates: usize,
}

pub fn cost(c: &Circuit) -> CircuitCost {
    let compiled = compile(c);
    CircuitCost { depth: dag_depth(&compiled), rzz: rzz_count(&compiled), gates: compiled.len() }
}
