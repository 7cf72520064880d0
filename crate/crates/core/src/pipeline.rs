//! Scan orchestration.
//!
//! A scan point `(N, h_z)` runs three stages, each reading the previous
//! stage's files from the point directory `points/N{n}_hz{h}/`:
//!
//! | stage  | writes |
//! |--------|--------|
//! | dmrg   | `mps.bin`, `dmrg.json` |
//! | encode | `layers.bin`, `encoding.csv`, `encoding.json`, `sensitivity.csv` |
//! | pite   | `schedule_{init}.json`, `trajectory_{init}_{backend}.csv`, `pite.json` |
//!
//! A finished point also has `point.json` with checksums of the files above;
//! a rerun skips every point whose checksums still match. After all points,
//! the scan writes aggregate tables, the scaling report and `manifest.json`.
//!
//! Plot-ready series: `encoding.csv` holds χ_cut/χ_max and IF/N against the
//! layer index; `trajectory_*.csv` holds ΔE, IF and P_cum against cumulative
//! depth; `lstar.csv`, `tail.csv` and `resources.csv` hold the size scans.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{cost, encoding_circuit, CircuitCost, DEPTH_CONVENTION};
use crate::encoder::{chi_max, encode_state, run_disentangler, EncoderOptions, EncodingDiagnostics};
use crate::fits::{
    default_tail_window, fit_linear, fit_logistic, fit_powerlaw, fit_tail, predict_delta_l, DeltaL, LinearFit,
    LogisticFit, TailFit, TailWeighting,
};
use crate::hamiltonian::{neel_state, reference_spectrum, HamiltonianSpec, ReferenceSpectrum};
use crate::io::{self, EncodingRow};
use crate::mps::{build_mpo, dmrg_ground, DmrgOptions};
use crate::numerics::LanczosOptions;
use crate::pite::{
    crossing_metrics, make_schedule, run_trajectory, Backend, CalibrationMetric, Crossing, PiteContext, Schedule,
    ScheduleInputs, MAX_REPS, STOP_MARGIN,
};
use crate::{Error, Result, StateVector, BIT_CONVENTION, CHEMICAL_ACCURACY, MAX_STATEVECTOR_SITES, TOOL_VERSION};

/// Environment variable holding the worker count for scans.
pub const WORKERS_ENV: &str = "GSPREP_WORKERS";

/// Singular-value floors at which the logistic fit is repeated as a sensitivity check.
pub const SENSITIVITY_THRESHOLDS: [f64; 5] = [1e-8, 1e-9, 1e-10, 1e-11, 1e-12];

/// Fewest layer records the logistic fit accepts.
pub const MIN_LOGISTIC_POINTS: usize = 5;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initializer {
    /// The encoder circuit truncated at the stopping depth.
    Mps,
    Neel,
    /// The exact ground state; a control for the filter.
    Exact,
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Initializer::Mps => "mps",
            Initializer::Neel => "neel",
            Initializer::Exact => "exact",
        })
    }
}

impl FromStr for Initializer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mps" => Ok(Initializer::Mps),
            "neel" => Ok(Initializer::Neel),
            "exact" => Ok(Initializer::Exact),
            _ => Err(Error::InvalidArgument(format!("unknown initializer `{s}`"))),
        }
    }
}

/// How many disentangling layers to build.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerRule {
    /// Stop at `max(N, 3·crossing)` layers, capped at `4N`, where the crossing
    /// is the first layer with `χ_cut ≥ χ_max/2`.
    #[default]
    Auto,
    /// Exactly `fixed_layers` layers.
    Fixed,
    /// Enough layers to cover the tail window: `max(4N, window end)`.
    CoverTail,
}

impl fmt::Display for LayerRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerRule::Auto => "auto",
            LayerRule::Fixed => "fixed",
            LayerRule::CoverTail => "cover-tail",
        })
    }
}

impl FromStr for LayerRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(LayerRule::Auto),
            "fixed" => Ok(LayerRule::Fixed),
            "cover-tail" => Ok(LayerRule::CoverTail),
            _ => Err(Error::InvalidArgument(format!("unknown layer rule `{s}`"))),
        }
    }
}

/// Scan configuration, stored as TOML with flat keys.
///
/// ```toml
/// n_sites = [8, 10, 12]
/// fields = [0.0, 0.5]
/// initializers = ["mps", "neel"]
/// backends = ["trotter"]
/// layer_rule = "auto"
/// output = "results"
///
/// [tail_windows]
/// 8 = [20, 100]
/// ```
///
/// Omitted keys take their defaults; `chi` absent means χ = N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub n_sites: Vec<usize>,
    pub fields: Vec<f64>,
    pub initializers: Vec<Initializer>,
    pub backends: Vec<Backend>,
    pub coupling: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<usize>,
    pub epsilon: f64,
    pub m0: f64,
    pub dtau_min_ratio: f64,
    pub layer_rule: LayerRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_layers: Option<usize>,
    pub rank_threshold: f64,
    pub calibration: CalibrationMetric,
    pub seed: u64,
    pub output: PathBuf,
    /// Inclusive tail-fit windows keyed by chain length; overrides the defaults.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub tail_windows: BTreeMap<String, [usize; 2]>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let sched = ScheduleInputs::new(0.0, 1.0, 1.0);
        Self {
            n_sites: vec![8, 10, 12],
            fields: vec![0.0, 0.5],
            initializers: vec![Initializer::Mps, Initializer::Neel],
            backends: vec![Backend::Trotter],
            coupling: 1.0,
            chi: None,
            epsilon: sched.epsilon,
            m0: sched.m0,
            dtau_min_ratio: sched.dtau_min_ratio,
            layer_rule: LayerRule::Auto,
            fixed_layers: None,
            rank_threshold: 1e-10,
            calibration: CalibrationMetric::default(),
            seed: DmrgOptions::default().seed,
            output: PathBuf::from("gsprep-out"),
            tail_windows: BTreeMap::new(),
        }
    }
}

fn check_unique<T: PartialEq + fmt::Debug>(items: &[T], path: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::config(path, "list must not be empty"));
    }
    for (i, x) in items.iter().enumerate() {
        if items[..i].contains(x) {
            return Err(Error::config(format!("{path}[{i}]"), format!("duplicate entry {x:?}")));
        }
    }
    Ok(())
}

fn check_open_unit(v: f64, path: &str) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::config(path, format!("{v} must lie strictly between 0 and 1")));
    }
    Ok(())
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        check_unique(&self.n_sites, "n_sites")?;
        for (i, &n) in self.n_sites.iter().enumerate() {
            if !(2..=MAX_STATEVECTOR_SITES).contains(&n) {
                return Err(Error::config(format!("n_sites[{i}]"), format!("{n} outside 2..={MAX_STATEVECTOR_SITES}")));
            }
        }
        check_unique(&self.fields, "fields")?;
        for (i, f) in self.fields.iter().enumerate() {
            if !f.is_finite() {
                return Err(Error::config(format!("fields[{i}]"), "field must be finite"));
            }
        }
        check_unique(&self.initializers, "initializers")?;
        check_unique(&self.backends, "backends")?;
        if !(self.coupling.is_finite() && self.coupling != 0.0) {
            return Err(Error::config("coupling", "coupling must be finite and nonzero"));
        }
        if let Some(chi) = self.chi {
            if chi < 2 {
                return Err(Error::config("chi", "bond dimension must be at least 2"));
            }
        }
        check_open_unit(self.epsilon, "epsilon")?;
        check_open_unit(self.m0, "m0")?;
        if !(self.dtau_min_ratio > 0.0 && self.dtau_min_ratio <= 1.0) {
            return Err(Error::config("dtau_min_ratio", "must lie in (0, 1]"));
        }
        match (self.layer_rule, self.fixed_layers) {
            (LayerRule::Fixed, None) => return Err(Error::config("fixed_layers", "required when layer_rule = \"fixed\"")),
            (LayerRule::Fixed, Some(0)) => return Err(Error::config("fixed_layers", "must be at least 1")),
            _ => {}
        }
        check_open_unit(self.rank_threshold, "rank_threshold")?;
        if self.output.as_os_str().is_empty() {
            return Err(Error::config("output", "output directory must be set"));
        }
        for (key, w) in &self.tail_windows {
            let path = format!("tail_windows.{key}");
            match key.parse::<usize>() {
                Ok(n) if n >= 2 => {}
                _ => return Err(Error::config(path, "key must be a chain length")),
            }
            if w[0] >= w[1] {
                return Err(Error::config(path, format!("window [{}, {}] is empty", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            Error::config("<config>", msg)
        })?;
        Ok(cfg)
    }

    /// Read a TOML config, or the config snapshot of a `.json` run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: RunManifest = serde_json::from_str(&text)?;
            return Ok(m.config);
        }
        Self::from_toml(&text)
    }

    pub fn chi_for(&self, n: usize) -> usize {
        self.chi.unwrap_or(n)
    }

    pub fn tail_window(&self, n: usize) -> Option<(usize, usize)> {
        self.tail_windows.get(&n.to_string()).map(|w| (w[0], w[1])).or_else(|| default_tail_window(n))
    }

    pub fn encoder_options(&self, n: usize) -> EncoderOptions {
        let base = EncoderOptions { max_layers: 4 * n, rank_threshold: self.rank_threshold, stop_after_crossing: None, min_layers: 0 };
        match self.layer_rule {
            LayerRule::Auto => EncoderOptions { stop_after_crossing: Some(3.0), min_layers: n, ..base },
            LayerRule::Fixed => EncoderOptions { max_layers: self.fixed_layers.unwrap_or(1), ..base },
            LayerRule::CoverTail => {
                EncoderOptions { max_layers: self.tail_window(n).map_or(4 * n, |w| w.1.max(4 * n)), ..base }
            }
        }
    }

    fn spec(&self, n: usize, field: f64) -> Result<HamiltonianSpec> {
        HamiltonianSpec::new(n, self.coupling, field)
    }

    /// Hash of every setting that influences the point `(n, field)`.
    fn fingerprint(&self, n: usize, field: f64) -> Result<String> {
        let mut c = self.clone();
        c.n_sites = vec![n];
        c.fields = vec![field];
        c.output = PathBuf::from(".");
        c.tail_windows.retain(|k, _| *k == n.to_string());
        Ok(io::sha256_hex(format!("{TOOL_VERSION}\n{}", c.to_toml()?).as_bytes()))
    }
}

pub fn point_dir(root: &Path, n: usize, field: f64) -> PathBuf {
    root.join("points").join(format!("N{n}_hz{field}"))
}

fn lanczos() -> LanczosOptions {
    LanczosOptions::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmrgSummary {
    pub n_sites: usize,
    pub field: f64,
    pub chi: usize,
    pub seed: u64,
    pub energy: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub non_monotonic: bool,
    pub max_discarded: f64,
    pub bond_dims: Vec<usize>,
}

/// Writes `mps.bin` and `dmrg.json` into `dir`.
pub fn stage_dmrg(cfg: &ScanConfig, n: usize, field: f64, dir: &Path) -> Result<DmrgSummary> {
    fs::create_dir_all(dir)?;
    let spec = cfg.spec(n, field)?;
    let chi = cfg.chi_for(n);
    let opts = DmrgOptions { chi_max: chi, seed: cfg.seed, ..DmrgOptions::default() };
    let res = dmrg_ground(&build_mpo(&spec)?, &opts)?;
    io::write_mps(&dir.join("mps.bin"), &res.mps, Some(cfg.seed))?;
    let summary = DmrgSummary {
        n_sites: n,
        field,
        chi,
        seed: cfg.seed,
        energy: res.energy,
        sweeps: res.sweep_energies.len(),
        converged: res.converged,
        non_monotonic: res.non_monotonic,
        max_discarded: res.max_discarded,
        bond_dims: res.mps.bond_dims(),
    };
    io::write_json(&dir.join("dmrg.json"), &summary)?;
    Ok(summary)
}

/// Fits of one encoding series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesFits {
    pub n_sites: usize,
    pub points: usize,
    /// First layer with `χ_cut/χ_max ≥ 1/2`.
    pub crossing: Option<usize>,
    pub logistic: Option<LogisticFit>,
    pub logistic_error: Option<String>,
    pub tail_window: Option<(usize, usize)>,
    pub tail: Option<TailFit>,
    pub tail_status: String,
    /// Extra layers the tail model needs to reach `IF/N = ε/N`.
    pub delta_l: Option<DeltaL>,
}

impl SeriesFits {
    pub fn l_star(&self) -> Option<f64> {
        self.logistic.as_ref().map(|f| f.l_star)
    }

    /// Layers used for the encoded initializer: `round(L*)`, else the
    /// crossing, clamped to `[1, layers_built]`.
    pub fn stopping_depth(&self, layers_built: usize) -> usize {
        let raw = match self.l_star() {
            Some(l) if l.is_finite() => l.round().max(1.0) as usize,
            _ => self.crossing.unwrap_or(1).max(1),
        };
        raw.min(layers_built)
    }
}

/// Logistic fit of the rank ratio and, if `window` lies inside the series,
/// tail fit of `IF/N`.
pub fn fit_series(rows: &[EncodingRow], n_sites: usize, window: Option<(usize, usize)>, epsilon: f64) -> SeriesFits {
    let l: Vec<f64> = rows.iter().map(|r| r.l as f64).collect();
    let ratio: Vec<f64> = rows.iter().map(|r| r.chi_ratio).collect();
    let (logistic, logistic_error) = if rows.len() < MIN_LOGISTIC_POINTS {
        (None, Some(format!("{} layer records; need at least {MIN_LOGISTIC_POINTS}", rows.len())))
    } else {
        match fit_logistic(&l, &ratio) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let last = rows.iter().map(|r| r.l).max().unwrap_or(0);
    let (tail, tail_status) = match window {
        None => (None, format!("no tail window for N = {n_sites}")),
        Some((_, hi)) if hi > last => (None, format!("window ends at layer {hi}, series ends at {last}")),
        Some((lo, hi)) => {
            let y: Vec<f64> = rows.iter().map(|r| r.if_per_site).collect();
            match fit_tail(&l, &y, (lo as f64, hi as f64), TailWeighting::default()) {
                Ok(t) => (Some(t), "fitted".to_string()),
                Err(e) => (None, e.to_string()),
            }
        }
    };
    let delta_l = tail.as_ref().and_then(|t| predict_delta_l(t, n_sites, epsilon).ok());
    SeriesFits {
        n_sites,
        points: rows.len(),
        crossing: rows.iter().find(|r| 2.0 * r.chi_ratio >= 1.0).map(|r| r.l),
        logistic,
        logistic_error,
        tail_window: window,
        tail,
        tail_status,
        delta_l,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub threshold: f64,
    pub l_star: Option<f64>,
    pub crossing: Option<usize>,
}

/// Logistic `L*` recomputed with other singular-value floors.
pub fn threshold_sensitivity(diag: &EncodingDiagnostics) -> Vec<SensitivityRow> {
    let l: Vec<f64> = diag.records.iter().map(|r| r.layer as f64).collect();
    SENSITIVITY_THRESHOLDS
        .iter()
        .map(|&threshold| {
            let ranks = diag.ranks_at(threshold);
            let ratio: Vec<f64> = ranks.iter().map(|&r| r as f64 / diag.chi_max as f64).collect();
            let l_star = (l.len() >= MIN_LOGISTIC_POINTS).then(|| fit_logistic(&l, &ratio).ok()).flatten().map(|f| f.l_star);
            let crossing = ranks.iter().position(|&r| 2 * r >= diag.chi_max).map(|i| diag.records[i].layer);
            SensitivityRow { threshold, l_star, crossing }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub n_sites: usize,
    pub field: f64,
    pub e0: f64,
    pub e1: f64,
    pub gap: f64,
    pub degenerate: bool,
    pub layer_rule: LayerRule,
    pub rank_threshold: f64,
    pub chi_max: usize,
    pub layers_built: usize,
    pub fits: SeriesFits,
    /// Layers used for the MPS initializer.
    pub depth_used: usize,
    /// Ground-space fidelity and `IF/N` of the initializer.
    pub fidelity_at_depth: f64,
    pub if_per_site_at_depth: f64,
    /// Cost of the encoding circuit truncated at `depth_used`.
    pub encoder_cost: CircuitCost,
}

fn reference(cfg: &ScanConfig, n: usize, field: f64) -> Result<ReferenceSpectrum> {
    reference_spectrum(&cfg.spec(n, field)?, &lanczos())
}

/// Reads `mps.bin`; writes `layers.bin`, `encoding.csv`, `sensitivity.csv`
/// and `encoding.json`.
pub fn stage_encode(cfg: &ScanConfig, n: usize, field: f64, dir: &Path) -> Result<EncodeSummary> {
    let (mps, _) = io::read_mps(&dir.join("mps.bin"))?;
    if mps.n_sites() != n {
        return Err(Error::Format(format!("mps.bin has {} sites, expected {n}", mps.n_sites())));
    }
    let psi = mps.to_statevector()?;
    let r = reference(cfg, n, field)?;
    let (layers, diag) = run_disentangler(&psi, &r.ground_space, &cfg.encoder_options(n))?;
    io::write_layers(&dir.join("layers.bin"), &layers, n)?;
    let rows = io::encoding_rows(&diag);
    io::write_csv(&dir.join("encoding.csv"), &rows)?;
    io::write_csv(&dir.join("sensitivity.csv"), &threshold_sensitivity(&diag))?;
    let fits = fit_series(&rows, n, cfg.tail_window(n), cfg.epsilon);
    let depth_used = fits.stopping_depth(layers.len());
    let rec = diag.record(depth_used).expect("record for every built layer");
    let summary = EncodeSummary {
        n_sites: n,
        field,
        e0: r.e0,
        e1: r.e1,
        gap: r.gap,
        degenerate: r.degenerate,
        layer_rule: cfg.layer_rule,
        rank_threshold: cfg.rank_threshold,
        chi_max: chi_max(n),
        layers_built: layers.len(),
        fits,
        depth_used,
        fidelity_at_depth: rec.fidelity,
        if_per_site_at_depth: rec.if_per_site,
        encoder_cost: cost(&encoding_circuit(&layers, n, depth_used)?),
    };
    io::write_json(&dir.join("encoding.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub initializer: Initializer,
    pub backend: Backend,
    /// Overlap of the initial state with the DMRG state.
    pub w0: f64,
    pub k_safe: usize,
    pub steps: usize,
    pub any_cap_hit: bool,
    pub crossing: Crossing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiteSummary {
    pub n_sites: usize,
    pub field: f64,
    pub target: f64,
    pub trajectories: Vec<TrajectorySummary>,
}

fn initial_state(init: Initializer, n: usize, dir: &Path, r: &ReferenceSpectrum) -> Result<StateVector> {
    match init {
        Initializer::Neel => neel_state(n),
        Initializer::Exact => Ok(r.ground.clone()),
        Initializer::Mps => {
            let (layers, _) = io::read_layers(&dir.join("layers.bin"))?;
            let enc: EncodeSummary = io::read_json(&dir.join("encoding.json"))?;
            encode_state(&layers, n, enc.depth_used)
        }
    }
}

/// Reads `mps.bin`, `dmrg.json` and the encoder outputs; writes one schedule
/// per initializer, one trajectory per initializer and backend, and `pite.json`.
pub fn stage_pite(cfg: &ScanConfig, n: usize, field: f64, dir: &Path) -> Result<PiteSummary> {
    let (mps, _) = io::read_mps(&dir.join("mps.bin"))?;
    let psi = mps.to_statevector()?;
    let dm: DmrgSummary = io::read_json(&dir.join("dmrg.json"))?;
    let spec = cfg.spec(n, field)?;
    let r = reference_spectrum(&spec, &lanczos())?;
    let mut ctx = PiteContext::new(&spec)?;
    ctx.calibration = cfg.calibration;
    let mut trajectories = Vec::new();
    for &init in &cfg.initializers {
        let state = initial_state(init, n, dir, &r)?;
        let w0 = state.fidelity(&psi);
        let inputs = ScheduleInputs {
            epsilon: cfg.epsilon,
            m0: cfg.m0,
            dtau_min_ratio: cfg.dtau_min_ratio,
            ..ScheduleInputs::new(dm.energy, r.e1 - dm.energy, w0)
        };
        let schedule: Schedule = make_schedule(&inputs)?;
        io::write_json(&dir.join(format!("schedule_{init}.json")), &schedule)?;
        for &backend in &cfg.backends {
            let traj = run_trajectory(&state, &init.to_string(), &schedule, backend, &r, &ctx)?;
            io::write_csv(&dir.join(format!("trajectory_{init}_{backend}.csv")), &io::trajectory_rows(&traj))?;
            trajectories.push(TrajectorySummary {
                initializer: init,
                backend,
                w0,
                k_safe: schedule.k_safe,
                steps: traj.records.len() - 1,
                any_cap_hit: traj.any_cap_hit,
                crossing: crossing_metrics(&traj, CHEMICAL_ACCURACY),
            });
        }
    }
    let summary = PiteSummary { n_sites: n, field, target: CHEMICAL_ACCURACY, trajectories };
    io::write_json(&dir.join("pite.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub n_sites: usize,
    pub field: f64,
    pub fingerprint: String,
    pub dmrg: DmrgSummary,
    pub encode: EncodeSummary,
    pub pite: PiteSummary,
    /// SHA-256 of every other file in the point directory.
    pub files: BTreeMap<String, String>,
}

pub const POINT_FILE: &str = "point.json";

fn checksum_dir(dir: &Path, skip: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in list_files(dir)? {
        let rel = relative_name(dir, &path);
        if rel != skip {
            out.insert(rel, io::sha256_file(&path)?);
        }
    }
    Ok(out)
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn relative_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// All three stages followed by `point.json`.
pub fn run_point(cfg: &ScanConfig, n: usize, field: f64, root: &Path) -> Result<PointSummary> {
    let dir = point_dir(root, n, field);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    let dmrg = stage_dmrg(cfg, n, field, &dir)?;
    let encode = stage_encode(cfg, n, field, &dir)?;
    let pite = stage_pite(cfg, n, field, &dir)?;
    let summary = PointSummary {
        n_sites: n,
        field,
        fingerprint: cfg.fingerprint(n, field)?,
        dmrg,
        encode,
        pite,
        files: checksum_dir(&dir, POINT_FILE)?,
    };
    io::write_json(&dir.join(POINT_FILE), &summary)?;
    Ok(summary)
}

/// A finished point whose settings and checksums still match, if any.
pub fn resume_point(cfg: &ScanConfig, n: usize, field: f64, root: &Path) -> Option<PointSummary> {
    let dir = point_dir(root, n, field);
    let summary: PointSummary = io::read_json(&dir.join(POINT_FILE)).ok()?;
    if summary.fingerprint != cfg.fingerprint(n, field).ok()? {
        return None;
    }
    let current = checksum_dir(&dir, POINT_FILE).ok()?;
    (current == summary.files).then_some(summary)
}

/// Every `point.json` under `root/points`, ordered by `(N, h_z)`.
pub fn load_tree(root: &Path) -> Result<Vec<PointSummary>> {
    let points = root.join("points");
    if !points.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PointSummary> = Vec::new();
    for entry in fs::read_dir(&points)? {
        let p = entry?.path().join(POINT_FILE);
        if p.exists() {
            out.push(io::read_json(&p)?);
        }
    }
    out.sort_by(|a, b| a.n_sites.cmp(&b.n_sites).then(a.field.total_cmp(&b.field)));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LStarRow {
    pub field: f64,
    pub n_sites: usize,
    pub l_star: Option<f64>,
    pub crossing: Option<usize>,
    pub layers_built: usize,
    pub depth_used: usize,
    pub if_per_site: f64,
    pub encoder_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LStarTrend {
    pub field: f64,
    pub sizes: usize,
    /// Every size has a logistic `L*`.
    pub complete: bool,
    /// Strictly increasing in N over the sizes that have one.
    pub monotone: bool,
    pub fit: Option<LinearFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub field: f64,
    pub n_sites: usize,
    pub window_lo: Option<usize>,
    pub window_hi: Option<usize>,
    pub c: Option<f64>,
    pub a: Option<f64>,
    pub k: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailTrend {
    pub field: f64,
    pub sizes: usize,
    /// Log-log slope of `k` against N.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceRow {
    pub field: f64,
    pub n_sites: usize,
    pub initializer: Initializer,
    pub backend: Backend,
    pub w0: f64,
    pub reached: bool,
    pub d_raw: f64,
    pub d_post: Option<f64>,
    pub p_cum: f64,
    pub any_cap_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawRow {
    pub field: f64,
    pub initializer: Initializer,
    pub backend: Backend,
    pub alpha: f64,
    pub beta: f64,
    pub stderr: Option<f64>,
    pub r2_log: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub lstar: Vec<LStarRow>,
    pub lstar_trends: Vec<LStarTrend>,
    pub tail: Vec<TailRow>,
    pub tail_trends: Vec<TailTrend>,
    pub resources: Vec<ResourceRow>,
    pub powerlaw: Vec<PowerLawRow>,
    pub warnings: Vec<String>,
}

impl Aggregates {
    pub fn lstar_trend(&self, field: f64) -> Option<&LStarTrend> {
        self.lstar_trends.iter().find(|t| t.field == field)
    }

    pub fn tail_trend(&self, field: f64) -> Option<&TailTrend> {
        self.tail_trends.iter().find(|t| t.field == field)
    }

    pub fn resource(&self, field: f64, n: usize, init: Initializer, backend: Backend) -> Option<&ResourceRow> {
        self.resources
            .iter()
            .find(|r| r.field == field && r.n_sites == n && r.initializer == init && r.backend == backend)
    }

    pub fn powerlaw_row(&self, field: f64, init: Initializer, backend: Backend) -> Option<&PowerLawRow> {
        self.powerlaw.iter().find(|r| r.field == field && r.initializer == init && r.backend == backend)
    }
}

fn distinct_fields(fields: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut f: Vec<f64> = fields.collect();
    f.sort_by(f64::total_cmp);
    f.dedup();
    f
}

/// Size-scan tables over the completed points.
pub fn aggregate(points: &[PointSummary]) -> Aggregates {
    let mut points: Vec<&PointSummary> = points.iter().collect();
    points.sort_by(|a, b| a.field.total_cmp(&b.field).then(a.n_sites.cmp(&b.n_sites)));
    let mut agg = Aggregates::default();
    if points.is_empty() {
        agg.warnings.push("no completed points".into());
        return agg;
    }
    for p in &points {
        let e = &p.encode;
        agg.lstar.push(LStarRow {
            field: p.field,
            n_sites: p.n_sites,
            l_star: e.fits.l_star(),
            crossing: e.fits.crossing,
            layers_built: e.layers_built,
            depth_used: e.depth_used,
            if_per_site: e.if_per_site_at_depth,
            encoder_depth: e.encoder_cost.depth,
        });
        if let Some(err) = &e.fits.logistic_error {
            agg.warnings.push(format!("N={} h_z={}: logistic fit failed: {err}", p.n_sites, p.field));
        }
        agg.tail.push(TailRow {
            field: p.field,
            n_sites: p.n_sites,
            window_lo: e.fits.tail_window.map(|w| w.0),
            window_hi: e.fits.tail_window.map(|w| w.1),
            c: e.fits.tail.as_ref().map(|t| t.c),
            a: e.fits.tail.as_ref().map(|t| t.a),
            k: e.fits.tail.as_ref().map(|t| t.k),
            status: e.fits.tail_status.clone(),
        });
        for t in &p.pite.trajectories {
            agg.resources.push(ResourceRow {
                field: p.field,
                n_sites: p.n_sites,
                initializer: t.initializer,
                backend: t.backend,
                w0: t.w0,
                reached: t.crossing.reached(),
                d_raw: t.crossing.d_raw(),
                d_post: match t.crossing {
                    Crossing::Reached { d_post, .. } => Some(d_post),
                    Crossing::NotReached { .. } => None,
                },
                p_cum: t.crossing.p_cum(),
                any_cap_hit: t.any_cap_hit,
            });
            if t.any_cap_hit {
                agg.warnings.push(format!(
                    "N={} h_z={} {} {}: Trotter calibration hit the {MAX_REPS}-repetition cap",
                    p.n_sites, p.field, t.initializer, t.backend
                ));
            }
        }
    }
    for field in distinct_fields(points.iter().map(|p| p.field)) {
        let rows: Vec<&LStarRow> = agg.lstar.iter().filter(|r| r.field == field).collect();
        let have: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.l_star.map(|l| (r.n_sites as f64, l))).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = have.iter().copied().unzip();
        agg.lstar_trends.push(LStarTrend {
            field,
            sizes: rows.len(),
            complete: have.len() == rows.len(),
            monotone: !have.is_empty() && y.windows(2).all(|w| w[1] > w[0]),
            fit: fit_linear(&x, &y).ok(),
        });
        let tails: Vec<(f64, f64)> = agg
            .tail
            .iter()
            .filter(|r| r.field == field)
            .filter_map(|r| r.k.filter(|&k| k > 0.0).map(|k| (r.n_sites as f64, k)))
            .collect();
        let (tx, ty): (Vec<f64>, Vec<f64>) = tails.iter().copied().unzip();
        agg.tail_trends.push(TailTrend { field, sizes: tails.len(), slope: fit_powerlaw(&tx, &ty).ok().map(|f| f.beta) });
    }
    let mut keys: Vec<(f64, Initializer, Backend)> =
        agg.resources.iter().map(|r| (r.field, r.initializer, r.backend)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.to_string().cmp(&b.2.to_string())));
    keys.dedup();
    for (field, init, backend) in keys {
        let sel: Vec<&ResourceRow> = agg
            .resources
            .iter()
            .filter(|r| r.field == field && r.initializer == init && r.backend == backend && r.reached && r.d_raw > 0.0)
            .collect();
        let n: Vec<f64> = sel.iter().map(|r| r.n_sites as f64).collect();
        let d: Vec<f64> = sel.iter().map(|r| r.d_raw).collect();
        if let Ok(f) = fit_powerlaw(&n, &d) {
            agg.powerlaw.push(PowerLawRow {
                field,
                initializer: init,
                backend,
                alpha: f.alpha,
                beta: f.beta,
                stderr: f.stderr_beta,
                r2_log: f.r2_log,
                points: f.points,
            });
        }
    }
    agg
}

/// One line of the scaling summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub target: String,
    pub quantity: String,
    pub reference_exponent: f64,
    pub fitted_exponent: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub depth_convention: String,
    pub rows: Vec<ScalingRow>,
    pub warnings: Vec<String>,
}

/// Preferred power-law row for a PITE scaling line: Néel before MPS, Trotter
/// before the exact filter.
fn pick_pite_row(agg: &Aggregates, gapless: bool) -> Option<&PowerLawRow> {
    let rank = |r: &PowerLawRow| {
        (
            match r.initializer {
                Initializer::Neel => 0,
                Initializer::Mps => 1,
                Initializer::Exact => 2,
            },
            (r.backend != Backend::Trotter) as u8,
        )
    };
    agg.powerlaw.iter().filter(|r| (r.field == 0.0) == gapless).min_by_key(|r| rank(r))
}

/// The four-line scaling summary: encoder to `L*`, encoder tail, PITE gapless,
/// PITE gapped, with reference exponents 1, 5, 3 and 3/2.
pub fn build_report(agg: &Aggregates) -> Report {
    let mut warnings = agg.warnings.clone();
    let enc: Vec<&LStarRow> = agg.lstar.iter().filter(|r| r.encoder_depth > 0).collect();
    let enc_fit = fit_powerlaw(
        &enc.iter().map(|r| r.n_sites as f64).collect::<Vec<_>>(),
        &enc.iter().map(|r| r.encoder_depth as f64).collect::<Vec<_>>(),
    )
    .ok();
    let tails: Vec<&TailRow> = agg.tail.iter().filter(|r| r.k.is_some_and(|k| k > 0.0)).collect();
    let tail_fit = fit_powerlaw(
        &tails.iter().map(|r| r.n_sites as f64).collect::<Vec<_>>(),
        &tails.iter().map(|r| r.k.unwrap_or(0.0)).collect::<Vec<_>>(),
    )
    .ok();
    let pite_row = |gapless: bool, target: &str, reference: f64| {
        let row = pick_pite_row(agg, gapless);
        ScalingRow {
            target: target.into(),
            quantity: "D_raw at chemical accuracy vs N".into(),
            reference_exponent: reference,
            fitted_exponent: row.map(|r| r.beta),
            detail: row.map_or_else(
                || "no power-law fit".into(),
                |r| format!("h_z={} {} {}: {} sizes, R2_log={:.3}", r.field, r.initializer, r.backend, r.points, r.r2_log),
            ),
        }
    };
    let rows = vec![
        ScalingRow {
            target: "encoder to L*".into(),
            quantity: "encoding-circuit depth at the stopping layer vs N".into(),
            reference_exponent: 1.0,
            fitted_exponent: enc_fit.as_ref().map(|f| f.beta),
            detail: enc_fit.as_ref().map_or("no power-law fit".into(), |f| format!("{} points pooled over fields", f.points)),
        },
        ScalingRow {
            target: "encoder tail".into(),
            quantity: "-dln k/dln N (extra layers ~ N^x log(N/eps))".into(),
            reference_exponent: 5.0,
            fitted_exponent: tail_fit.as_ref().map(|f| -f.beta),
            detail: tail_fit.as_ref().map_or("no tail fits".into(), |f| format!("{} points pooled over fields", f.points)),
        },
        pite_row(true, "PITE gapless (h_z = 0)", 3.0),
        pite_row(false, "PITE gapped (h_z != 0)", 1.5),
    ];
    for r in &rows {
        if r.fitted_exponent.is_none() {
            warnings.push(format!("{}: {}", r.target, r.detail));
        }
    }
    Report { tool_version: TOOL_VERSION.into(), depth_convention: DEPTH_CONVENTION.into(), rows, warnings }
}

pub fn render_report(report: &Report) -> String {
    let mut out = format!("scaling summary ({}, depth {})\n\n", report.tool_version, report.depth_convention);
    out.push_str(&format!("{:<24} {:>10} {:>10}  {}\n", "target", "reference", "fitted", "quantity"));
    for r in &report.rows {
        let fitted = r.fitted_exponent.map_or("-".to_string(), |b| format!("{b:.3}"));
        out.push_str(&format!("{:<24} {:>10} {:>10}  {}\n", r.target, r.reference_exponent, fitted, r.quantity));
    }
    if !report.warnings.is_empty() {
        out.push_str("\nwarnings:\n");
        for w in &report.warnings {
            out.push_str(&format!("  - {w}\n"));
        }
    }
    out
}

pub fn write_report(root: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(root)?;
    io::write_json(&root.join("report.json"), report)?;
    io::write_csv(&root.join("report.csv"), &report.rows)?;
    fs::write(root.join("report.txt"), render_report(report))?;
    Ok(())
}

pub fn write_aggregates(root: &Path, agg: &Aggregates) -> Result<()> {
    fs::create_dir_all(root)?;
    io::write_csv_with_header(
        &root.join("lstar.csv"),
        &["field", "n_sites", "l_star", "crossing", "layers_built", "depth_used", "if_per_site", "encoder_depth"],
        &agg.lstar,
    )?;
    io::write_csv_with_header(
        &root.join("tail.csv"),
        &["field", "n_sites", "window_lo", "window_hi", "c", "a", "k", "status"],
        &agg.tail,
    )?;
    io::write_csv_with_header(
        &root.join("resources.csv"),
        &["field", "n_sites", "initializer", "backend", "w0", "reached", "d_raw", "d_post", "p_cum", "any_cap_hit"],
        &agg.resources,
    )?;
    io::write_csv_with_header(
        &root.join("powerlaw.csv"),
        &["field", "initializer", "backend", "alpha", "beta", "stderr", "r2_log", "points"],
        &agg.powerlaw,
    )?;
    io::write_json(&root.join("aggregates.json"), agg)
}

/// Aggregate and report an existing result tree.
pub fn report_tree(root: &Path) -> Result<(Aggregates, Report)> {
    let points = load_tree(root)?;
    let agg = aggregate(&points);
    let report = build_report(&agg);
    write_aggregates(root, &agg)?;
    write_report(root, &report)?;
    Ok((agg, report))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointState {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStatus {
    pub n_sites: usize,
    pub field: f64,
    pub state: PointState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: ScanConfig,
    /// Settings that are fixed in code rather than configured.
    pub defaults: BTreeMap<String, serde_json::Value>,
    pub points: Vec<PointStatus>,
    /// SHA-256 of every file in the result tree except the manifest.
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn decided_defaults() -> BTreeMap<String, serde_json::Value> {
    use serde_json::json;
    let dmrg = DmrgOptions::default();
    BTreeMap::from([
        ("bit_convention".into(), json!(BIT_CONVENTION)),
        ("depth_convention".into(), json!(DEPTH_CONVENTION)),
        ("chemical_accuracy".into(), json!(CHEMICAL_ACCURACY)),
        ("max_trotter_reps".into(), json!(MAX_REPS)),
        ("trajectory_stop_margin".into(), json!(STOP_MARGIN)),
        ("tail_weighting".into(), json!(TailWeighting::default())),
        ("logistic_min_points".into(), json!(MIN_LOGISTIC_POINTS)),
        ("sensitivity_thresholds".into(), json!(SENSITIVITY_THRESHOLDS)),
        ("dmrg_max_sweeps".into(), json!(dmrg.max_sweeps)),
        ("dmrg_energy_tol".into(), json!(dmrg.e_tol)),
        ("lanczos_tol".into(), json!(lanczos().tol)),
        ("auto_layer_rule".into(), json!("stop at max(N, 3*crossing) layers, at most 4N")),
        ("crossing_interpolation".into(), json!("log10(dE) linear in cumulative depth")),
    ])
}

/// Result of [`run_scan`].
#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub manifest: RunManifest,
    pub aggregates: Aggregates,
    pub report: Report,
    /// Points taken over from an earlier run.
    pub reused: usize,
}

impl ScanOutcome {
    pub fn failed(&self) -> usize {
        self.manifest.points.iter().filter(|p| p.state == PointState::Failed).count()
    }
}

/// Configure the scan worker pool from [`WORKERS_ENV`], if set.
pub fn init_workers_from_env() -> Result<Option<usize>> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(None) };
    let n: usize = v.trim().parse().map_err(|_| Error::config(WORKERS_ENV, format!("`{v}` is not a worker count")))?;
    if n == 0 {
        return Err(Error::config(WORKERS_ENV, "worker count must be positive"));
    }
    crate::par::init_workers(n);
    Ok(Some(n))
}

/// Run every `(N, h_z)` point, reusing finished ones, then aggregate, report
/// and write the manifest. Point failures are recorded, not propagated.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanOutcome> {
    cfg.validate()?;
    let root = cfg.output.clone();
    fs::create_dir_all(&root)?;
    fs::write(root.join("config.toml"), cfg.to_toml()?)?;
    let grid: Vec<(usize, f64)> =
        cfg.n_sites.iter().flat_map(|&n| cfg.fields.iter().map(move |&f| (n, f))).collect();
    let results = crate::par::map_items(grid.clone(), |(n, f)| match resume_point(cfg, n, f, &root) {
        Some(p) => (Ok(p), true),
        None => (run_point(cfg, n, f, &root), false),
    });
    let mut statuses = Vec::new();
    let mut completed = Vec::new();
    let mut reused = 0;
    for ((n, f), (res, was_reused)) in grid.into_iter().zip(results) {
        match res {
            Ok(p) => {
                reused += was_reused as usize;
                statuses.push(PointStatus { n_sites: n, field: f, state: PointState::Completed, error: None });
                completed.push(p);
            }
            Err(e) => {
                statuses.push(PointStatus { n_sites: n, field: f, state: PointState::Failed, error: Some(e.to_string()) })
            }
        }
    }
    let mut aggregates = aggregate(&completed);
    for s in statuses.iter().filter(|s| s.state == PointState::Failed) {
        aggregates.warnings.push(format!("N={} h_z={} failed: {}", s.n_sites, s.field, s.error.as_deref().unwrap_or("")));
    }
    let report = build_report(&aggregates);
    write_aggregates(&root, &aggregates)?;
    write_report(&root, &report)?;
    let files = checksum_dir(&root, MANIFEST_FILE)?;
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        config: cfg.clone(),
        defaults: decided_defaults(),
        points: statuses,
        files,
    };
    io::write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(ScanOutcome { manifest, aggregates, report, reused })
}
