use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsprep::io;
use gsprep::pipeline::{self, point_dir, Initializer, LayerRule, ScanConfig};
use gsprep::pite::{Backend, CalibrationMetric};
use gsprep::Error;

/// Exit status classes.
const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_POINT: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "gsprep", version, about = "DMRG, MPS encoding and scheduled PITE for Heisenberg chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-state MPS by two-site DMRG.
    Dmrg(StageArgs),
    /// Disentangling layers, rank diagnostics and fits from an existing MPS file.
    Encode(StageArgs),
    /// PITE trajectories from existing DMRG and encoder outputs.
    Pite(StageArgs),
    /// All points of a scan, then aggregates, report and manifest.
    Scan(ScanArgs),
    /// Logistic and tail fits of an encoding diagnostics CSV.
    Fit(FitArgs),
    /// Aggregates and scaling report of an existing result tree.
    Report {
        /// Result directory of a scan.
        dir: PathBuf,
    },
}

/// Flags mirroring the configuration keys; each overrides the config file.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config, or a `manifest.json` to replay a run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_sites: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    fields: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    initializers: Option<Vec<Initializer>>,
    #[arg(long, value_delimiter = ',')]
    backends: Option<Vec<Backend>>,
    #[arg(long)]
    coupling: Option<f64>,
    /// DMRG bond dimension (default: N).
    #[arg(long)]
    chi: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    dtau_min_ratio: Option<f64>,
    #[arg(long)]
    layer_rule: Option<LayerRule>,
    #[arg(long)]
    fixed_layers: Option<usize>,
    #[arg(long)]
    rank_threshold: Option<f64>,
    #[arg(long)]
    calibration: Option<CalibrationMetric>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> gsprep::Result<ScanConfig> {
        let mut c = match &self.config {
            Some(p) => ScanConfig::load(p)?,
            None => ScanConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { c.$f = v.clone(); } )*};
        }
        set!(n_sites, fields, initializers, backends, coupling, epsilon, m0, dtau_min_ratio, layer_rule);
        set!(rank_threshold, calibration, seed, output);
        if self.chi.is_some() {
            c.chi = self.chi;
        }
        if self.fixed_layers.is_some() {
            c.fixed_layers = self.fixed_layers;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct StageArgs {
    /// Chain length.
    #[arg(long)]
    n: usize,
    /// Staggered field strength.
    #[arg(long, allow_hyphen_values = true)]
    field: f64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct FitArgs {
    /// `encoding.csv` written by the encode stage.
    diagnostics: PathBuf,
    /// Chain length the series belongs to.
    #[arg(long)]
    n: usize,
    /// Inclusive tail window `LO,HI` (default: the built-in window for N).
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Write the fits as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Input(String),
    Point(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => EXIT_INTERNAL,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Point(_) => EXIT_POINT,
            Failure::Input(_) => EXIT_INPUT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Input(m) | Failure::Point(m) | Failure::Internal(m) => m,
        }
    }
}

/// Classify a library error raised while setting up a command.
fn setup_failure(e: Error) -> Failure {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) => Failure::Config(e.to_string()),
        Error::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => Failure::Input(e.to_string()),
        Error::Format(_) | Error::Json(_) => Failure::Input(e.to_string()),
        _ => Failure::Internal(e.to_string()),
    }
}

/// Classify an error raised while computing a point.
fn stage_failure(e: Error) -> Failure {
    match setup_failure(e) {
        Failure::Internal(m) => Failure::Point(m),
        f => f,
    }
}

fn stage_config(args: &StageArgs) -> Result<ScanConfig, Failure> {
    let mut cfg = args.config.resolve().map_err(setup_failure)?;
    cfg.n_sites = vec![args.n];
    cfg.fields = vec![args.field];
    cfg.validate().map_err(setup_failure)?;
    Ok(cfg)
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Input(format!("missing input {}; run the upstream command first", path.display())))
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Dmrg(a) => {
            let cfg = stage_config(&a)?;
            let dir = point_dir(&cfg.output, a.n, a.field);
            let s = pipeline::stage_dmrg(&cfg, a.n, a.field, &dir).map_err(stage_failure)?;
            eprintln!("wrote {}", dir.join("mps.bin").display());
            print_json(&s)
        }
        Command::Encode(a) => {
            let cfg = stage_config(&a)?;
            let dir = point_dir(&cfg.output, a.n, a.field);
            require(&dir.join("mps.bin"))?;
            let s = pipeline::stage_encode(&cfg, a.n, a.field, &dir).map_err(stage_failure)?;
            eprintln!("wrote {}", dir.join("encoding.csv").display());
            print_json(&s)
        }
        Command::Pite(a) => {
            let cfg = stage_config(&a)?;
            let dir = point_dir(&cfg.output, a.n, a.field);
            for f in ["mps.bin", "dmrg.json", "layers.bin", "encoding.json"] {
                require(&dir.join(f))?;
            }
            let s = pipeline::stage_pite(&cfg, a.n, a.field, &dir).map_err(stage_failure)?;
            print_json(&s)
        }
        Command::Scan(a) => {
            let cfg = a.config.resolve().map_err(setup_failure)?;
            cfg.validate().map_err(setup_failure)?;
            if a.dump_config {
                print!("{}", cfg.to_toml().map_err(setup_failure)?);
                return Ok(());
            }
            if let Some(n) = pipeline::init_workers_from_env().map_err(setup_failure)? {
                eprintln!("using {n} workers");
            }
            let out = pipeline::run_scan(&cfg).map_err(setup_failure)?;
            print!("{}", pipeline::render_report(&out.report));
            eprintln!(
                "{} points, {} reused, {} failed; results in {}",
                out.manifest.points.len(),
                out.reused,
                out.failed(),
                cfg.output.display()
            );
            if out.failed() > 0 {
                return Err(Failure::Point(format!("{} of {} points failed", out.failed(), out.manifest.points.len())));
            }
            Ok(())
        }
        Command::Fit(a) => {
            let rows: Vec<io::EncodingRow> = io::read_csv(&a.diagnostics).map_err(setup_failure)?;
            let window = match a.window.as_deref() {
                Some([lo, hi]) if lo < hi => Some((*lo, *hi)),
                Some(_) => return Err(Failure::Config("--window needs two values LO,HI with LO < HI".into())),
                None => gsprep::fits::default_tail_window(a.n),
            };
            let fits = pipeline::fit_series(&rows, a.n, window, a.epsilon);
            match a.out {
                Some(p) => io::write_json(&p, &fits).map_err(setup_failure),
                None => print_json(&fits),
            }
        }
        Command::Report { dir } => {
            if !dir.is_dir() {
                return Err(Failure::Input(format!("{} is not a directory", dir.display())));
            }
            let (_, report) = pipeline::report_tree(&dir).map_err(setup_failure)?;
            print!("{}", pipeline::render_report(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
