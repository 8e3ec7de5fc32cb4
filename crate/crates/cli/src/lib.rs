//! `netmorph` commands: transform, verify, extract, analyze.
//!
//! Exit codes: 0 success, 1 verification failed, 2 parse or I/O error,
//! 3 infeasible parameters, 4 unsupported dimension.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use netmorph_core::classify::{self, RuleSystem};
use netmorph_core::geometry::{Hypercube, SimplicialCover};
use netmorph_core::pwl1d::{self, PwlFunction1D};
use netmorph_core::regress::{self, Mode, TransformOptions, TransformReport};
use netmorph_core::verify::{self, Compare, Execution, MismatchReport};
use netmorph_core::{Error, Network};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_UNSUPPORTED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "netmorph", version, about = "Wide and deep rewrites of ReLU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rebuild a network, PWL function, cover or rule system as a wide or deep network.
    Transform(RunConfig),
    /// Compare two networks by Monte Carlo mismatch measure.
    Verify(RunConfig),
    /// Extract the PWL function (1D) or simplicial cover (2D) of a network.
    Extract(RunConfig),
    /// Width/depth estimator table as CSV.
    Analyze(AnalyzeConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Wide,
    Deep,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Wide => Mode::Wide,
            ModeArg::Deep => Mode::Deep,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Input document; verify takes two.
    #[arg(long = "in", required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "wide")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "regression")]
    pub task: Task,
    #[arg(long, default_value_t = 0.02)]
    pub delta: f64,
    /// Overrides the δ-driven choice of μ.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Half-width of the domain box `[-B, B]^D`.
    #[arg(long = "B", default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = verify::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = verify::DEFAULT_TOL)]
    pub tol: f64,
    /// Where to write the report; it always goes to stdout as well.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Samples used to discover linear regions.
    #[arg(long, default_value_t = 100_000)]
    pub region_samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeConfig {
    /// Single N^Σ value; overrides the range.
    #[arg(long = "n-sigma")]
    pub n_sigma: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub from: u32,
    #[arg(long, default_value_t = 100)]
    pub to: u32,
    #[arg(long = "L", default_value_t = 4.0)]
    pub l: f64,
    #[arg(long = "n", default_value_t = 5.0)]
    pub n: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Infeasible { .. }) => EXIT_INFEASIBLE,
            CliError::Core(Error::Unsupported(_)) => EXIT_UNSUPPORTED,
            _ => EXIT_PARSE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Exit code plus the text destined for stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_file(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    }
}

/// The kinds of document `--in` may name.
#[derive(Debug, Clone)]
pub enum InputDoc {
    Network(Network),
    Pwl(PwlFunction1D),
    Cover(SimplicialCover),
    Rules(RuleSystem),
}

pub fn load_input(path: &Path) -> CliResult<InputDoc> {
    let text = read(path)?;
    let probe: Value = serde_json::from_str(&text).map_err(|e| {
        with_file(
            Error::Parse {
                location: format!("line {} column {}", e.line(), e.column()),
                message: e.to_string(),
            },
            path,
        )
    })?;
    let doc = if probe.get("neurons").is_some() {
        Network::from_json(&text).map(InputDoc::Network)
    } else if probe.get("breakpoints").is_some() {
        serde_json::from_value::<PwlFunction1D>(probe)
            .map_err(|e| Error::Parse {
                location: "pwl".into(),
                message: e.to_string(),
            })
            .and_then(|f| f.validate().map(|_| InputDoc::Pwl(f)))
    } else if probe.get("pieces").is_some() {
        SimplicialCover::from_json(&text).map(InputDoc::Cover)
    } else if probe.get("rules").is_some() {
        RuleSystem::from_json(&text).map(InputDoc::Rules)
    } else {
        Err(Error::Parse {
            location: "root".into(),
            message: "expected a network, pwl, cover or rule-system document".into(),
        })
    };
    doc.map_err(|e| with_file(e, path).into())
}

fn load_network(path: &Path) -> CliResult<Network> {
    match load_input(path)? {
        InputDoc::Network(n) => Ok(n),
        _ => Err(Error::Parse {
            location: path.display().to_string(),
            message: "expected a network document".into(),
        }
        .into()),
    }
}

fn options(cfg: &RunConfig) -> TransformOptions {
    TransformOptions {
        b: cfg.b,
        mu: cfg.mu,
        region_samples: cfg.region_samples,
        seed: cfg.seed,
    }
}

fn emit(cfg: &RunConfig, report: &impl Serialize) -> CliResult<String> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    if let Some(p) = &cfg.report {
        write(p, &text)?;
    }
    Ok(text)
}

fn single_input(cfg: &RunConfig) -> CliResult<&Path> {
    match cfg.input.as_slice() {
        [p] => Ok(p),
        _ => Err(Error::Input(format!("expected one --in, got {}", cfg.input.len())).into()),
    }
}

#[derive(Debug, Serialize)]
struct ClassifyReport {
    task: Task,
    mode: Mode,
    simplices: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    metrics: netmorph_core::StructureMetrics,
}

pub fn cmd_transform(cfg: &RunConfig) -> CliResult<Outcome> {
    let path = single_input(cfg)?;
    let mode = Mode::from(cfg.mode);
    let opts = options(cfg);
    let (network, text) = match (cfg.task, load_input(path)?) {
        (Task::Regression, InputDoc::Network(net)) => {
            let t = regress::transform(&net, mode, cfg.delta, &opts)?;
            (t.network, emit(cfg, &t.report)?)
        }
        (Task::Regression, InputDoc::Pwl(f)) => {
            let t = regress::transform_pwl(&f, mode, None)?;
            (t.network, emit(cfg, &t.report)?)
        }
        (Task::Regression, InputDoc::Cover(c)) => {
            let t = regress::transform_cover(&c, mode, cfg.delta, &opts)?;
            (t.network, emit(cfg, &t.report)?)
        }
        (Task::Classification, InputDoc::Network(net)) => {
            let c = classify::classify_transform(&net, mode, cfg.delta, &opts)?;
            let r = ClassifyReport {
                task: cfg.task,
                mode,
                simplices: c.simplices,
                mu: c.mu,
                metrics: c.network.structure_metrics(),
            };
            (c.network, emit(cfg, &r)?)
        }
        (Task::Classification, InputDoc::Rules(rs)) => {
            let simplices = rs.simplices()?;
            let (net, mu) = match mode {
                Mode::Wide => (classify::build_step_wide(rs.d, &simplices)?, None),
                Mode::Deep => {
                    let mu = match cfg.mu {
                        Some(m) => m,
                        None => classify::step_mu(rs.d, cfg.b, simplices.len(), cfg.delta)?,
                    };
                    (classify::build_step_deep(rs.d, &simplices, mu)?, Some(mu))
                }
            };
            let r = ClassifyReport {
                task: cfg.task,
                mode,
                simplices: simplices.len(),
                mu,
                metrics: net.structure_metrics(),
            };
            (net, emit(cfg, &r)?)
        }
        (task, _) => {
            return Err(Error::Input(format!("this document type cannot be used with task {task:?}")).into());
        }
    };
    if let Some(out) = &cfg.out {
        write(out, &(network.to_json() + "\n"))?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        stdout: text,
    })
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    #[serde(flatten)]
    mismatch: MismatchReport,
    delta: f64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_max_error: Option<f64>,
}

pub fn cmd_verify(cfg: &RunConfig) -> CliResult<Outcome> {
    let [pa, pb] = cfg.input.as_slice() else {
        return Err(Error::Input(format!("verify needs two --in, got {}", cfg.input.len())).into());
    };
    let a = load_network(pa)?;
    let b = load_network(pb)?;
    let d = a.input_dim();
    if b.input_dim() != d {
        return Err(Error::Input(format!("input_dim {d} vs {}", b.input_dim())).into());
    }
    let domain = Hypercube::new(vec![-cfg.b; d], vec![cfg.b; d])?;
    let cmp = match cfg.task {
        Task::Regression => Compare::Value { tol: cfg.tol },
        Task::Classification => Compare::Label,
    };
    let mismatch = verify::mismatch_measure_with(&a, &b, &domain, cfg.samples, cfg.seed, cmp, Execution::Parallel)?;
    let exact_max_error = if d == 1 && cfg.task == Task::Regression {
        Some(verify::exact_compare_1d(&a, &b, cfg.b, 10_000)?)
    } else {
        None
    };
    let pass = mismatch.absolute_measure < cfg.delta;
    let r = VerifyReport {
        mismatch,
        delta: cfg.delta,
        pass,
        exact_max_error,
    };
    Ok(Outcome {
        code: if pass { EXIT_OK } else { EXIT_VERIFY_FAILED },
        stdout: emit(cfg, &r)?,
    })
}

pub fn cmd_extract(cfg: &RunConfig) -> CliResult<Outcome> {
    let net = load_network(single_input(cfg)?)?;
    let text = match net.input_dim() {
        1 => serde_json::to_string_pretty(&pwl1d::extract_pwl(&net, cfg.b)?).expect("pwl serializes"),
        2 => regress::cover_of(&net, &options(cfg))?.to_json(),
        d => return Err(Error::Unsupported(format!("extraction for input_dim {d}")).into()),
    } + "\n";
    if let Some(out) = &cfg.out {
        write(out, &text)?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        stdout: text,
    })
}

/// CSV rows `n_sigma,width,depth`.
pub fn cmd_analyze(cfg: &AnalyzeConfig) -> CliResult<Outcome> {
    let values: Vec<f64> = match cfg.n_sigma {
        Some(v) => vec![v],
        None => {
            if cfg.from == 0 || cfg.from > cfg.to {
                return Err(Error::Input(format!("bad range {}..={}", cfg.from, cfg.to)).into());
            }
            (cfg.from..=cfg.to).map(f64::from).collect()
        }
    };
    let mut out = String::from("n_sigma,width,depth\n");
    for v in values {
        let (w, d) = verify::width_depth_estimate(v, cfg.l, cfg.n, cfg.alpha)?;
        out.push_str(&format!("{v},{w},{d}\n"));
    }
    Ok(Outcome {
        code: EXIT_OK,
        stdout: out,
    })
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Transform(c) => cmd_transform(c),
        Command::Verify(c) => cmd_verify(c),
        Command::Extract(c) => cmd_extract(c),
        Command::Analyze(c) => cmd_analyze(c),
    }
}

/// Reads a transform report back, e.g. to pick a comparison tolerance.
pub fn read_transform_report(path: &Path) -> CliResult<TransformReport> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    })
}
