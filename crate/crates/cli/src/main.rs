//! `mdabc` — run minimum-distance ABC experiments, compute single distances
//! and simulate benchmark datasets.
//!
//! Exit status: 0 on success, 2 when the input is invalid (unreadable or
//! malformed files, bad parameters), 1 when a computation fails.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdabc::distances::{distance, Coupling, DistanceOptions};
use mdabc::experiments::{self, SCHEMA_VERSION};
use mdabc::fmt::{g17, read_dataset_csv, write_dataset_csv};
use mdabc::measures::DEFAULT_GRID_POINTS;
use mdabc::report::{emit_report, ReportFormat};
use mdabc::{DistanceContext, DistanceKind, ExperimentConfig, ExperimentReport, ModelKind, ModelSpec, RngStream};

#[derive(Debug, Parser)]
#[command(name = "mdabc", version, about = "Minimum-distance approximate Bayesian computation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed (overrides the config's `master_seed` for `run`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: `results` for run, `.` for simulate].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads [default: available parallelism].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print results, no summaries.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run(RunArgs),
    /// Distance between the samples in two CSV files.
    Distance(DistanceArgs),
    /// Simulate a dataset from a benchmark model.
    Simulate(SimulateArgs),
    /// Print version information.
    Version,
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    n_replications: Option<usize>,
    #[arg(long)]
    sim_budget: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Hellinger,
    Cvm,
    Wasserstein,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CouplingArg {
    Equal,
    Quantile,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    #[arg(value_enum)]
    method: Method,
    y: PathBuf,
    z: PathBuf,
    /// Wasserstein order.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Kernel bandwidth for Hellinger [default: Silverman's rule on y].
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
    /// How Wasserstein pairs samples of different sizes.
    #[arg(long, value_enum, default_value_t = CouplingArg::Equal)]
    coupling: CouplingArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Mixture,
    Gk,
    Mg1,
    Sv,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mixture => ModelKind::Mixture,
            ModelArg::Gk => ModelKind::Gk,
            ModelArg::Mg1 => ModelKind::Mg1,
            ModelArg::Sv => ModelKind::Sv,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    model: ModelArg,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    theta: Vec<f64>,
    #[arg(long)]
    n: usize,
    /// Discarded leading values (SV model).
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    /// File name inside the output directory [default: `<model>.csv`].
    #[arg(long)]
    file: Option<PathBuf>,
}

/// A failure with its exit status.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<mdabc::Error> for Failure {
    fn from(e: mdabc::Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

/// Errors while reading inputs are the user's to fix.
fn input(e: mdabc::Error) -> Failure {
    match e {
        mdabc::Error::Io { .. } => Failure::Invalid(e.to_string()),
        e => e.into(),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match cli.global.threads {
        Some(0) => return fail(Failure::Invalid("--threads must be at least 1".into())),
        Some(k) => k,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return fail(Failure::Runtime(format!("cannot start worker threads: {e}"))),
    };
    let result = pool.install(|| match &cli.command {
        Command::Run(a) => cmd_run(&cli.global, a),
        Command::Distance(a) => cmd_distance(a),
        Command::Simulate(a) => cmd_simulate(&cli.global, a),
        Command::Version => {
            println!("mdabc {} (config schema {SCHEMA_VERSION})", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    match f {
        Failure::Invalid(m) => {
            eprintln!("mdabc: {m}");
            ExitCode::from(2)
        }
        Failure::Runtime(m) => {
            eprintln!("mdabc: {m}");
            ExitCode::from(1)
        }
    }
}

fn load_config(g: &Global, a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let path = &a.config;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("malformed config {}: {e}", path.display())))?;
    if let Some(seed) = g.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = a.n_replications {
        cfg.n_replications = n;
    }
    if let Some(b) = a.sim_budget {
        cfg.sampler.sim_budget = b;
    }
    cfg.validate()
        .map_err(|e| Failure::Invalid(format!("invalid config {}: {e}", path.display())))?;
    Ok(cfg)
}

fn cmd_run(g: &Global, a: &RunArgs) -> Outcome {
    let cfg = load_config(g, a)?;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let report = experiments::run(&cfg)?;
    let format = match a.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
        Format::Both => ReportFormat::Both,
    };
    let written = emit_report(&report, format, &out)?;
    if !g.quiet {
        print_summary(&report);
        println!("wrote {} files to {} in {:.1}s", written.len(), out.display(), report.elapsed_secs);
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    let names = report.parameter_names.join(" ");
    println!("posterior means ({names}):");
    for a in &report.aggregates {
        let zeta = a.zeta.map_or_else(String::new, |z| format!(" zeta={}", g17(z)));
        let means = match &a.stats {
            Some(s) => s.overall_mean.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "),
            None => "(too few successful replications)".into(),
        };
        println!("  {}{zeta} [{}/{}] {means}", a.label, a.n_success, a.n_total);
    }
}

fn cmd_distance(a: &DistanceArgs) -> Outcome {
    let y = read_dataset_csv(&a.y).map_err(input)?;
    let z = read_dataset_csv(&a.z).map_err(input)?;
    let kind = match a.method {
        Method::Hellinger => DistanceKind::Hellinger,
        Method::Cvm => DistanceKind::Cvm,
        Method::Wasserstein => DistanceKind::Wasserstein { p: a.p },
    };
    let options = DistanceOptions {
        bandwidth: a.bandwidth,
        grid_points: a.grid_points,
        coupling: match a.coupling {
            CouplingArg::Equal => Coupling::EqualLength,
            CouplingArg::Quantile => Coupling::Quantile,
        },
    };
    let ctx = DistanceContext::new(kind, &y, options)?;
    println!("{}", g17(distance(&ctx, &z)?));
    Ok(())
}

/// Output file names must stay inside the output directory.
fn contained(file: &Path) -> bool {
    file.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn cmd_simulate(g: &Global, a: &SimulateArgs) -> Outcome {
    let kind = ModelKind::from(a.model);
    if a.n == 0 {
        return Err(Failure::Invalid("--n must be positive".into()));
    }
    let file = a.file.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name())));
    if !contained(&file) {
        return Err(Failure::Invalid(format!(
            "--file {} must be a relative path inside the output directory",
            file.display()
        )));
    }
    let spec = ModelSpec::new(kind, a.n, a.n).with_burn_in(a.burn_in);
    let data = spec.simulate_observed(&a.theta, &mut RngStream::from_seed(g.seed.unwrap_or(0)))?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let path = dir.join(&file);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    write_dataset_csv(&path, &data)?;
    if !g.quiet {
        println!(
            "n={} mean={} sd={} min={} max={}",
            data.len(),
            g17(data.mean()),
            g17(data.std_dev()),
            g17(data.min()),
            g17(data.max())
        );
    }
    Ok(())
}
