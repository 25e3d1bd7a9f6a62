mod commands;
mod model;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semistable_core::sim::SmallJumpPolicy;

use commands::{Budget, Outcome, PathOptions, Status};
use output::{Emitter, Format, Header};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid model file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("model rejected: {0}")]
    Validation(semistable_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Core(semistable_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Parse(_) | Self::Validation(_) | Self::Usage(_) => 2,
            Self::Core(semistable_core::Error::SlopeUnstable(_)) => 3,
            Self::Core(semistable_core::Error::InvalidInput(_)) => 2,
            Self::Io(_) | Self::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "semistable-lab",
    version,
    about = "Spectral, dimension and path diagnostics for operator semistable Lévy processes"
)]
struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "SEMISTABLE_LAB_WORKERS")]
    workers: Option<usize>,
    /// Exponent slack for the envelope and resolvent scans.
    #[arg(long, global = true, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, global = true)]
    r_min: Option<f64>,
    #[arg(long, global = true)]
    r_max: Option<f64>,
    #[arg(long, global = true)]
    r_points: Option<usize>,
    /// Sample budget (directions, shells or Monte Carlo draws, per command).
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Omit the wall-clock field so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct QArgs {
    #[arg(long, default_value_t = 0.1)]
    q_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    q_min: f64,
    #[arg(long, default_value_t = 6)]
    q_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Policy {
    GaussianSubstitute,
    Drop,
}

#[derive(Debug, Clone, clap::Args)]
struct PathArgs {
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1 << 17)]
    steps: usize,
    /// Jump threshold; chosen from the step size when absent.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Policy::GaussianSubstitute)]
    policy: Policy,
}

impl PathArgs {
    fn options(&self) -> PathOptions {
        PathOptions {
            t_max: self.t_max,
            steps: self.steps,
            delta: self.delta,
            policy: match self.policy {
                Policy::GaussianSubstitute => SmallJumpPolicy::GaussianSubstitute,
                Policy::Drop => SmallJumpPolicy::Drop,
            },
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral decomposition of the exponent and its adjoint.
    Decompose,
    /// Check that the model defines a valid exponent.
    Validate,
    /// Tabulate ψ on radial lines.
    Psi,
    /// Envelope and resolvent scans against the anisotropy norm.
    Bounds,
    /// Closed-form dimensions and recurrence.
    Dims,
    /// Range dimension from the index integral.
    ProbeRange,
    /// Graph dimension from the index integral.
    ProbeGraph,
    /// Packing dimension from the occupation profile.
    ProbePacking,
    /// Recurrence from the resolvent integral.
    ProbeRecurrence(QArgs),
    /// Recurrence and range dimension of the two-regime density law.
    Example36(QArgs),
    /// Simulate a path on a uniform grid.
    Simulate(PathArgs),
    /// Box-counting dimensions of a simulated path.
    Boxdim {
        #[command(flatten)]
        path: PathArgs,
        #[arg(long, default_value_t = 2)]
        j_lo: i32,
        #[arg(long, default_value_t = 14)]
        j_hi: i32,
    },
    /// All diagnostics at moderate budgets, with agreement checks.
    Report(QArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Decompose => "decompose",
            Self::Validate => "validate",
            Self::Psi => "psi",
            Self::Bounds => "bounds",
            Self::Dims => "dims",
            Self::ProbeRange => "probe-range",
            Self::ProbeGraph => "probe-graph",
            Self::ProbePacking => "probe-packing",
            Self::ProbeRecurrence(_) => "probe-recurrence",
            Self::Example36(_) => "example36",
            Self::Simulate(_) => "simulate",
            Self::Boxdim { .. } => "boxdim",
            Self::Report(_) => "report",
        }
    }
}

fn q_from(a: &QArgs) -> Result<Vec<f64>, CliError> {
    commands::q_list(a.q_max, a.q_min, a.q_points)
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let path = cli
        .model
        .as_ref()
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let m = model::load(path)?;
    let b = Budget {
        seed: cli.seed,
        epsilon: cli.epsilon,
        r_min: cli.r_min,
        r_max: cli.r_max,
        r_points: cli.r_points,
        samples: cli.samples,
    };
    let outcome: Outcome = match &cli.command {
        Command::Decompose => commands::decompose_cmd(&m)?,
        Command::Validate => commands::validate_cmd(&m)?,
        Command::Psi => commands::psi_cmd(&m, &b)?,
        Command::Bounds => commands::bounds_cmd(&m, &b)?,
        Command::Dims => commands::dims_cmd(&m)?,
        Command::ProbeRange => commands::probe_index_cmd(&m, &b, false)?,
        Command::ProbeGraph => commands::probe_index_cmd(&m, &b, true)?,
        Command::ProbePacking => commands::probe_packing_cmd(&m, &b)?,
        Command::ProbeRecurrence(q) => commands::probe_recurrence_cmd(&m, &b, &q_from(q)?)?,
        Command::Example36(q) => commands::example36_cmd(&m, &b, &q_from(q)?)?,
        Command::Simulate(p) => commands::simulate_cmd(&m, &b, &p.options())?,
        Command::Boxdim { path, j_lo, j_hi } => commands::boxdim_cmd(&m, &b, &path.options(), *j_lo, *j_hi)?,
        Command::Report(q) => commands::report_cmd(&m, &b, &q_from(q)?)?,
    };
    let emitter = Emitter {
        out: cli.out.clone(),
        format: cli.format,
        timestamp: !cli.no_timestamp,
    };
    let header = Header {
        command: cli.command.name(),
        model_hash: &m.hash,
        model_kind: m.kind,
        seed: cli.seed,
    };
    emitter.emit(&header, outcome.artifact)?;
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Inconclusive) => ExitCode::from(3),
        Ok(Status::ValidationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
