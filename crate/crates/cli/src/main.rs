//! `semiflex`: experiments for the discrete gradient + Laplacian interface model.
//!
//! Exit codes: 0 ok, 2 usage, 3 numerical failure, 4 IO.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::KappaRule;

/// Invalid flags or configuration (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

/// Reading or writing files failed (exit code 4).
#[derive(Debug)]
pub struct IoFailure(pub std::io::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

impl std::fmt::Display for IoFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for IoFailure {}

impl From<std::io::Error> for IoFailure {
    fn from(e: std::io::Error) -> Self {
        IoFailure(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "semiflex", version, about = "Discrete gradient + Laplacian interface model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate d=1 random-walk trajectories (CSV per kappa and an SVG overlay).
    Trajectories(TrajectoriesArgs),
    /// Exact and Monte Carlo pairing variances against their continuum limits.
    PhaseScan(PhaseScanArgs),
    /// Green's function of the model on Λ_N.
    Green(GreenArgs),
    /// Exact samples of the field.
    Sample(SampleArgs),
    /// Manufactured-solution error envelope report.
    Converge(ConvergeArgs),
    /// Smallest eigenvalues and Weyl fit of a discrete operator.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig1,
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Box,
    Disc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    General,
    Chain,
}

#[derive(Debug, Args)]
pub struct TrajectoriesArgs {
    /// Parameter set: fig1 (N=10^4, four kappas) or fig2 (N=10^3, three kappas).
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Walk length (overrides the preset).
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Comma-separated kappa rules (overrides the preset).
    #[arg(long, value_delimiter = ',')]
    pub kappa: Vec<KappaRule>,
    #[arg(long, default_value_t = 5)]
    pub paths: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// β/κ used to map kappa to the walk parameters.
    #[arg(long = "beta-per-kappa", default_value_t = 1.0)]
    pub beta_per_kappa: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::CsvSvg)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PhaseScanArgs {
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long = "kappa-rule")]
    pub kappa_rule: KappaRule,
    /// Test function (only `sin`: Π √2 sin(πx_i)).
    #[arg(long, default_value = "sin")]
    pub f: String,
    /// Force a scaling regime instead of classifying by κ/(2dN²).
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GreenArgs {
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub kappa: KappaRule,
    #[arg(long, value_enum, default_value_t = DomainArg::Box)]
    pub domain: DomainArg,
    #[arg(long, value_enum, default_value_t = ClassArg::General)]
    pub classification: ClassArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub kappa: KappaRule,
    #[arg(long, value_enum, default_value_t = DomainArg::Box)]
    pub domain: DomainArg,
    #[arg(long, value_enum, default_value_t = ClassArg::General)]
    pub classification: ClassArg,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write pairings with `sin` to this file.
    #[arg(long)]
    pub pairings: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// bilaplacian, mixed or neg-laplacian.
    #[arg(long)]
    pub op: String,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// ρ rule, e.g. `h`, `1+h`, `h^2`, `sqrt(h)`; defaults per operator.
    #[arg(long, visible_aliases = ["rho1", "rho2", "rho3"])]
    pub rho: Option<String>,
    /// `a..b` (powers of two) or a comma list of N = 1/h.
    #[arg(long)]
    pub ladder: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// neg-laplacian, bilaplacian or mixed.
    #[arg(long)]
    pub op: String,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = DomainArg::Box)]
    pub domain: DomainArg,
    #[arg(long, value_enum, default_value_t = ClassArg::General)]
    pub classification: ClassArg,
    /// Also write the Weyl report to this file.
    #[arg(long)]
    pub weyl: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<IoFailure>().is_some() || cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<semiflex::Error>() {
            return match e {
                semiflex::Error::InvalidInput(_) | semiflex::Error::InsufficientLadder { .. } => 2,
                _ => 3,
            };
        }
    }
    3
}

fn run(args: Vec<String>) -> anyhow::Result<()> {
    let args = config::expand_args(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Usage(e.to_string()).into()),
    };
    config::apply_thread_cap()?;
    match cli.command {
        Command::Trajectories(a) => commands::trajectories(&a),
        Command::PhaseScan(a) => commands::phase_scan(&a),
        Command::Green(a) => commands::green(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Converge(a) => commands::converge(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
