//! `ctost`: equivalence assessment from the command line.
//!
//! Exit codes: 0 ran (the verdict is in the payload), 2 malformed input,
//! 3 a solver did not converge. Errors go to stderr as one JSON object.

mod commands;
mod json;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctost::Method;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ctost",
    version,
    about = "Corrected two one-sided tests for average equivalence",
    after_help = "Defaults: c0 = log(1.25) = 0.22314355131420976 (log scale), alpha0 = 0.05.\nExit codes: 0 success (verdict in the output), 2 malformed input, 3 non-convergence."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Tost,
    AlphaTost,
    DeltaTost,
    Ctost,
    CtostStar,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Tost => Method::Tost,
            MethodArg::AlphaTost => Method::AlphaTost,
            MethodArg::DeltaTost => Method::DeltaTost,
            MethodArg::Ctost => Method::Ctost,
            MethodArg::CtostStar => Method::CtostStar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Raw,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    UnivariateSweep,
    MvtKappa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Quadrature,
    MonteCarlo,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Nominal level α₀.
    #[arg(long, default_value_t = 0.05, global = true)]
    pub alpha0: f64,
    /// Equivalence margin c₀ on the log scale; the default is log(1.25).
    #[arg(long, default_value_t = ctost::DEFAULT_C0, global = true)]
    pub c0: f64,
    /// Master seed for every randomized computation.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Convergence tolerance of the multivariate fixed point (global size residual).
    #[arg(long, default_value_t = 1e-6, global = true)]
    pub tol: f64,
    /// Cap on outer (λ search) iterations of the multivariate fixed point.
    #[arg(long, default_value_t = ctost::mvt::DEFAULT_MAX_OUTER, global = true)]
    pub max_outer: usize,
    /// Calibration table for cTOST* lookups; flag beats environment beats none.
    #[arg(long, env = "CTOST_TABLE_PATH", global = true)]
    pub table_path: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
}

/// Where the summary comes from.
#[derive(Debug, Clone, Args)]
pub struct Input {
    /// Summary JSON (`.json`) or paired measurements CSV (`subject,dimension,reference,test`).
    #[arg(long, short = 'i')]
    pub input: Option<PathBuf>,
    /// Scale of paired CSV measurements; raw values are log-transformed.
    #[arg(long, value_enum, default_value_t = ScaleArg::Raw)]
    pub scale: ScaleArg,
    /// Use the bundled four-layer skin case study (K = 4, ν₂ = 11).
    #[arg(long)]
    pub case_study: bool,
    /// Univariate estimate θ̂ (with --sigma1-hat and --nu2).
    #[arg(long, allow_hyphen_values = true)]
    pub theta_hat: Option<f64>,
    /// Univariate standard error σ̂₁.
    #[arg(long)]
    pub sigma1_hat: Option<f64>,
    /// Residual degrees of freedom ν₂.
    #[arg(long)]
    pub nu2: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct MethodOpts {
    /// Procedure.
    #[arg(long, value_enum, default_value_t = MethodArg::Ctost)]
    pub method: MethodArg,
    /// Use the small-sample refined cTOST* margin (univariate only).
    #[arg(long)]
    pub refined: bool,
    /// Iterate the cTOST* calibration to a fixed point instead of one step.
    #[arg(long)]
    pub iterate: bool,
    /// Wishart draws for multivariate α-TOST evaluations.
    #[arg(long, default_value_t = ctost::powerkernel::DEFAULT_WISHART_DRAWS)]
    pub draws: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GridOpts {
    /// Comma-separated σ₁ values.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2])]
    pub sigma1: Vec<f64>,
    /// Comma-separated ν₂ values.
    #[arg(long, value_delimiter = ',', default_values_t = [10u32, 20, 40])]
    pub nu2: Vec<u32>,
    /// Comma-separated procedures.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Tost, MethodArg::AlphaTost, MethodArg::Ctost])]
    pub method: Vec<MethodArg>,
    /// Evaluate this (t, c) member directly instead of a procedure's adjustment (needs --c).
    #[arg(long)]
    pub t: Option<f64>,
    /// Margin c of the member given by --t.
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide equivalence for a summary or paired dataset.
    Assess {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        method: MethodOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Report the adjusted (t, c) pair, γ, α_c and solver diagnostics.
    Adjust {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        method: MethodOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Power at given θ values over a (σ₁, ν₂, method) grid, with σ̂₁ = σ₁.
    Power {
        /// Comma-separated true effects θ.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0])]
        theta: Vec<f64>,
        #[command(flatten)]
        grid: GridOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Size (power at θ = c₀) over a (σ₁, ν₂, method) grid, with σ̂₁ = σ₁.
    Size {
        #[command(flatten)]
        grid: GridOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo size/power study; CSV output is plot-ready.
    Simulate {
        #[arg(long, value_enum, default_value_t = DesignArg::UnivariateSweep)]
        design: DesignArg,
        /// Desk-scale preset (default).
        #[arg(long, conflicts_with = "full")]
        desk: bool,
        /// Full-scale preset with the published grid sizes (slow).
        #[arg(long)]
        full: bool,
        /// JSON configuration replacing the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the number of replicates per cell.
        #[arg(long)]
        replicates: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Build the cTOST* calibration table (CSV).
    Table {
        /// σ₁ 0.01..0.3 step 0.005 and ν₂ 5..100 (default when no grid is given).
        #[arg(long)]
        default_grid: bool,
        /// Comma-separated σ₁ grid (ascending).
        #[arg(long, value_delimiter = ',')]
        sigma_grid: Option<Vec<f64>>,
        /// Comma-separated ν₂ grid (ascending).
        #[arg(long, value_delimiter = ',')]
        nu_grid: Option<Vec<u32>>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Quadrature)]
        strategy: StrategyArg,
        /// Draws per cell for the Monte Carlo strategy.
        #[arg(long, default_value_t = 100_000)]
        mc_draws: usize,
        #[arg(long)]
        iterate: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Alias for `assess --case-study`.
    CaseStudy {
        #[command(flatten)]
        method: MethodOpts,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    // An exported but empty table path means "no table".
    if std::env::var_os("CTOST_TABLE_PATH").is_some_and(|v| v.is_empty()) {
        std::env::remove_var("CTOST_TABLE_PATH");
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            commands::report_error("usage", &e.to_string().trim_end().to_string(), &[]);
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let trace = match &e {
                ctost::Error::NonConvergence { trace, .. } => trace.clone(),
                _ => Vec::new(),
            };
            commands::report_error(e.kind(), &e.to_string(), &trace);
            if matches!(e, ctost::Error::NonConvergence { .. }) {
                ExitCode::from(EXIT_CONVERGENCE)
            } else {
                ExitCode::from(EXIT_INPUT)
            }
        }
    }
}
