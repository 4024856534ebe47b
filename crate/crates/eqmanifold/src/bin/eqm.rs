use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eqmanifold::cli::{self, Command, OutputFormat, RunConfig};

/// Riemannian geometry of the equilibrium manifold: verification sweeps,
/// curvature reports, geodesics and price selection.
#[derive(Parser)]
#[command(name = "eqm", version, about)]
struct EqmCli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Economy config JSON, e.g. {"family":"tanh-sin","L":3,"params":{},"domain":[-3,3]}
    #[arg(long)]
    economy: PathBuf,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of random sample points for sweeps
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Seed for reproducible sampling
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the oracle-vs-closed-form verification suite
    Verify(Common),
    /// Sample sectional curvatures over the manifold
    Curvature(Common),
    /// Integrate one geodesic and emit its trace
    Geodesic {
        #[command(flatten)]
        common: Common,
        /// Base point t coordinate
        #[arg(long)]
        t0: f64,
        /// Base point alpha coordinates, comma separated (length L-1)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Vec<f64>,
        /// Initial velocity coefficients, comma separated (length L)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        velocity: Vec<f64>,
    },
    /// Select the equilibrium price after an endowment perturbation
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t0: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Vec<f64>,
        /// Consumer 1's new endowment, comma separated (length L)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        omega_prime: Vec<f64>,
        /// One-shot projection + geodesic, no fixed-point refinement
        #[arg(long)]
        no_refine: bool,
    },
    /// Locate all equilibria supporting a fixed endowment
    Equilibria {
        #[command(flatten)]
        common: Common,
        /// Consumer 1's endowment, comma separated (length L)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        endowment: Vec<f64>,
    },
    /// Report the zero-curvature/uniqueness equivalence for the economy
    Uniqueness(Common),
}

fn main() -> ExitCode {
    let parsed = EqmCli::parse();
    let (common, command) = match parsed.command {
        Cmd::Verify(c) => (c, Command::Verify),
        Cmd::Curvature(c) => (c, Command::Curvature),
        Cmd::Geodesic { common, t0, alpha, velocity } => {
            (common, Command::Geodesic { t0, alpha, velocity })
        }
        Cmd::Select { common, t0, alpha, omega_prime, no_refine } => {
            (common, Command::Select { t0, alpha, omega_prime, refine: !no_refine })
        }
        Cmd::Equilibria { common, endowment } => (common, Command::Equilibria { endowment }),
        Cmd::Uniqueness(c) => (c, Command::Uniqueness),
    };
    let config = RunConfig {
        command,
        economy_path: common.economy,
        output_path: common.out,
        seed: common.seed,
        samples: common.samples,
        format: match common.format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        },
    };
    ExitCode::from(cli::run(&config) as u8)
}
