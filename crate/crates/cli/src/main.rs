use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod metric_file;
mod report;

/// Finsler sprays, projective deformations and metrizability obstructions.
#[derive(Parser, Debug)]
#[command(name = "finsler", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Metric tensor, spray, curvature and principal curvatures at a point.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
    /// Deformation S~ = S - 2 lambda P C by a holonomy invariant factor.
    Deform {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        factor: Factor,
        #[command(flatten)]
        common: Common,
    },
    /// Rank of the holonomy distribution by bracket closure.
    Holonomy {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        factor: Factor,
        /// Maximal bracket depth (default 2n).
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce one of the two built-in deformation examples.
    VerifyExample {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = finsler_deform::sampling::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct SourceChoice {
    /// Built-in metric: euclidean, klein or mu_family.
    #[arg(long)]
    pub catalog: Option<String>,
    /// Metric definition file.
    #[arg(long)]
    pub metric: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    #[command(flatten)]
    pub choice: SourceChoice,
    /// Parameter of the mu_family metric.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct Factor {
    /// Projective factor as an expression, or `F` for the metric itself.
    #[arg(long)]
    pub factor: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Point as `x=a,b,...;y=c,d,...`.
    #[arg(long)]
    pub point: String,
    /// Tolerance for numeric checks.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = finsler_deform::sampling::DEFAULT_SEED)]
    pub seed: u64,
    /// Write the machine-readable report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { source, common } => commands::analyze(&source, &common),
        Command::Deform {
            source,
            factor,
            common,
        } => commands::deform(&source, &factor, &common),
        Command::Holonomy {
            source,
            factor,
            depth,
            common,
        } => commands::holonomy(&source, &factor, depth, &common),
        Command::VerifyExample {
            example,
            mu,
            dim,
            json,
            seed,
        } => commands::verify_example(example, mu, dim, seed, json.as_deref()),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if let Some(path) = &outcome.json_path {
                if let Err(e) = std::fs::write(path, report::to_json(&outcome.report)) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if outcome.report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
