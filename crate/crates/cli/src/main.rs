//! `dpinn` command-line driver.

mod commands;
mod runspec;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] dpinn::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        if self.exit_code() == 3 {
            "numerical"
        } else {
            "validation"
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dpinn",
    version,
    about = "Neural-network elastostatics on decomposed, nonconforming meshes"
)]
struct Cli {
    /// Overrides the training seed of the run spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of training workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// 2 x 1 m plate, 32 x 16 elements, one subdomain.
    Cantilever,
    /// The plate split into 8 x 7 and 12 x 11 blocks with a slaved interface.
    Nonconforming,
    /// Two clamped-and-loaded blocks separated by a gap.
    Gap,
    /// 3 x 1 x 1 m solid beam split into two nonconforming bricks.
    Box,
    /// Four blocks forming an L with three interfaces.
    LShape,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate structured meshes, or a preset with its run spec.
    MeshGen {
        #[arg(long, value_enum, conflicts_with_all = ["origin", "extents", "divisions"])]
        preset: Option<Preset>,
        /// Gap width in meters for the gap preset.
        #[arg(long, default_value_t = 0.03)]
        gap: f64,
        /// Block origin, comma separated (2 or 3 values).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        origin: Vec<f64>,
        /// Block extents, comma separated.
        #[arg(long, value_delimiter = ',')]
        extents: Vec<f64>,
        /// Element counts per axis, comma separated.
        #[arg(long, value_delimiter = ',')]
        divisions: Vec<usize>,
        /// File name of the generated block inside the output directory.
        #[arg(long, default_value = "block.mesh")]
        name: String,
    },
    /// Build interface constraint tables and report residual statistics.
    Pair { runspec: PathBuf },
    /// Train the networks and export the predicted field.
    Solve { runspec: PathBuf },
    /// Solve the reference FEM problem and export its field.
    Fem { runspec: PathBuf },
    /// Compare a predicted field CSV against a reference field CSV.
    Compare { predicted: PathBuf, reference: PathBuf },
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ov = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
    };
    match cli.command {
        Command::MeshGen {
            preset,
            gap,
            origin,
            extents,
            divisions,
            name,
        } => match preset {
            Some(p) => commands::mesh_gen_preset(p, gap, &ov),
            None => commands::mesh_gen_block(&origin, &extents, &divisions, &name, &ov),
        },
        Command::Pair { runspec } => commands::pair(&runspec, &ov),
        Command::Solve { runspec } => commands::solve(&runspec, &ov),
        Command::Fem { runspec } => commands::fem(&runspec, &ov),
        Command::Compare { predicted, reference } => commands::compare(&predicted, &reference, &ov),
    }
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let one_line = message
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace('"', "'");
    eprintln!("dpinn-error exit={code} kind={kind} message=\"{one_line}\"");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return fail(2, "validation", &e.kind().to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.exit_code(), e.kind(), &e.to_string()),
    }
}
