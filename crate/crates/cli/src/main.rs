use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tou_core::data::{write_synthetic_csv, SyntheticConfig};
use tou_core::experiment::{run_complete_info, run_incomplete_info, ExperimentConfig};
use tou_core::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "tou",
    version,
    about = "Time-of-use contract studies for end-user storage"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Hourly CSV data; overrides `data.path`.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,

    /// Directory for report files.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for sweep points.
    #[arg(long, env = "TOU_WORKERS")]
    workers: Option<usize>,

    #[arg(long, value_enum, default_value_t = Mode::Incomplete)]
    mode: Mode,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic hourly CSV.
    Synth {
        #[arg(long, default_value_t = 40)]
        users: usize,
        #[arg(long, default_value_t = 30)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        gap_probability: f64,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Complete,
    Incomplete,
}

struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Config(_) => EXIT_CONFIG,
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. } | Error::Scenario(_) => {
                EXIT_DATA
            }
            Error::Infeasible(_) | Error::Pricing { .. } => EXIT_INFEASIBLE,
            _ => EXIT_OTHER,
        };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(Command::Synth {
        users,
        days,
        seed,
        gap_probability,
        out,
    }) = cli.command
    {
        let config = SyntheticConfig {
            users,
            days,
            seed,
            gap_probability,
            ..Default::default()
        };
        let file = File::create(&out).map_err(|e| Failure {
            code: EXIT_DATA,
            error: Error::Io {
                path: out.clone(),
                source: e,
            },
        })?;
        write_synthetic_csv(&config, BufWriter::new(file))?;
        println!("{}", out.display());
        return Ok(());
    }

    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(&path).map_err(|e| match e {
        Error::Io { .. } => Failure {
            code: EXIT_CONFIG,
            error: e,
        },
        other => other.into(),
    })?;
    if let Some(data) = cli.data {
        config.data.path = Some(data);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    config.validate()?;

    let written = match cli.mode {
        Mode::Complete => {
            let report = run_complete_info(&config)?;
            let files = report.write(&cli.out)?;
            if !report.optimality_holds() {
                for f in &files {
                    println!("{}", f.display());
                }
                return Err(Error::Infeasible(format!(
                    "realized cost {} differs from the optimum {}",
                    report.realized.total, report.optimum.total
                ))
                .into());
            }
            files
        }
        Mode::Incomplete => run_incomplete_info(&config)?.write(&cli.out)?,
    };
    for f in written {
        println!("{}", f.display());
    }
    Ok(())
}
