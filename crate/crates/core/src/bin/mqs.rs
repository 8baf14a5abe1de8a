use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use mqs_core::cli::{self, describe_error, exit_code, EXIT_CONFIG, EXIT_OK, EXIT_SELF_CHECK};
use mqs_core::config::{Mode, RunConfig};
use mqs_core::Error;

#[derive(Parser)]
#[command(name = "mqs", version, about = "Measurement-induced superposition states in a two-mode condensate")]
struct Args {
    #[command(subcommand)]
    command: Option<Command>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// coherent, trajectories, interference, oracle-check or collapse-demo.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// N = 100 atoms per mode with the detection count scaled to match.
    #[arg(long, conflicts_with = "full_scale")]
    desk_scale: bool,
    /// N = 1000 atoms per mode.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file and list every problem found.
    Validate { path: PathBuf },
}

fn fail(e: &Error, code: i32) -> ExitCode {
    eprintln!("{}", describe_error(e));
    ExitCode::from(code as u8)
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn build_config(args: &Args) -> Result<RunConfig, Error> {
    let mut config = match (&args.config, args.mode) {
        (Some(path), mode) => {
            let mut c = RunConfig::load(path).map_err(as_config_error)?;
            if let Some(m) = mode {
                c.mode = m;
            }
            c
        }
        (None, Some(mode)) => RunConfig::for_mode(mode),
        (None, None) => return Err(Error::Config("either --config or --mode is required".into())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if args.desk_scale {
        config.apply_desk_scale();
    }
    if args.full_scale {
        config.apply_full_scale();
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    if let Some(Command::Validate { path }) = &args.command {
        let report = match RunConfig::load(path) {
            Ok(c) => c.validate(),
            Err(e) => return fail(&as_config_error(e), EXIT_CONFIG),
        };
        if report.is_clean() {
            println!("ok: {}", path.display());
            return ExitCode::from(EXIT_OK as u8);
        }
        eprintln!("{report}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }

    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => return fail(&e, EXIT_CONFIG),
    };
    let report = config.validate();
    if !report.is_clean() {
        for e in &report.problems {
            eprintln!("{}", describe_error(e));
        }
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    info!("running {} with seed {}", config.mode.name(), config.seed);
    match cli::run(&config) {
        Ok(summary) => {
            println!("{}", summary.line);
            for f in &summary.files {
                info!("wrote {}", f.display());
            }
            if summary.self_check_passed {
                ExitCode::from(EXIT_OK as u8)
            } else {
                eprintln!("error[self-check/OracleMismatch]: {}", summary.line);
                ExitCode::from(EXIT_SELF_CHECK as u8)
            }
        }
        Err(e) => fail(&e, exit_code(&e)),
    }
}
