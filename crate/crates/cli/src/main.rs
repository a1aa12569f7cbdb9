use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qfractal::commands::{run, Command};
use qfractal::io::RunConfig;
use qfractal::Error;

const USAGE: u8 = 2;
const NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "qfractal", version, about = "Spectral box states, trajectories and fractal fits")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration (TOML, or an emitted run.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Write the coefficient file and a state summary.
    BuildState,
    /// Density over a space-time grid.
    Carpet,
    /// Trajectory ensemble, optionally across the truncation ladder.
    Trajectories,
    /// Density, phase and quantum potential at the configured times.
    Profile,
    /// Energy along trajectories and the ensemble energy table.
    Energy,
    /// Length-scaling and spectrum fits.
    Fractal,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::BuildState => Command::BuildState,
            Cmd::Carpet => Command::Carpet,
            Cmd::Trajectories => Command::Trajectories,
            Cmd::Profile => Command::Profile,
            Cmd::Energy => Command::Energy,
            Cmd::Fractal => Command::Fractal,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(USAGE);
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let out = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match run(cli.command.into(), &cfg, &out) {
        Ok(outputs) => {
            for f in &outputs.files {
                println!("{}", out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        NUMERICAL
    } else if matches!(e, Error::Io { .. } | Error::Json(_)) {
        1
    } else {
        USAGE
    }
}
