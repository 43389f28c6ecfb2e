use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use scalemap::harness::{run, Mode, SimulationConfig};

/// Evolve a scaling Hamiltonian directly and through its time-independent
/// dual, and check that both agree.
#[derive(Parser, Debug)]
#[command(name = "scalemap", version)]
struct Cli {
    #[arg(value_enum)]
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the comparison tolerance (relative L2).
    #[arg(long)]
    tol: Option<f64>,
}

const EXIT_TOLERANCE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    scalemap::par::init_from_env();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("scalemap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> scalemap::Result<ExitCode> {
    let text = std::fs::read_to_string(&cli.config)?;
    let mut config = SimulationConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(tol) = cli.tol {
        config.tolerances.compare_rel_l2 = tol;
    }
    let resolved = config.resolve(cli.config.parent())?;
    let outcome = run(cli.mode, &resolved, &cli.out)?;
    if outcome.passed() {
        println!("{}: pass ({})", cli.mode.as_str(), cli.out.display());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{}: FAIL ({})", cli.mode.as_str(), cli.out.display());
        for f in &outcome.failures {
            println!("  {f}");
        }
        Ok(ExitCode::from(EXIT_TOLERANCE))
    }
}
