use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fracdrift_lab::scenarios::{builtin, BUILTIN};
use fracdrift_lab::{run_scenario, LabError, LabResult, RunOptions, Scenario};

#[derive(Debug, Parser)]
#[command(name = "fracdrift", version, about = "Run fractional drift-diffusion inverse-problem experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for outputs; each scenario writes to `<out-dir>/<name>/`.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for the binary weight cache.
    #[arg(long, global = true)]
    weight_cache: Option<PathBuf>,
    /// Also write the assembled lattice weights as CSV.
    #[arg(long, global = true)]
    dump_weights: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the built-in consistency checks.
    Selftest,
    /// Run a scenario from a JSON file or a built-in scenario name.
    Run { config: String },
    /// List built-in scenarios.
    ListScenarios,
}

fn load(config: &str) -> LabResult<Scenario> {
    let path = Path::new(config);
    if path.exists() {
        return Scenario::from_path(path);
    }
    builtin(config).unwrap_or_else(|| Err(LabError::config("<file>", format!("{config}: no such file or built-in scenario"))))
}

fn execute(cli: &Cli) -> LabResult<bool> {
    let opts = RunOptions {
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
        weight_cache: cli.weight_cache.clone(),
        dump_weights: cli.dump_weights,
    };
    let scenario = match &cli.command {
        Command::ListScenarios => {
            for (name, text) in BUILTIN {
                let kind = Scenario::from_json(text).map(|s| s.experiment.kind()).unwrap_or("invalid");
                println!("{name}\t{kind}");
            }
            return Ok(true);
        }
        Command::Selftest => load("selftest")?,
        Command::Run { config } => load(config)?,
    };
    let outcome = run_scenario(&scenario, &opts)?;
    println!(
        "{}: {} ({})",
        scenario.name,
        outcome.summary["status"].as_str().unwrap_or("?"),
        outcome.dir.join("summary.json").display()
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
