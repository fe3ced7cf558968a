//! Batch front end: load a scenario, solve, run checks and sweeps, write tables and a manifest.

mod error;
mod output;
mod run;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;
use output::OutputDir;
use run::{CheckLevel, RunPlan};
use scenario::{builtin, Overrides, Scenario, BUILTIN, SWEEPS};

#[derive(Parser)]
#[command(name = "layerscat", version, about = "Scattering by bi-periodic layers with a local defect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write manifest.json, field dumps and tables/*.csv.
    Run(RunArgs),
    /// List the built-in scenario names.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file in TOML.
    #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name (default homogeneous_outgoing).
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Fourier truncation M.
    #[arg(long, value_name = "M")]
    modes: Option<usize>,
    /// Depth elements N.
    #[arg(long, value_name = "N")]
    depth_elems: Option<usize>,
    /// Points per unit panel length of the alpha quadrature.
    #[arg(long = "nalpha", value_name = "n")]
    n_alpha: Option<usize>,
    /// Cutoff band width.
    #[arg(long, value_name = "x")]
    cutoff_tol: Option<f64>,
    /// Worker threads.
    #[arg(long, value_name = "t")]
    threads: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "output")]
    output_dir: PathBuf,
    /// Run the quick acceptance checks (A1-A3).
    #[arg(long)]
    check: bool,
    /// Run all nine acceptance checks.
    #[arg(long)]
    full_check: bool,
    /// Extra sweep: alpha-path or depth-convergence. Repeatable.
    #[arg(long, value_name = "NAME")]
    sweep: Vec<String>,
    /// Skip the scenario solve and run only the requested checks and sweeps.
    #[arg(long)]
    skip_solve: bool,
    /// Print the resolved scenario as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut scenario = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            Scenario::parse(&text)?
        }
        (None, name) => {
            let name = name.as_deref().unwrap_or("homogeneous_outgoing");
            builtin(name).ok_or_else(|| CliError::Config {
                message: format!("unknown scenario `{name}`; built-in: {}", BUILTIN.join(", ")),
                field: Some("scenario".into()),
                line: None,
                column: None,
            })?
        }
    };
    scenario.apply(&Overrides {
        modes: args.modes,
        depth_elems: args.depth_elems,
        n_alpha: args.n_alpha,
        cutoff_tol: args.cutoff_tol,
        threads: args.threads,
    });
    scenario.validate()?;
    Ok(scenario)
}

fn execute(args: &RunArgs) -> Result<(), CliError> {
    let scenario = load(args)?;
    if args.print_config {
        print!("{}", scenario.to_toml()?);
        return Ok(());
    }
    let mut sweeps = scenario.outputs.sweeps.clone();
    for name in &args.sweep {
        if !SWEEPS.contains(&name.as_str()) {
            return Err(CliError::Config {
                message: format!("unknown sweep `{name}`; known: {}", SWEEPS.join(", ")),
                field: Some("sweep".into()),
                line: None,
                column: None,
            });
        }
        if !sweeps.contains(name) {
            sweeps.push(name.clone());
        }
    }
    let check = match (args.full_check, args.check) {
        (true, _) => Some(CheckLevel::Full),
        (false, true) => Some(CheckLevel::Quick),
        _ => None,
    };
    let out = OutputDir::create(&args.output_dir)?;
    let plan = RunPlan { scenario, check, sweeps, solve: !args.skip_solve };
    let outcome = run::run(&plan, &out).inspect_err(|e| write_error_record(&out, e))?;
    if !outcome.failed_checks.is_empty() {
        let e = CliError::Check(format!("failed criteria: {}", outcome.failed_checks.join(", ")));
        write_error_record(&out, &e);
        return Err(e);
    }
    println!("{}", serde_json::to_string(&outcome.manifest["tables"]).expect("json"));
    Ok(())
}

fn write_error_record(out: &OutputDir, e: &CliError) {
    let text = serde_json::to_string_pretty(&e.record()).expect("error record serializes");
    // best effort: the record also goes to stderr
    let _ = out.write_bytes(&out.root.join("error.json"), text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Scenarios => {
            for name in BUILTIN {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match execute(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{}", serde_json::to_string(&e.record()).expect("error record serializes"));
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
