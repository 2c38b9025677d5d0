use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pmm_cli::checks;
use pmm_cli::runner::{run_outputs, write_artifacts, RunError};
use pmm_cli::scenario::{parse_scenario_with, Output, Overrides, ParseError, Scenario};

/// Phase manipulation module simulator.
#[derive(Parser, Debug)]
#[command(name = "pmm", version, about)]
struct Cli {
    /// Override the scenario seed (also seeds the random draws of `check`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving CSV and PGM artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Override the scenario OAM truncation |l| <= LMAX.
    #[arg(long, global = true)]
    lmax: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every output a scenario requests.
    Run { scenarios: Vec<PathBuf> },
    /// Render the images of a scenario.
    Render { scenarios: Vec<PathBuf> },
    /// Rotation-error sweep (and Monte-Carlo run, if the scenario has [errors]).
    Sweep { scenarios: Vec<PathBuf> },
    /// Controlled-phase gate table; exits 1 if any row fails.
    GateCheck { scenarios: Vec<PathBuf> },
    /// Run the built-in acceptance criteria 1-7; exits 1 on any failure.
    Check,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}:{source}")]
    Parse { path: String, source: ParseError },
    #[error("{0}")]
    Usage(String),
    #[error("reading {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Parse { .. } | CliError::Usage(_) | CliError::Run(RunError::Unsupported { .. }) => 2,
            CliError::Read { .. } | CliError::Run(_) => 3,
        }
    }
}

fn load(path: &Path, overrides: Overrides) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_with(&text, overrides).map_err(|source| CliError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn outputs_for(command: &Command, scenario: &Scenario) -> Result<Vec<Output>, CliError> {
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(CliError::Usage(format!("scenario `{}` has no {what}", scenario.name)))
        }
    };
    Ok(match command {
        Command::Run { .. } => scenario.outputs.clone(),
        Command::Render { .. } => {
            need(scenario.input.is_some(), "[input] section to render")?;
            vec![Output::Image]
        }
        Command::Sweep { .. } => {
            need(scenario.sweep.is_some(), "[sweep] section")?;
            let mut o = vec![Output::Sweep];
            if scenario.error_model.is_some() {
                o.push(Output::MonteCarlo);
            }
            o
        }
        Command::GateCheck { .. } => {
            need(scenario.gate.is_some(), "[gate] section")?;
            vec![Output::GateCheck]
        }
        Command::Check => unreachable!("check takes no scenarios"),
    })
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let paths = match &cli.command {
        Command::Check => return check(cli.seed.unwrap_or(0)),
        Command::Run { scenarios }
        | Command::Render { scenarios }
        | Command::Sweep { scenarios }
        | Command::GateCheck { scenarios } => scenarios,
    };
    if paths.is_empty() {
        return Err(CliError::Usage("no scenario files given".into()));
    }
    let overrides = Overrides {
        seed: cli.seed,
        l_max: cli.lmax,
    };
    // parse everything first so a typo in the last file costs no compute
    let scenarios = paths.iter().map(|p| load(p, overrides)).collect::<Result<Vec<_>, _>>()?;
    let mut failed_gates = Vec::new();
    for s in &scenarios {
        let outputs = outputs_for(&cli.command, s)?;
        let report = run_outputs(s, &outputs)?;
        write_artifacts(&cli.out_dir, &report.artifacts)?;
        for a in &report.artifacts {
            println!("{}", cli.out_dir.join(&a.file_name).display());
        }
        if !report.gates_passed {
            failed_gates.push(s.name.clone());
        }
    }
    if failed_gates.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("gate check failed: {}", failed_gates.join(", "))))
    }
}

fn check(seed: u64) -> Result<(), CliError> {
    let mut failed = Vec::new();
    for id in 1..=7 {
        let o = checks::run_criterion(id, seed);
        println!("{}", o.line());
        eprintln!("criterion {id}: {:.3} s", o.elapsed.as_secs_f64());
        if !o.passed {
            failed.push(id.to_string());
        }
    }
    if failed.is_empty() {
        println!("all criteria pass");
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed criteria: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pmm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
