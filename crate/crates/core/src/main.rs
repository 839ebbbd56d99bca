use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtdc::cli::{
    benchmark, cmd_analyze, cmd_bench, cmd_simulate, cmd_sweep, cmd_verify, CliError, Controller, RunReport,
    ScenarioFile,
};

/// Frequency and DC-voltage control of AC areas coupled through an MTDC grid.
#[derive(Parser)]
#[command(name = "mtdc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stability certificate, equilibrium and error bounds (no integration).
    Analyze {
        #[command(flatten)]
        source: Source,
    },
    /// Integrate a scenario and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// JSON report path; defaults to the CSV path with a `.json` extension.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the four benchmark scenario files.
    Bench {
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    /// Simulate and check every applicable property; exit 1 on the first failure.
    Verify {
        #[command(flatten)]
        source: Source,
    },
    /// Post-event equilibria over a list of parameter values.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// One of delta, gamma, k_droop, k_droop_i, k_omega, k_v.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Source {
    /// Scenario file (JSON).
    #[arg(required_unless_present = "bench", conflicts_with = "bench")]
    file: Option<PathBuf>,
    /// Use the built-in six-area benchmark instead of a file.
    #[arg(long)]
    bench: bool,
    /// Override the controller: droop, secondary-complete, secondary-projected, secondary-distributed.
    #[arg(long)]
    controller: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ScenarioFile, CliError> {
        let controller = self
            .controller
            .as_deref()
            .map(|name| {
                Controller::parse(name).ok_or_else(|| CliError::Invalid(format!("--controller: unknown controller `{name}`")))
            })
            .transpose()?;
        let mut file = match &self.file {
            Some(path) => mtdc::cli::load_scenario(path)?,
            None => benchmark(controller.unwrap_or(Controller::SecondaryDistributed)),
        };
        if let Some(c) = controller {
            file.controller = c;
        }
        Ok(file)
    }
}

/// Writes to stdout, tolerating a closed pipe (e.g. `mtdc analyze ... | head`).
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_report(report: &RunReport) {
    emit(&report.to_json());
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { source } => print_report(&cmd_analyze(&source.load()?)?),
        Command::Simulate { source, out, report } => {
            let result = cmd_simulate(&source.load()?, &out)?;
            let report_path = report.unwrap_or_else(|| out.with_extension("json"));
            std::fs::write(&report_path, result.to_json() + "\n").map_err(|source| CliError::Io {
                path: report_path.display().to_string(),
                source,
            })?;
            eprintln!("wrote {} and {}", out.display(), report_path.display());
        }
        Command::Bench { dir } => {
            for path in cmd_bench(&dir)? {
                emit(&path.display().to_string());
            }
        }
        Command::Verify { source } => {
            let report = cmd_verify(&source.load()?)?;
            print_report(&report);
            for c in &report.checks {
                eprintln!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(c) = report.first_failure() {
                return Err(CliError::Verification(format!("{}: {}", c.name, c.detail)));
            }
        }
        Command::Sweep { source, param, values } => {
            let records = cmd_sweep(&source.load()?, &param, &values)?;
            emit(&serde_json::to_string_pretty(&records).expect("sweep records serialize"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
