use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sisim::fault::campaign;
use sisim::report::emit_report;
use sisim::safety::IntegrationKind;
use sisim::scenario::{parse, ParseError, ScenarioConfig};
use sisim::Execution;

const EXIT_INVALID: u8 = 1;
const EXIT_FTTI_FAIL: u8 = 2;

#[derive(Parser)]
#[command(name = "sisim", version, about = "Safety-island supervised HPC island simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its report.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Run one simulation per fault plus a fault-free control.
    Campaign {
        scenario: PathBuf,
        #[arg(long)]
        faults: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Run the campaign on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, env = "SISIM_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Coupled,
    Loose,
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_INVALID)
    })
}

fn report_errors(path: &Path, err: &ParseError) -> ExitCode {
    match err {
        ParseError::Syntax { .. } => eprintln!("{}: {err}", path.display()),
        ParseError::Invalid(errs) => {
            for e in errs {
                eprintln!("{}: {e}", path.display());
            }
        }
    }
    ExitCode::from(EXIT_INVALID)
}

fn load(path: &Path, opts: Option<&RunOpts>) -> Result<ScenarioConfig, ExitCode> {
    let text = read(path)?;
    let mut config = parse(&text).map_err(|e| report_errors(path, &e))?;
    if let Some(opts) = opts {
        if let Some(seed) = opts.seed {
            config.seed = seed;
        }
        match opts.mode {
            Some(Mode::Coupled) => config.integration.mode = IntegrationKind::Coupled,
            Some(Mode::Loose) => config.integration.mode = IntegrationKind::Loose,
            None => {}
        }
    }
    Ok(config)
}

fn write_report(text: &str, dest: Option<&Path>) -> Result<(), ExitCode> {
    match dest {
        Some(path) => fs::write(path, text).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            ExitCode::from(EXIT_INVALID)
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.command {
        Command::Validate { scenario } => {
            let config = load(&scenario, None)?;
            println!(
                "{}: ok ({} masters, {} pairs, {} watchdogs, horizon {})",
                scenario.display(),
                config.masters.len(),
                config.pairs.len(),
                config.watchdogs.len(),
                config.horizon
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { scenario, opts } => {
            let config = load(&scenario, Some(&opts))?;
            let report = sisim::run(&config);
            write_report(&emit_report(&report), opts.report.as_deref())?;
            Ok(if report.ftti_failed() {
                ExitCode::from(EXIT_FTTI_FAIL)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Campaign {
            scenario,
            faults,
            opts,
            sequential,
        } => {
            let config = load(&scenario, Some(&opts))?;
            let text = read(&faults)?;
            let specs = config
                .parse_faults(&text)
                .map_err(|e| report_errors(&faults, &e))?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let rows = campaign(&config, &specs, exec);
            let mut control = config.clone();
            control.faults.clear();
            let mut report = sisim::run(&control);
            let failed = rows
                .iter()
                .any(|r| r.verdict.is_some_and(|v| !v.is_pass()));
            report.campaign = rows;
            write_report(&emit_report(&report), opts.report.as_deref())?;
            Ok(if failed {
                ExitCode::from(EXIT_FTTI_FAIL)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    execute(cli).unwrap_or_else(|code| code)
}
