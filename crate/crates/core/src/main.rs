use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coexsim::engine::{run_detailed, RunError};
use coexsim::report::{self, Format, Toggle};
use coexsim::scenario::{parse_scenario, ScenarioConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "coexsim", version, about = "WiMAX/WiFi coexistence simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration_us: Option<u64>,
        /// Report path; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Write one line per event to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a scenario with a mechanism off and on over several seeds.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        toggle: Toggle,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        seeds: Vec<u64>,
        #[arg(long)]
        duration_us: Option<u64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Parse and validate a scenario, then print its canonical form.
    Validate { scenario: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = if matches!(e, RunError::Invalid(_)) { EXIT_VALIDATION } else { EXIT_RUNTIME };
        Failure { code, message: e.to_string() }
    }
}

fn load(path: &Path, duration: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_scenario(&text).map_err(|e| Failure {
        code: EXIT_VALIDATION,
        message: format!("{}:\n{e}", path.display()),
    })?;
    if let Some(d) = duration {
        cfg.duration_us = d;
        let issues = coexsim::scenario::validate(&cfg);
        if !issues.is_empty() {
            return Err(RunError::Invalid(issues).into());
        }
    }
    Ok(cfg)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => report::write_atomic(p, text.as_bytes()).map_err(|e| Failure::runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, seed, duration_us, output, format, trace } => {
            let cfg = load(&scenario, duration_us)?;
            let seed = seed.unwrap_or(cfg.seed);
            let detail = match &trace {
                Some(path) => {
                    let mut buf = Vec::new();
                    let detail = run_detailed(&cfg, seed, Some(&mut buf))?;
                    report::write_atomic(path, &buf).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
                    detail
                }
                None => run_detailed(&cfg, seed, None)?,
            };
            emit(output.as_deref(), &report::render(&detail.result, format))
        }
        Command::Compare { scenario, toggle, seeds, duration_us, output, format } => {
            if seeds.is_empty() {
                return Err(Failure { code: EXIT_USAGE, message: "--seeds needs at least one seed".into() });
            }
            let cfg = load(&scenario, duration_us)?;
            let (cmp, _) = report::compare(&cfg, toggle, &seeds)?;
            let text = match format {
                Format::Json => report::comparison_json(&cmp),
                Format::Csv => report::comparison_csv(&cmp),
            };
            emit(output.as_deref(), &text)
        }
        Command::Validate { scenario } => {
            let cfg = load(&scenario, None)?;
            print!("{}", coexsim::emit_scenario(&cfg));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
