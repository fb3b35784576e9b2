use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contactlab::scenario::{self, Format, ScenarioError};

#[derive(Parser)]
#[command(name = "contactlab", version, about = "Run contact-geometry numerical scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file. Without --out the JSON report goes to stdout.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        format: OutFormat,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every *.json scenario in a directory and aggregate verdicts.
    Suite {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        format: OutFormat,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        }
    }
}

fn run(scenario_path: PathBuf, out: Option<PathBuf>, format: OutFormat, seed: Option<u64>) -> Result<i32, ScenarioError> {
    if out.is_none() && matches!(format, OutFormat::Csv) {
        return Err(ScenarioError::Config("--format csv needs --out DIR".into()));
    }
    let report = scenario::run_path(&scenario_path, seed)?;
    eprintln!("{}: wall time {:.3} s", report.name, report.wall_time);
    match out {
        Some(dir) => {
            for p in scenario::write_report(&report, &dir, format.into())? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", scenario::report_json(&report)),
    }
    for v in report.verdicts.iter().filter(|v| !v.passed()) {
        eprintln!("FAIL {}: value {:e}, tolerance {:e}{}", v.name, v.value, v.tolerance, v.offending.map(|i| format!(", index {i}")).unwrap_or_default());
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn suite(dir: PathBuf, out: Option<PathBuf>, format: OutFormat, seed: Option<u64>) -> Result<i32, ScenarioError> {
    let entries = scenario::run_suite(&dir, seed)?;
    if entries.is_empty() {
        return Err(ScenarioError::Config(format!("no *.json scenarios in {}", dir.display())));
    }
    for e in &entries {
        match &e.result {
            Ok(r) => {
                let n_pass = r.verdicts.iter().filter(|v| v.passed()).count();
                println!("{} {} ({}/{} verdicts, {:.3} s)", if r.passed { "PASS" } else { "FAIL" }, r.name, n_pass, r.verdicts.len(), r.wall_time);
                if let Some(dir) = &out {
                    scenario::write_report(r, dir, format.into())?;
                }
            }
            Err(err) => println!("ERROR {}: {err}", e.path.display()),
        }
    }
    Ok(scenario::suite_exit_code(&entries))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = scenario::init_threads().and_then(|()| match cli.command {
        Command::Run { scenario, out, format, seed } => run(scenario, out, format, seed),
        Command::Suite { dir, out, format, seed } => suite(dir, out, format, seed),
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
