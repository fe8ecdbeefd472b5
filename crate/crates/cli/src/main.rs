mod protocol;
mod serve;

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use vdi_core::harness::{self, HarnessError, WeightGrid};
use vdi_core::scenario::{builtin_scenarios, interactive_default, Scenario, ScenarioError};
use vdi_core::session::Session;

/// Exit status for scenario, argument and log-format errors.
const EXIT_INVALID: u8 = 2;
/// Exit status for runtime invariant violations and replay mismatches.
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "vdi", version, about = "Demonstration-interface simulator harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario name or path to a scenario TOML file.
    scenario: String,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the control tick, seconds.
    #[arg(long)]
    tick: Option<f64>,
    /// Overrides the duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<(Scenario, u64), ScenarioError> {
        let mut s = Scenario::resolve(&self.scenario)?;
        if let Some(t) = self.tick {
            s.tick = t;
        }
        if let Some(d) = self.duration {
            s.duration = d;
        }
        s.validate()?;
        let seed = self.seed.unwrap_or(s.seed);
        Ok((s, seed))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write its JSONL log and summary, print the summary.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Log path (default: <scenario name>.jsonl). The summary goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary from a log and check it against the stored one.
    Replay { log: PathBuf },
    /// Run a scenario over a grid of objective weights; write CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',')]
        w1: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        w2: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        w3: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        w4: Vec<f64>,
        /// Desired viewing distances, meters.
        #[arg(long = "distance", value_delimiter = ',')]
        distance: Vec<f64>,
        /// CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve an interactive session over a websocket.
    Serve {
        /// Scenario to start from (default: a built-in interactive setup).
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Write every built-in scenario as TOML into a directory.
    ExportScenarios { dir: PathBuf },
}

enum Failure {
    Invalid(String),
    Invariant(String),
    Other(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Scenario(e) => Failure::Invalid(e.to_string()),
            HarnessError::CorruptLog { .. } => Failure::Invalid(e.to_string()),
            HarnessError::Invariant(_) | HarnessError::SummaryMismatch(_) => Failure::Invariant(e.to_string()),
            HarnessError::Io { .. } => Failure::Other(e.to_string()),
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Other(e.to_string())
}

fn print_summary(summary: &harness::MetricsSummary) {
    print!("{}", harness::summary_json(summary));
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, out } => {
            let (s, seed) = scenario.load()?;
            let log = out.unwrap_or_else(|| PathBuf::from(format!("{}.jsonl", s.name)));
            let result = harness::run_to_files(&s, seed, &log);
            match result {
                Ok(summary) => {
                    print_summary(&summary);
                    Ok(())
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Replay { log } => {
            let summary = harness::replay_file(&log)?;
            print_summary(&summary);
            Ok(())
        }
        Command::Sweep {
            scenario,
            w1,
            w2,
            w3,
            w4,
            distance,
            out,
        } => {
            let (s, seed) = scenario.load()?;
            let mut grid = WeightGrid::from_config(&s.optimizer);
            for (axis, values) in [
                (&mut grid.w1, w1),
                (&mut grid.w2, w2),
                (&mut grid.w3, w3),
                (&mut grid.w4, w4),
                (&mut grid.desired_distance, distance),
            ] {
                if !values.is_empty() {
                    *axis = values;
                }
            }
            let rows = harness::sweep(&s, seed, &grid)?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(std::fs::File::create(p).map_err(io)?),
                None => Box::new(std::io::stdout().lock()),
            };
            let mut writer = csv::Writer::from_writer(sink);
            for row in rows {
                writer.serialize(row).map_err(|e| Failure::Other(e.to_string()))?;
            }
            writer.flush().map_err(io)
        }
        Command::Serve {
            scenario,
            addr,
            seed,
            speed,
        } => {
            let s = match scenario {
                Some(name) => {
                    let mut s = Scenario::resolve(&name)?;
                    s.interactive = true;
                    s.abort_on_violation = false;
                    s
                }
                None => interactive_default(),
            };
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(Failure::Invalid("--speed must be positive".into()));
            }
            let session = Session::new(s, seed)?;
            let listener = std::net::TcpListener::bind(&addr).map_err(io)?;
            println!("listening on ws://{}", listener.local_addr().map_err(io)?);
            std::io::stdout().flush().map_err(io)?;
            serve::serve(listener, session, serve::ServeOptions { speed }).map_err(io)
        }
        Command::ListScenarios => {
            for s in builtin_scenarios() {
                println!("{:<24} {:>6.1} s  {}", s.name, s.duration, s.description);
            }
            Ok(())
        }
        Command::ExportScenarios { dir } => {
            std::fs::create_dir_all(&dir).map_err(io)?;
            for s in builtin_scenarios() {
                let path = dir.join(format!("{}.toml", s.name));
                std::fs::write(&path, s.to_toml_string()).map_err(io)?;
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
