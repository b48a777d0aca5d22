//! `qrobust`: robustness, weight of resource, witnesses and task advantages
//! from the command line. Reports are JSON on standard output.

mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand, ValueEnum};
use commands::{DemoOptions, Output, Plane};
use config::ScenarioConfig;
use robustness_core::bloch::Mode;
use robustness_core::measures::Strategy;
use robustness_core::Error;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RESOURCE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;
const EXIT_NUMERICAL: u8 = 1;

#[derive(Parser)]
#[command(
    name = "qrobust",
    version,
    about = "Robustness and weight of resource over unions of convex free sets"
)]
struct Cli {
    /// Seed for every randomized step; overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the report as CSV.
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    ClosedForm,
    Bisection,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::ClosedForm => Strategy::ClosedForm,
            StrategyArg::Bisection => Strategy::Bisection,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Discrimination,
    Exclusion,
}

#[derive(Subcommand)]
enum Command {
    /// Positivity test through the S_m values, with the eigenvalue oracle.
    PsdCheck {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Generalized robustness of the scenario state.
    Robustness {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
    },
    /// Weight of resource of the scenario state.
    Weight {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
    },
    /// Builds the witness family at the scenario `s`.
    WitnessBuild {
        #[arg(long)]
        config: PathBuf,
        /// Shift the family against free samples.
        #[arg(long)]
        shift: bool,
        /// Leave the member operators out of the report.
        #[arg(long)]
        no_operators: bool,
    },
    /// Checks whether the family at the scenario `s` is a witness.
    WitnessVerify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        shift: bool,
    },
    /// Estimates the measure as the largest `s` with a witness.
    WitnessSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        sweep_tol: f64,
    },
    /// Multicopy channel-discrimination advantage.
    Discriminate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Multicopy channel-exclusion advantage.
    Exclude {
        #[arg(long)]
        config: PathBuf,
    },
    /// Single-copy worst-case bounds and optimal tasks.
    WorstCase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Discrimination)]
        task: TaskArg,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Robustness of a channel against a union of channel sets.
    ChannelRobustness {
        #[arg(long)]
        config: PathBuf,
        /// Also run the Choi-space witness sweep at this tolerance.
        #[arg(long)]
        sweep_tol: Option<f64>,
        /// Random state-discrimination games for the bound check.
        #[arg(long, default_value_t = 0)]
        game_trials: usize,
    },
    /// Instrument robustness, directly and through the flag embedding.
    InstrumentRobustness {
        #[arg(long)]
        config: PathBuf,
    },
    /// Qubit example against the three Pauli-axis incoherent sets.
    #[command(name = "demo-appendix-d")]
    DemoQubitAxes {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0.3,0.4,0.5"
        )]
        bloch: Vec<f64>,
        /// Witness parameter for the S_2 grid scan.
        #[arg(long, default_value_t = 0.45)]
        s: f64,
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = Plane::Xy)]
        plane: Plane,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        sample_budget: usize,
        #[arg(long, default_value_t = 1e-4)]
        sweep_tol: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::PsdCheck { .. } => "psd-check",
            Self::Robustness { .. } => "robustness",
            Self::Weight { .. } => "weight",
            Self::WitnessBuild { .. } => "witness-build",
            Self::WitnessVerify { .. } => "witness-verify",
            Self::WitnessSweep { .. } => "witness-sweep",
            Self::Discriminate { .. } => "discriminate",
            Self::Exclude { .. } => "exclude",
            Self::WorstCase { .. } => "worst-case",
            Self::ChannelRobustness { .. } => "channel-robustness",
            Self::InstrumentRobustness { .. } => "instrument-robustness",
            Self::DemoQubitAxes { .. } => "demo-appendix-d",
        }
    }
}

fn load(path: &Path) -> robustness_core::Result<ScenarioConfig> {
    ScenarioConfig::load(path)
}

/// Runs one subcommand; returns the report, the seed and the tolerance used.
fn run(cli: &Cli) -> robustness_core::Result<(Output, u64, Option<f64>)> {
    use Command::*;
    let seed_of = |cfg: &ScenarioConfig| cli.seed.or(cfg.seed).unwrap_or(0);
    Ok(match &cli.command {
        PsdCheck { operator, tol } => (
            commands::psd_check(operator, *tol)?,
            cli.seed.unwrap_or(0),
            Some(*tol),
        ),
        Robustness { config, strategy } | Weight { config, strategy } => {
            let cfg = load(config)?;
            let mode = if matches!(cli.command, Weight { .. }) {
                Mode::Weight
            } else {
                Mode::Robustness
            };
            (
                commands::measure_command(&cfg, mode, (*strategy).into())?,
                seed_of(&cfg),
                Some(cfg.tol),
            )
        }
        WitnessBuild {
            config,
            shift,
            no_operators,
        } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            (
                commands::witness_build(&cfg, seed, *shift, !no_operators)?,
                seed,
                Some(cfg.sign_tol),
            )
        }
        WitnessVerify { config, shift } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            (
                commands::witness_verify(&cfg, seed, *shift)?,
                seed,
                Some(cfg.sign_tol),
            )
        }
        WitnessSweep { config, sweep_tol } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            (
                commands::witness_sweep(&cfg, seed, *sweep_tol)?,
                seed,
                Some(cfg.tol),
            )
        }
        Discriminate { config } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            (commands::discriminate(&cfg, seed)?, seed, Some(cfg.tol))
        }
        Exclude { config } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            (commands::exclude(&cfg, seed)?, seed, Some(cfg.tol))
        }
        WorstCase {
            config,
            task,
            trials,
        } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            let mode = match task {
                TaskArg::Discrimination => Mode::Robustness,
                TaskArg::Exclusion => Mode::Weight,
            };
            (
                commands::worst_case(&cfg, seed, mode, *trials)?,
                seed,
                Some(cfg.tol),
            )
        }
        ChannelRobustness {
            config,
            sweep_tol,
            game_trials,
        } => {
            let cfg = load(config)?;
            let seed = seed_of(&cfg);
            (
                commands::channel_robustness_command(&cfg, seed, *sweep_tol, *game_trials)?,
                seed,
                Some(cfg.tol),
            )
        }
        InstrumentRobustness { config } => {
            let cfg = load(config)?;
            (
                commands::instrument_robustness_command(&cfg)?,
                seed_of(&cfg),
                Some(cfg.tol),
            )
        }
        DemoQubitAxes {
            bloch,
            s,
            grid,
            plane,
            tol,
            sample_budget,
            sweep_tol,
        } => {
            let seed = cli.seed.unwrap_or(0);
            let opts = DemoOptions {
                bloch: bloch.clone(),
                s: *s,
                grid: *grid,
                plane: *plane,
                tol: *tol,
                sample_budget: *sample_budget,
                sweep_tol: *sweep_tol,
            };
            (commands::demo_qubit_axes(&opts, seed)?, seed, Some(*tol))
        }
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::Precondition(_)
        | Error::Format(_)
        | Error::DegenerateShift { .. } => EXIT_VALIDATION,
        Error::Resource { .. } => EXIT_RESOURCE,
        Error::Io(_) => EXIT_IO,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (output, seed, tol) = match run(&cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("qrobust: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let report = json!({
        "command": cli.command.name(),
        "seed": seed,
        "tol": tol,
        "report": output.report,
    });
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    // A closed pipe downstream is not an error of ours.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    if let Some(path) = &cli.csv {
        let table = output
            .table
            .unwrap_or_else(|| report::Table::from_report(&report));
        if let Err(e) = table.write(path) {
            eprintln!("qrobust: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_IO);
        }
    }
    ExitCode::SUCCESS
}
