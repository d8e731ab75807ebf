use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use goodput_core::experiment::{
    ExperimentConfig, ExperimentError, Mode, optimize, run_sweep, validate, write_csv,
};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "goodput",
    version,
    about = "Stop-and-wait goodput over a Gilbert burst-error link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic payload sweep (exact and constant-size goodput).
    Analyze(Common),
    /// Monte Carlo payload sweep.
    Simulate(Common),
    /// Payload sweep in the mode given by the config or `--mode`.
    Sweep(Common),
    /// Grid search for the goodput-maximizing payload.
    Optimize(Common),
    /// Checks the analytic model against the simulator.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Scale analytic goodput by (1 + REL) before comparing.
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_analytic: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (key = value sections); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file, stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["analytic", "simulate", "both"])]
    mode: Option<String>,
    /// Evaluate grid points and replications on one thread.
    #[arg(long)]
    serial: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(mode) = &self.mode {
            cfg.mode = Mode::parse(mode).expect("validated by clap");
        }
        if let Some(seed) = self.seed {
            let mut sim = cfg.sim_settings();
            sim.seed = seed;
            cfg.sim = Some(sim);
        }
        cfg.parallel = !self.serial;
        Ok(cfg)
    }

    fn emit(&self, text: &str) -> Result<(), ExperimentError> {
        match &self.out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn sweep(common: &Common, forced: Option<Mode>) -> Result<u8, ExperimentError> {
    let mut cfg = common.load()?;
    if let Some(mode) = forced {
        cfg.mode = mode;
    }
    let rows = run_sweep(&cfg)?;
    common.emit(&write_csv(&cfg, &rows, &[]))?;
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8, ExperimentError> {
    match cli.command {
        Command::Analyze(common) => sweep(&common, Some(Mode::Analytic)),
        Command::Simulate(common) => sweep(&common, Some(Mode::Simulate)),
        Command::Sweep(common) => sweep(&common, None),
        Command::Optimize(common) => {
            let mut cfg = common.load()?;
            cfg.mode = Mode::Analytic;
            let best = optimize(&cfg)?;
            println!("{best}");
            if common.out.is_some() {
                let rows = run_sweep(&cfg)?;
                common.emit(&write_csv(&cfg, &rows, &[best.to_string()]))?;
            }
            Ok(EXIT_OK)
        }
        Command::Validate {
            common,
            perturb_analytic,
        } => {
            let cfg = common.load()?;
            let report = validate(&cfg, perturb_analytic)?;
            let text: String = report.checks.iter().map(|c| format!("{c}\n")).collect();
            common.emit(&text)?;
            if report.passed() {
                Ok(EXIT_OK)
            } else {
                eprintln!("validation failed");
                Ok(EXIT_VALIDATION)
            }
        }
    }
}

/// Runs a parsed command line and maps the outcome to a process exit code.
fn status(cli: Cli) -> u8 {
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match &err {
                ExperimentError::Model(e) if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(status(Cli::parse()))
}
