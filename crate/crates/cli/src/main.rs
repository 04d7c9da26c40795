use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holo_gate::experiments::{self, Artifact, Emit, ExperimentConfig};
use holo_gate::sta::BetaForm;
use holo_gate::Error;

#[derive(Debug, Parser)]
#[command(name = "holo-gate", version, about = "Figure data for the shortcut-engineered three-qubit holonomic gate")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and quadratures.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Points per axis of the mu quadrature.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// RK4 steps per gate time, for states and density matrices.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Use the printed, singular beta(t).
    #[arg(long, global = true)]
    strict_eq22: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Designed and fitted pulse waveforms.
    Pulses,
    /// Average infidelity over amplitude and lambda T.
    Contour,
    /// Infidelity on two slices of the mu cube.
    MuScan,
    /// Infidelity under coupling and control imperfections.
    Robustness,
    /// Toffoli fidelity versus each dissipation rate.
    Decoherence,
    /// Population and phase of the Z+ computational states.
    Traces,
    /// Shortcut versus adiabatic protocol.
    AdiabaticCompare,
    /// Model, eigenstructure, shortcut and dynamical invariants.
    Validate,
}

fn resolve(cli: &Cli) -> holo_gate::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(n) = cli.grid_n {
        cfg.grid_n = n;
    }
    if let Some(s) = cli.steps {
        cfg.state_steps = s;
        cfg.density_steps = s;
    }
    if cli.strict_eq22 {
        cfg.beta_form = BetaForm::Printed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> holo_gate::Result<(Artifact, bool)> {
    let a = match cli.command {
        Command::Pulses => experiments::cmd_pulses(cfg)?.artifact(cfg)?,
        Command::Contour => experiments::cmd_contour(cfg)?.artifact(cfg)?,
        Command::MuScan => experiments::cmd_mu_scan(cfg)?.artifact(cfg)?,
        Command::Robustness => experiments::cmd_robustness(cfg)?.artifact(cfg)?,
        Command::Decoherence => experiments::cmd_decoherence(cfg)?.artifact(cfg)?,
        Command::Traces => experiments::cmd_traces(cfg)?.artifact(cfg)?,
        Command::AdiabaticCompare => experiments::cmd_adiabatic_compare(cfg)?.artifact(cfg)?,
        Command::Validate => {
            let report = experiments::cmd_validate(cfg)?;
            return Ok((report.artifact(cfg)?, report.passed()));
        }
    };
    Ok((a, true))
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_numerical() { 3 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let outcome = experiments::with_workers(cli.workers, || run(&cli, &cfg)).and_then(|r| r);
    match outcome {
        Ok((artifact, passed)) => {
            match artifact.write(&cfg.output) {
                Ok(paths) => {
                    for p in paths {
                        eprintln!("wrote {}", p.display());
                    }
                }
                Err(e) => return exit_for(&e),
            }
            println!("{}", artifact.summary["summary"]);
            if passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("validation failed");
                ExitCode::from(2)
            }
        }
        Err(e) => exit_for(&e),
    }
}

