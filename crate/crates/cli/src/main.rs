//! ghl: experiment driver for the guiding-center homogenization lab.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical gate failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{dispatch, RunContext};
use config::{ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "ghl",
    about = "Kinetic plasma homogenization experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration file (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for reports and snapshots.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Report wall-clock times in CSV outputs (breaks byte-reproducibility).
    #[arg(long, default_value_t = false)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Weak-* and two-scale convergence sweep for the linear problem.
    LinearSweep(CommonArgs),
    /// E x B drift demonstration and the drift-variant sweep.
    DriftDemo(CommonArgs),
    /// One particle-in-cell Vlasov-Poisson run.
    VpRun(CommonArgs),
    /// Finite-epsilon vs homogenized PIC comparison over an epsilon list.
    VpCompare(CommonArgs),
    /// Identity and conservation diagnostics with pass/fail gates.
    Diagnostics(CommonArgs),
    /// Print the effective configuration (file merged with defaults) as TOML.
    PrintConfig(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::LinearSweep(a)
            | Command::DriftDemo(a)
            | Command::VpRun(a)
            | Command::VpCompare(a)
            | Command::Diagnostics(a)
            | Command::PrintConfig(a) => a,
        }
    }

    fn kind(&self) -> ExperimentKind {
        match self {
            Command::LinearSweep(_) | Command::PrintConfig(_) => ExperimentKind::LinearSweep,
            Command::DriftDemo(_) => ExperimentKind::DriftDemo,
            Command::VpRun(_) => ExperimentKind::VpRun,
            Command::VpCompare(_) => ExperimentKind::VpCompare,
            Command::Diagnostics(_) => ExperimentKind::Diagnostics,
        }
    }
}

fn load_config(args: &CommonArgs, kind: ExperimentKind) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    // The subcommand selects the experiment; a mismatching `kind` in the file
    // is overridden so one config can drive several commands.
    cfg.kind = kind;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.common().clone();
    let cfg = match load_config(&args, cli.command.kind()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
        {
            eprintln!("configuration error: cannot set worker count: {e}");
            return ExitCode::from(2);
        }
    }
    if matches!(cli.command, Command::PrintConfig(_)) {
        return match cfg.to_toml() {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("configuration error: {e:#}");
                ExitCode::from(2)
            }
        };
    }
    let ctx = RunContext {
        out_dir: args.out.clone(),
        timings: args.timings,
    };
    match dispatch(&cfg, &ctx) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            // Node budgets and solver blowups are numerical gates; everything
            // else at this stage is a configuration problem.
            let msg = format!("{e:#}");
            if msg.contains("node budget") || msg.contains("velocity magnitude") {
                eprintln!("numerical gate failure: {msg}");
                ExitCode::from(3)
            } else {
                eprintln!("configuration error: {msg}");
                ExitCode::from(2)
            }
        }
    }
}
