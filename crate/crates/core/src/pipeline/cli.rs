use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::stages::{self, RunDir};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "podsurge",
    version,
    about = "Surrogate models for pulsating impinging-jet heat transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write snapshot CSVs for the configured experiment.
    Generate(Common),
    /// Write the Taguchi case plan.
    Plan(Common),
    /// Compute and write the POD basis of the generated snapshots.
    Pod(Common),
    /// Train the experiment's networks; writes model JSON and loss CSVs.
    Train(Common),
    /// Write forecast CSVs from trained models.
    Predict(Common),
    /// Write the evaluation report JSON.
    Evaluate(Common),
    /// Write the report and plot-ready CSVs.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub const DEFAULT_OUT_DIR: &str = "podsurge-out";

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::MissingArtifact(_) => 3,
        Error::Io(_) => 4,
        Error::Format(_) => 5,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PODSURGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("PODSURGE_THREADS must be a positive integer, got '{raw}'")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cmd: Command) -> Result<Vec<String>> {
    let (Command::Generate(c)
    | Command::Plan(c)
    | Command::Pod(c)
    | Command::Train(c)
    | Command::Predict(c)
    | Command::Evaluate(c)
    | Command::Report(c)) = &cmd;
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let root = c
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| DEFAULT_OUT_DIR.into());
    let dir = RunDir::new(root);
    let show = |p: PathBuf| p.display().to_string();
    Ok(match cmd {
        Command::Generate(_) => {
            stages::stage_generate(&cfg, &dir)?;
            vec![format!(
                "generated {} data in {}",
                cfg.kind.as_str(),
                dir.root().display()
            )]
        }
        Command::Plan(_) => {
            let plan = stages::stage_plan(&cfg, &dir)?;
            vec![format!(
                "{} cases -> {}",
                plan.cases.len(),
                show(dir.path(stages::PLAN_FILE))
            )]
        }
        Command::Pod(_) => {
            let basis = stages::stage_pod(&cfg, &dir)?;
            vec![format!(
                "{} modes, energy {:.6} -> {}",
                basis.n_kept,
                basis.energy_captured,
                show(dir.path(stages::BASIS_FILE))
            )]
        }
        Command::Train(_) => {
            stages::stage_train(&cfg, &dir)?;
            vec![format!(
                "trained {} models in {}",
                cfg.kind.as_str(),
                dir.root().display()
            )]
        }
        Command::Predict(_) => stages::stage_predict(&cfg, &dir)?.into_iter().map(show).collect(),
        Command::Evaluate(_) => {
            stages::stage_evaluate(&cfg, &dir)?;
            vec![show(dir.path(stages::REPORT_FILE))]
        }
        Command::Report(_) => stages::stage_report(&cfg, &dir)?.into_iter().map(show).collect(),
    })
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = configure_threads().and_then(|_| execute(cli.command));
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("podsurge: {e}");
            exit_code(&e)
        }
    }
}
