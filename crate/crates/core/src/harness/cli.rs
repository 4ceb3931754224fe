//! `kapi` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::*;

#[derive(Debug, Parser)]
#[command(name = "kapi", about = "Meta-learned predictor with least-squares correction for parametric PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; the run directory is created inside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Print the training loss every N epochs (0 = silent).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Meta-train a predictor; writes checkpoint and loss history.
    Train(Common),
    /// Train if needed, correct every task and write the error report.
    Solve(Common),
    /// As `solve` but requires an existing checkpoint.
    Eval(Common),
    /// Guided corrector against background-only correctors.
    AblateGrid(Common),
    /// Meta-trained predictor against per-task training.
    AblateInstance(Common),
    /// Dump predictor and corrector geometry per task.
    ExportGeometry(Common),
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on
/// usage or configuration errors, 2 on numerical failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Config(_) | HarnessError::MissingCheckpoint(_) | HarnessError::Io(_) | HarnessError::Checkpoint(_) => 1,
        _ => 2,
    }
}

fn load(common: &Common, mode: Mode) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| ConfigError::BadValue { key: "--config".into(), value: format!("{}: {e}", common.config.display()) })?;
    let mut cfg = RunConfig::parse(&text, mode)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(c) = &common.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    Ok(cfg)
}

fn logger(every: usize) -> impl FnMut(usize, f64) {
    move |epoch, loss| {
        if every > 0 && epoch % every == 0 {
            eprintln!("epoch {epoch} loss {loss:.6e}");
        }
    }
}

fn run(command: Command) -> Result<(), HarnessError> {
    let (common, mode) = match &command {
        Command::Train(c) => (c, Mode::Train),
        Command::Solve(c) => (c, Mode::Solve),
        Command::Eval(c) => (c, Mode::Eval),
        Command::AblateGrid(c) => (c, Mode::AblateGrid),
        Command::AblateInstance(c) => (c, Mode::AblateInstance),
        Command::ExportGeometry(c) => (c, Mode::ExportGeometry),
    };
    let cfg = load(common, mode)?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    let log = logger(common.log_every);
    match mode {
        Mode::Train => {
            let outcome = train(&cfg, log)?;
            let path = save_training(&cfg, &outcome)?;
            println!("checkpoint {}", path.display());
            println!("history {}", dir.join("loss_history.txt").display());
        }
        Mode::Solve | Mode::Eval => {
            let prepared = prepare_model(&cfg, mode == Mode::Solve, log)?;
            let runs = run_predictor_corrector(&cfg, &prepared)?;
            for (k, r) in runs.iter().enumerate() {
                std::fs::write(dir.join(format!("dictionary_{k}.txt")), r.dictionary.dump())?;
            }
            let reports: Vec<ErrorReport> = runs.into_iter().map(|r| r.report).collect();
            let csv = reports_csv(&reports);
            std::fs::write(dir.join("report.csv"), &csv)?;
            print!("{csv}");
        }
        Mode::AblateGrid => {
            let prepared = prepare_model(&cfg, true, log)?;
            let csv = grid_ablation_csv(&ablate_uniform_grid(&cfg, &prepared.model)?);
            std::fs::write(dir.join("ablation_grid.csv"), &csv)?;
            print!("{csv}");
        }
        Mode::AblateInstance => {
            let prepared = prepare_model(&cfg, true, log)?;
            let csv = instance_ablation_csv(&ablate_single_instance(&cfg, &prepared)?);
            std::fs::write(dir.join("ablation_instance.csv"), &csv)?;
            print!("{csv}");
        }
        Mode::ExportGeometry => {
            let prepared = prepare_model(&cfg, true, log)?;
            for (k, task) in cfg.tasks.iter().enumerate() {
                let c = crate::corrector::correct(&prepared.model, task, &cfg.corrector)?;
                let path = dir.join(format!("geometry_{k}.csv"));
                export_geometry(&prepared.model, task, cfg.corrector.snapshots, Some(&c.dictionary), &path)?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
