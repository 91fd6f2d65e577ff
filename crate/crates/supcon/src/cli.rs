//! `supcon` command line.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{exit, Error, Result};
use crate::pipeline::{self, ModelChoice};
use crate::sweep;

/// Log filter variable, in `env_logger` syntax (`info`, `debug`,
/// `supcon_core=debug`, ...). Defaults to `info`.
pub const LOG_ENV: &str = "SUPCON_LOG";

#[derive(Debug, Parser)]
#[command(name = "supcon", version, about = "Supervised-contrastive ViT patch classification pipeline")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the run seed (weight init, shuffling, augmentation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate the synthetic patch corpus into <outdir>/data.
    Synth,
    /// Split the dataset by patient into train/val/test.
    Split,
    /// Contrastive pre-training of encoder and projection head.
    TrainStage1,
    /// Cache frozen-encoder features for every split.
    Extract,
    /// Train the linear classifier on cached features.
    TrainStage2,
    /// Cross-entropy fine-tuning baseline.
    TrainBaseline,
    /// Test-split metrics and per-patch predictions.
    Eval {
        #[arg(long, value_enum, default_value_t = ModelChoice::Supcon)]
        model: ModelChoice,
    },
    /// PCA projection of test-split representations.
    Pca {
        #[arg(long, value_enum, default_value_t = ModelChoice::Supcon)]
        model: ModelChoice,
    },
    /// Per-patient prediction maps from saved predictions.
    Predmap {
        #[arg(long, value_enum, default_value_t = ModelChoice::Supcon)]
        model: ModelChoice,
    },
    /// Run the configured [sweep].
    Sweep,
    /// synth (when no data.root) → split → train-stage1 → extract →
    /// train-stage2 → eval → pca → predmap.
    Pipeline,
}

/// Config file plus command-line overrides, validated.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(outdir) = &cli.outdir {
        cfg.outdir = outdir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth => {
            let n = pipeline::cmd_synth(cfg)?;
            println!("synth: {n} patches");
        }
        Command::Split => {
            let s = pipeline::cmd_split(cfg)?;
            println!("split: train {} / val {} / test {} patches", s.train.len(), s.val.len(), s.test.len());
        }
        Command::TrainStage1 => {
            let out = pipeline::cmd_train_stage1(cfg)?;
            let last = out.history.last().map(|r| r.loss).unwrap_or(f64::NAN);
            println!("train-stage1: {} epochs, final loss {last:.5}", out.history.len());
        }
        Command::Extract => {
            pipeline::cmd_extract(cfg)?;
            println!("extract: done");
        }
        Command::TrainStage2 => {
            let out = pipeline::cmd_train_stage2(cfg)?;
            println!("train-stage2: best val F1 {:.4} at epoch {}", out.best_f1, out.best_epoch);
        }
        Command::TrainBaseline => {
            let s = pipeline::cmd_train_baseline(cfg)?;
            println!("train-baseline: best val F1 {:.4} at epoch {}", s.best_val_f1, s.best_epoch);
        }
        Command::Eval { model } => {
            let report = pipeline::cmd_eval(cfg, model)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Pca { model } => {
            let s = pipeline::cmd_pca(cfg, model)?;
            println!("pca: explained variance ratio {:?}", s.explained_variance_ratio);
        }
        Command::Predmap { model } => {
            let maps = pipeline::cmd_predmap(cfg, model)?;
            println!("predmap: {} patient maps", maps.len());
        }
        Command::Sweep => {
            let table = sweep::cmd_sweep(cfg)?;
            for r in &table.rows {
                let f1 = r.val_f1.map(|v| format!("{v:.4}")).unwrap_or_else(|| "failed".into());
                println!("{}={}\tval F1 {f1}{}", table.axis, r.value, if r.best { "\t(best)" } else { "" });
            }
        }
        Command::Pipeline => {
            if cfg.data.root.is_none() {
                execute(Command::Synth, cfg)?;
            }
            for c in [
                Command::Split,
                Command::TrainStage1,
                Command::Extract,
                Command::TrainStage2,
                Command::Eval { model: ModelChoice::Supcon },
                Command::Pca { model: ModelChoice::Supcon },
                Command::Predmap { model: ModelChoice::Supcon },
            ] {
                execute(c, cfg)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::config("<args>", e.to_string()))?;
    let cfg = resolve_config(&cli)?;
    execute(cli.command, &cfg)
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match resolve_config(&cli).and_then(|cfg| execute(cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
