use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use slamp::experiment::{cmd_audit, cmd_eval, cmd_prune_loop, cmd_sweep, cmd_train, RunConfig};

/// Train, prune and audit spiking networks with temporal layer-adaptive
/// magnitude pruning.
#[derive(Parser)]
#[command(name = "slamp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from scratch.
    Train(Common),
    /// Run the iterative prune / fine-tune schedule on a trained checkpoint.
    PruneLoop(Common),
    /// Evaluate a checkpoint on the eval split.
    Eval(Common),
    /// Audit worst-case pruning distortion of a checkpoint's dense layers.
    Audit(Common),
    /// Grid over pruning frequency and fine-tuning learning rate.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Input checkpoint (defaults to `<out>/checkpoint.slmp`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(c) => {
            let s = cmd_train(&c.load()?)?;
            println!(
                "trained {} epochs: eval top1 {:.4}, top5 {:.4}",
                s.epochs, s.eval.top1, s.eval.top5
            );
        }
        Command::PruneLoop(c) => {
            let (s, _) = cmd_prune_loop(&c.load()?, c.checkpoint.as_deref())?;
            println!(
                "{} stages: top1 {:.4} -> {:.4} at connectivity {:.4}",
                s.stages, s.baseline_top1, s.final_top1, s.final_connectivity
            );
        }
        Command::Eval(c) => {
            let r = cmd_eval(&c.load()?, c.checkpoint.as_deref())?;
            println!(
                "top1 {:.4} top5 {:.4} sops {:.1} membrane variance {:.4} connectivity {:.4}",
                r.top1, r.top5, r.sops, r.membrane_variance, r.connectivity
            );
        }
        Command::Audit(c) => {
            let s = cmd_audit(&c.load()?, c.checkpoint.as_deref())?;
            for skip in &s.skipped {
                eprintln!("skipped layer {}: {}", skip.layer, skip.reason);
            }
            println!("{} audit rows", s.reports.len());
        }
        Command::Sweep(c) => {
            let rows = cmd_sweep(&c.load()?, c.checkpoint.as_deref())?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("cell f={} lr={} failed: {}", r.frequency, r.learning_rate, r.error.as_deref().unwrap_or(""));
            }
            println!("{} sweep cells", rows.len());
        }
    }
    Ok(())
}
